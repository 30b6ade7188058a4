"""Single-user MIMO beamformer design for the partially connected array.

Hybrid designs: full-array WMMSE (dense digital precoder plus analog
vectors), subarray WMMSE (identity digital precoder, one stream per
subarray) and transmit-receive zero forcing with waterfilling. Baselines:
fully digital SVD with waterfilling, single-stream beamforming on the
dominant singular pair and fully digital WMMSE.
"""

from __future__ import annotations

import numpy as np


from .core import FULL, SUB, AnalogBeamformer, DigitalPrecoder, HybridBeamformer, PartitionSpec, initial_beamformer, stacked_precoder
from .metrics import mmse_receiver
from .solver import (
    SolverConfig,
    SolverOutcome,
    digital_start,
    failed_outcome,
    run_wmmse,
    update_analog_full,
    update_analog_sub,
    update_digital,
    waterfill,
)

__all__ = [
    "mmse_receiver",
    "fa_update_digital",
    "fa_update_analog",
    "sa_update_analog",
    "solve_fa_wmmse",
    "solve_sa_wmmse",
    "digital_su_wmmse",
    "zf_subarray_precoder",
    "zf_combiner",
    "txrx_zf",
    "waterfill",
    "digital_svd_baseline",
    "analog_single_stream",
]

# Gram matrices with a larger condition number are treated as singular
ZF_MAX_COND = 1e12


def _check(H, partition: PartitionSpec):
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[1] != partition.nt:
        raise ValueError(f"channel shape {H.shape} does not match nt={partition.nt}")
    return H


def fa_update_digital(H, partition, a, M, w, power, tol=1e-8):
    """Digital precoder step of the full-array algorithm; returns ``(D, alpha)``."""
    H = _check(H, partition)
    return update_digital(H, np.asarray(a, dtype=complex), M, np.asarray(w, dtype=float), power, tol)


def fa_update_analog(H, partition, a, D, M, w, power, tol=1e-8):
    """Analog step of the full-array algorithm; returns ``(a, alpha, skipped)``."""
    H = _check(H, partition)
    return update_analog_full(H, np.asarray(a, dtype=complex), np.asarray(D, dtype=complex), M,
                              np.asarray(w, dtype=float), power, tol)


def sa_update_analog(H, partition, a, M, w, power, tol=1e-8):
    """Analog step of the subarray algorithm; returns ``(a, alpha)``."""
    H = _check(H, partition)
    if partition.ns != partition.na:
        raise ValueError("subarray processing requires ns == na")
    return update_analog_sub(H, np.asarray(a, dtype=complex), M, np.asarray(w, dtype=float), power, tol)


def solve_fa_wmmse(H, partition: PartitionSpec, cfg: SolverConfig) -> SolverOutcome:
    """Full-array hybrid WMMSE: M -> W -> D -> {a_i} until the sum rate settles."""
    H = _check(H, partition)
    if partition.ns > min(H.shape[0], partition.na):
        raise ValueError(f"ns={partition.ns} exceeds min(nr={H.shape[0]}, na={partition.na})")
    hb0 = initial_beamformer(partition, cfg.power, cfg.init_seed, FULL)
    return run_wmmse(H, hb0, cfg, diagonal=False)


def solve_sa_wmmse(H, partition: PartitionSpec, cfg: SolverConfig) -> SolverOutcome:
    """Subarray hybrid WMMSE: stream i is carried by subarray i alone."""
    H = _check(H, partition)
    if partition.ns > H.shape[0]:
        raise ValueError(f"ns={partition.ns} exceeds nr={H.shape[0]}")
    hb0 = initial_beamformer(partition, cfg.power, cfg.init_seed, SUB)
    return run_wmmse(H, hb0, cfg, diagonal=False)


def digital_su_wmmse(H, ns: int, cfg: SolverConfig) -> SolverOutcome:
    """Fully digital WMMSE, started from the ``na = nt`` hybrid initialization."""
    H = np.asarray(H, dtype=complex)
    if ns > H.shape[0]:
        raise ValueError(f"ns={ns} exceeds nr={H.shape[0]}")
    out = run_wmmse(H, digital_start(H.shape[1], ns, cfg), cfg, diagonal=False, update_analog=False)
    out.beamformer = None
    return out


# ---------------------------------------------------------------------------
# transmit-receive zero forcing
# ---------------------------------------------------------------------------


class _Singular(Exception):
    pass


def _solve_gram(G, rhs):
    if np.linalg.cond(G) > ZF_MAX_COND:
        raise _Singular
    return np.linalg.solve(G, rhs)


def zf_subarray_precoder(H, partition: PartitionSpec, M) -> np.ndarray:
    """Unit-norm per-subarray ZF beams, shape ``(na, n)``.

    Subarray i zero-forces its effective channel ``M^H H_i`` and keeps
    column i of ``H_i^H M (M^H H_i H_i^H M)^{-1}``, so its beam reaches only
    combiner i. Raises ``numpy.linalg.LinAlgError`` if a Gram matrix is
    singular.
    """
    Hb = partition.blocks(H)
    beams = np.zeros((partition.na, partition.n), dtype=complex)
    for i in range(partition.ns):
        T = M.conj().T @ Hb[:, i, :]                     # (ns, n)
        try:
            x = _solve_gram(T @ T.conj().T, np.eye(partition.ns)[:, i])
        except _Singular:
            raise np.linalg.LinAlgError(f"effective channel of subarray {i} is rank deficient") from None
        col = T.conj().T @ x
        beams[i] = col / np.linalg.norm(col)
    return beams


def zf_combiner(H, Vbar) -> np.ndarray:
    """Unnormalized ZF combiner with ``M^H = (Vbar^H H^H H Vbar)^{-1} Vbar^H H^H``."""
    He = H @ Vbar
    try:
        X = _solve_gram(He.conj().T @ He, He.conj().T)
    except _Singular:
        raise np.linalg.LinAlgError("effective channel H Vbar is rank deficient") from None
    return X.conj().T


def txrx_zf(H, partition: PartitionSpec, cfg: SolverConfig) -> SolverOutcome:
    """Alternate per-subarray ZF precoding and ZF combining, then waterfill.

    The combiner starts from the ``ns`` dominant left singular vectors of
    ``H``. Each pass ends with a combiner step, so the returned link has
    ``M^H H V`` diagonal. A rank-deficient effective channel yields an
    outcome with ``failed=True`` instead of an exception.
    """
    H = _check(H, partition)
    ns, N0, P = partition.ns, cfg.noise_power, cfg.power
    if ns != partition.na:
        raise ValueError("transmit-receive ZF requires ns == na")
    if partition.n < ns or H.shape[0] < ns:
        raise ValueError(f"ZF needs n >= ns and nr >= ns (n={partition.n}, nr={H.shape[0]}, ns={ns})")

    U, _, _ = np.linalg.svd(H)
    M = U[:, :ns]
    eye = np.eye(ns)
    trace = []
    prev = None
    converged = False
    it = 0
    try:
        for it in range(1, cfg.max_iters + 1):
            beams = zf_subarray_precoder(H, partition, M)
            Vbar = stacked_precoder(beams, eye)
            M = zf_combiner(H, Vbar)
            M = M / np.linalg.norm(M, axis=0)
            gains = np.abs(np.diag(M.conj().T @ H @ Vbar)) ** 2
            powers = waterfill(gains, P, N0)
            rate = float(np.sum(np.log2(1.0 + powers * gains / N0)))
            trace.append(rate)
            if prev is not None and abs(rate - prev) <= cfg.rel_tol * abs(prev):
                converged = True
                break
            prev = rate
    except (np.linalg.LinAlgError, ValueError) as exc:
        out = failed_outcome(partition.nt, ns, f"transmit-receive ZF failed: {exc}")
        out.trace = trace
        out.iterations = it
        return out

    amp = np.sqrt(powers)
    hb = HybridBeamformer(AnalogBeamformer(beams * amp[:, None]), DigitalPrecoder.identity(ns), partition)
    return SolverOutcome(
        precoder=Vbar * amp,
        combiner=M,
        rates=np.log2(1.0 + powers * gains / N0),
        trace=trace,
        iterations=it,
        converged=converged,
        beamformer=hb,
        info={"unit_precoder": Vbar, "powers": powers, "gains": gains},
    )


# ---------------------------------------------------------------------------
# fully digital and single-stream baselines
# ---------------------------------------------------------------------------


def digital_svd_baseline(H, power: float, noise_power: float, ns: int) -> SolverOutcome:
    """Eigen-beamforming on the top ``ns`` singular pairs with waterfilling.

    This is the rate-optimal fully digital design for ``ns`` streams and
    upper-bounds every hybrid design on the same channel.
    """
    H = np.asarray(H, dtype=complex)
    U, s, Vh = np.linalg.svd(H)
    k = min(ns, len(s))
    gains = s[:k] ** 2
    powers = waterfill(gains, power, noise_power)
    V = Vh.conj().T[:, :k] * np.sqrt(powers)
    return SolverOutcome(
        precoder=V,
        combiner=U[:, :k],
        rates=np.log2(1.0 + powers * gains / noise_power),
        iterations=0,
        converged=True,
        info={"powers": powers, "gains": gains},
    )


def analog_single_stream(H, power: float, noise_power: float) -> SolverOutcome:
    """Full power on the dominant singular pair: ``log2(1 + P s_1^2 / N0)``."""
    H = np.asarray(H, dtype=complex)
    U, s, Vh = np.linalg.svd(H)
    V = np.sqrt(power) * Vh.conj().T[:, :1]
    return SolverOutcome(
        precoder=V,
        combiner=U[:, :1],
        rates=np.array([np.log2(1.0 + power * s[0] ** 2 / noise_power)]),
        iterations=0,
        converged=True,
    )



