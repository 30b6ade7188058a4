"""Multi-user MISO downlink beamformer design.

Rows of the ``(nu, nt)`` channel ``Hu`` are ``h_k^H``; user k decodes stream
k with a scalar receiver ``m_k``. The WMMSE solvers reuse the single-user
updates with the diagonal combiner ``M = diag(conj(m))``.

Subarray ZF stacks, for subarray k, the ``nu x n`` slice ``G_k`` whose row j
is the subarray-k part of user j's channel, and keeps column k of its
right pseudo-inverse so subarray k reaches only user k.
"""

from __future__ import annotations

import numpy as np

from .core import FULL, SUB, AnalogBeamformer, DigitalPrecoder, HybridBeamformer, PartitionSpec, initial_beamformer, stacked_precoder
from .metrics import mu_mmse_receiver, mu_user_rates
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
    "mu_mmse_receiver",
    "mu_sa_receiver",
    "mu_fa_update_digital",
    "mu_fa_update_analog",
    "mu_sa_update_analog",
    "solve_mu_fa_wmmse",
    "solve_mu_sa_wmmse",
    "mu_subarray_zf",
    "digital_mu_wmmse",
    "digital_mu_zf",
]

ZF_MAX_COND = 1e12


def _check(Hu, nt: int):
    Hu = np.asarray(Hu, dtype=complex)
    if Hu.ndim != 2 or Hu.shape[1] != nt:
        raise ValueError(f"user channels have shape {Hu.shape}, expected (nu, {nt})")
    return Hu


def _diag_combiner(m):
    return np.diag(np.conj(np.asarray(m, dtype=complex)))


def mu_sa_receiver(Hu, partition: PartitionSpec, a, N0: float) -> np.ndarray:
    """Scalar MMSE receivers when subarray k carries user k's stream."""
    Hu = _check(Hu, partition.nt)
    return mu_mmse_receiver(Hu, stacked_precoder(np.asarray(a, dtype=complex), np.eye(partition.na)), N0)


def mu_fa_update_digital(Hu, partition, a, m, w, power, tol=1e-8):
    """Digital precoder step of the MU full-array algorithm; returns ``(D, alpha)``."""
    Hu = _check(Hu, partition.nt)
    return update_digital(Hu, np.asarray(a, dtype=complex), _diag_combiner(m), np.asarray(w, dtype=float), power, tol)


def mu_fa_update_analog(Hu, partition, a, D, m, w, power, tol=1e-8):
    """Analog step of the MU full-array algorithm; returns ``(a, alpha, skipped)``."""
    Hu = _check(Hu, partition.nt)
    return update_analog_full(Hu, np.asarray(a, dtype=complex), np.asarray(D, dtype=complex),
                              _diag_combiner(m), np.asarray(w, dtype=float), power, tol)


def mu_sa_update_analog(Hu, partition, a, m, w, power, tol=1e-8):
    """Analog step of the MU subarray algorithm; returns ``(a, alpha)``."""
    Hu = _check(Hu, partition.nt)
    if not (partition.ns == partition.na == Hu.shape[0]):
        raise ValueError("subarray processing requires nu == ns == na")
    return update_analog_sub(Hu, np.asarray(a, dtype=complex), _diag_combiner(m), np.asarray(w, dtype=float), power, tol)


def solve_mu_fa_wmmse(Hu, partition: PartitionSpec, cfg: SolverConfig) -> SolverOutcome:
    """Full-array hybrid WMMSE for the downlink: m -> w -> D -> {a_i}."""
    Hu = _check(Hu, partition.nt)
    if Hu.shape[0] != partition.ns:
        raise ValueError(f"{Hu.shape[0]} users but ns={partition.ns}; one stream per user")
    hb0 = initial_beamformer(partition, cfg.power, cfg.init_seed, FULL)
    return run_wmmse(Hu, hb0, cfg, diagonal=True)


def solve_mu_sa_wmmse(Hu, partition: PartitionSpec, cfg: SolverConfig) -> SolverOutcome:
    """Subarray hybrid WMMSE: subarray k serves user k."""
    Hu = _check(Hu, partition.nt)
    if not (Hu.shape[0] == partition.ns == partition.na):
        raise ValueError(f"subarray processing requires nu == ns == na, got nu={Hu.shape[0]}, {partition}")
    hb0 = initial_beamformer(partition, cfg.power, cfg.init_seed, SUB)
    return run_wmmse(Hu, hb0, cfg, diagonal=True)


def digital_mu_wmmse(Hu, cfg: SolverConfig) -> SolverOutcome:
    """Fully digital downlink WMMSE from the ``na = nt`` hybrid initialization."""
    Hu = np.asarray(Hu, dtype=complex)
    out = run_wmmse(Hu, digital_start(Hu.shape[1], Hu.shape[0], cfg), cfg, diagonal=True, update_analog=False)
    out.beamformer = None
    return out


def _right_inverse(G) -> np.ndarray:
    """``G^H (G G^H)^{-1}``; raises ``LinAlgError`` if ``G`` lacks full row rank."""
    gram = G @ G.conj().T
    if np.linalg.cond(gram) > ZF_MAX_COND:
        raise np.linalg.LinAlgError("Gram matrix is singular")
    return G.conj().T @ np.linalg.inv(gram)


def _loaded(Hu, Vbar, power, N0):
    gains = np.abs(np.einsum("kt,tk->k", Hu, Vbar)) ** 2
    powers = waterfill(gains, power, N0)
    V = Vbar * np.sqrt(powers)
    return V, gains, powers


def _finish(Hu, V, N0, **info) -> SolverOutcome:
    return SolverOutcome(
        precoder=V,
        combiner=mu_mmse_receiver(Hu, V, N0),
        rates=mu_user_rates(Hu, V, N0),
        iterations=0,
        converged=True,
        info=info,
    )


def mu_subarray_zf(Hu, partition: PartitionSpec, power: float, N0: float) -> SolverOutcome:
    """Per-subarray ZF toward each user followed by waterfilling.

    Requires ``n >= nu``; a singular per-subarray Gram matrix yields an
    outcome with ``failed=True``.
    """
    Hu = _check(Hu, partition.nt)
    nu = Hu.shape[0]
    if not (nu == partition.ns == partition.na):
        raise ValueError(f"subarray ZF requires nu == ns == na, got nu={nu}, {partition}")
    if partition.n < nu:
        raise ValueError(f"subarray ZF needs n >= nu antennas per subarray (n={partition.n}, nu={nu})")
    blocks = partition.blocks(Hu)                  # (nu, na, n)
    beams = np.zeros((partition.na, partition.n), dtype=complex)
    for k in range(nu):
        try:
            col = _right_inverse(blocks[:, k, :])[:, k]
        except np.linalg.LinAlgError:
            return failed_outcome(partition.nt, nu, f"subarray {k}: user channels are linearly dependent")
        beams[k] = col / np.linalg.norm(col)
    Vbar = stacked_precoder(beams, np.eye(nu))
    V, gains, powers = _loaded(Hu, Vbar, power, N0)
    out = _finish(Hu, V, N0, unit_precoder=Vbar, gains=gains, powers=powers)
    amp = np.sqrt(powers)
    out.beamformer = HybridBeamformer(AnalogBeamformer(beams * amp[:, None]), DigitalPrecoder.identity(nu), partition)
    return out


def digital_mu_zf(Hu, power: float, N0: float) -> SolverOutcome:
    """Fully digital ZF ``H^H (H H^H)^{-1}`` with normalized columns and waterfilling."""
    Hu = np.asarray(Hu, dtype=complex)
    try:
        Vbar = _right_inverse(Hu)
    except np.linalg.LinAlgError:
        return failed_outcome(Hu.shape[1], Hu.shape[0], "user channels are linearly dependent")
    Vbar = Vbar / np.linalg.norm(Vbar, axis=0)
    V, gains, powers = _loaded(Hu, Vbar, power, N0)
    return _finish(Hu, V, N0, unit_precoder=Vbar, gains=gains, powers=powers)
