"""Shared WMMSE machinery for the single- and multi-user solvers.

The multi-user MISO problem is the single-user one with a diagonal receive
combiner ``M = diag(conj(m))`` (user k only sees its own antenna), so every
closed-form update below is written once for a generic ``(H, M, w)`` triple.

Each update minimizes the weighted MSE ``sum_i w_i e_i`` over one block of
variables subject to the total power budget. The objective is a convex
quadratic ``x^H F F^H x - 2 Re(b^H x)`` with a weighted power ``x^H diag(lam)
x``, so the stationary point for a multiplier ``alpha`` is
``(F F^H + alpha diag(lam)) x = b``. After whitening by ``lam^{-1/2}`` a thin
SVD of ``F`` diagonalizes the system and the power becomes the scalar
function ``sum_j |c_j|^2 / (s_j^2 + alpha)^2``, which the bisection searches.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from . import metrics
from .core import (
    FULL,
    SUB,
    AnalogBeamformer,
    DigitalPrecoder,
    HybridBeamformer,
    PartitionSpec,
    bisect_multiplier,
    complex_to_pairs,
    initial_beamformer,
    stacked_precoder,
)

log = logging.getLogger(__name__)

# rows/columns with squared norm below this carry no power and are frozen
ROW_FLOOR = 1e-14
# singular values below RCOND * s_max are treated as exact zeros
RCOND = 1e-7


@dataclass(frozen=True)
class SolverConfig:
    power: float = 1.0
    noise_power: float = 1.0
    max_iters: int = 500
    rel_tol: float = 1e-4
    bisect_tol: float = 1e-8
    init_seed: int = 0
    e_floor: float = metrics.E_FLOOR

    def __post_init__(self):
        if not self.power > 0 or not self.noise_power > 0:
            raise ValueError("power budget and noise power must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (self.rel_tol > 0 and self.bisect_tol > 0 and self.e_floor > 0):
            raise ValueError("tolerances must be positive")

    @classmethod
    def from_snr(cls, snr_db: float, power: float = 1.0, **kw) -> "SolverConfig":
        """``N0 = P / 10^(SNR/10)``."""
        return cls(power=power, noise_power=power * 10.0 ** (-snr_db / 10.0), **kw)


@dataclass
class SolverOutcome:
    """Result of one beamformer design.

    ``combiner`` is the ``(nr, ns)`` matrix ``M`` for single-user links and
    the vector of scalar receivers ``m_k`` for multi-user ones.
    """

    precoder: np.ndarray
    combiner: np.ndarray
    rates: np.ndarray
    trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = True
    beamformer: HybridBeamformer | None = None
    failed: bool = False
    message: str = ""
    info: dict = field(default_factory=dict)  # solver-specific diagnostics

    @property
    def sum_rate(self) -> float:
        return float(np.sum(self.rates)) if not self.failed else float("nan")

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.precoder) ** 2))

    def to_dict(self) -> dict:
        out = {}
        if self.beamformer is not None:
            out.update(self.beamformer.to_dict())
        out["precoder"] = [complex_to_pairs(col) for col in self.precoder.T]
        out["combiner"] = complex_to_pairs(self.combiner)
        out["rates"] = [float(r) for r in self.rates]
        out["sum_rate"] = self.sum_rate
        out["trace"] = [float(r) for r in self.trace]
        out["iterations"] = self.iterations
        out["converged"] = self.converged
        if self.failed:
            out["failed"] = True
            out["message"] = self.message
        return out


def failed_outcome(nt: int, ns: int, message: str) -> SolverOutcome:
    return SolverOutcome(
        precoder=np.zeros((nt, ns), dtype=complex),
        combiner=np.zeros(0, dtype=complex),
        rates=np.full(ns, np.nan),
        iterations=0,
        converged=False,
        failed=True,
        message=message,
    )


# ---------------------------------------------------------------------------
# power-constrained quadratic solve
# ---------------------------------------------------------------------------


def constrained_solve(F, B, lam, budget, tol=1e-8):
    """Solve ``(F F^H + alpha diag(lam)) X = B`` with the bisection multiplier.

    ``F`` is ``(..., m, r)``, ``B`` is ``(..., m, k)`` and ``lam`` is
    ``(..., m)`` with positive entries; leading axes are independent blocks
    that share one multiplier. ``B`` must lie in the range of ``F`` (true
    for every WMMSE update, whose objective is bounded below). Returns
    ``(X, alpha)`` where ``alpha`` is the smallest multiplier keeping
    ``sum lam |X|^2`` within the budget.
    """
    scale = 1.0 / np.sqrt(lam)
    Ft = scale[..., :, None] * F
    Bt = scale[..., :, None] * B
    U, s, _ = np.linalg.svd(Ft, full_matrices=False)
    smax = np.max(s) if s.size else 0.0
    keep = s > RCOND * smax if smax > 0 else np.zeros_like(s, dtype=bool)
    ev = np.where(keep, s * s, 1.0)
    C = np.swapaxes(U.conj(), -1, -2) @ Bt
    C = np.where(keep[..., None], C, 0.0)
    c2 = np.sum(np.abs(C) ** 2, axis=-1)

    def power(alpha: float) -> float:
        return float(np.sum(c2 / (ev + alpha) ** 2))

    alpha = bisect_multiplier(power, budget, tol)
    X = scale[..., :, None] * (U @ (C / (ev + alpha)[..., None]))
    return X, alpha


# ---------------------------------------------------------------------------
# closed-form block updates
# ---------------------------------------------------------------------------


def update_digital(H, a, M, w, budget, tol=1e-8):
    """Weighted-MMSE digital precoder for fixed analog vectors.

    ``D = (A^H H^H M W M^H H A + alpha A^H A)^{-1} A^H H^H M W``. RF chains
    whose analog vector is (numerically) zero get a zero digital row.
    """
    na, n = a.shape
    Hb = H.reshape(H.shape[0], na, n)
    HA = np.einsum("rin,in->ri", Hb, a)
    lam = np.sum(np.abs(a) ** 2, axis=1)
    active = lam >= ROW_FLOOR
    sw = np.sqrt(w)
    Phi = HA[:, active].conj().T @ (M * sw)
    B = Phi * sw
    D = np.zeros((na, M.shape[1]), dtype=complex)
    X, alpha = constrained_solve(Phi, B, lam[active], budget, tol)
    D[active] = X
    return D, alpha


def update_analog_full(H, a, D, M, w, budget, tol=1e-8):
    """Analog vectors for fixed digital precoder (full-array processing).

    All subarrays are solved simultaneously under one multiplier, so each
    returned ``a_i`` satisfies its own first-order condition given the
    others. Subarrays whose digital row has ``||d_i||^2 < ROW_FLOOR`` are
    left unchanged and flagged in the returned mask.
    """
    na, n = a.shape
    nt = na * n
    row = np.sum(np.abs(D) ** 2, axis=1)
    active = row >= ROW_FLOOR
    if not np.any(active):
        return a.copy(), 0.0, ~active
    sw = np.sqrt(w)
    Phi = H.conj().T @ (M * sw)                      # (nt, ns)
    Psi = np.repeat(D.conj(), n, axis=0)             # (nt, ns)
    mask = np.repeat(active, n)
    F = (Phi[:, :, None] * Psi[:, None, :]).reshape(nt, -1)[mask]
    b = np.sum(Phi * sw * Psi, axis=1)[mask]
    lam = np.repeat(row[active], n)
    # frozen subarrays do not couple into the active ones; their residual
    # power (below ROW_FLOOR * ||a_i||^2) is charged to the budget
    frozen = float(np.sum(np.sum(np.abs(a[~active]) ** 2, axis=1) * row[~active]))
    x, alpha = constrained_solve(F, b[:, None], lam, budget - frozen, tol)
    a_new = a.copy()
    a_new[active] = x[:, 0].reshape(-1, n)
    if not np.all(active):
        log.warning("analog update skipped %d subarray(s) with zero digital rows", int(np.sum(~active)))
    return a_new, alpha, ~active


def update_analog_sub(H, a, M, w, budget, tol=1e-8):
    """Analog vectors with identity digital precoder (subarray processing).

    ``a_j = (H_j^H M W M^H H_j + alpha I)^{-1} H_j^H m_j w_j``; the blocks
    decouple except through the shared multiplier.
    """
    na, n = a.shape
    Hb = np.transpose(H.reshape(H.shape[0], na, n), (1, 2, 0)).conj()  # (na, n, nr) = H_j^H
    sw = np.sqrt(w)
    F = Hb @ (M * sw)                                               # (na, n, ns)
    b = np.einsum("jnr,rj->jn", Hb, M[:, :na]) * w[:na, None]       # H_j^H m_j w_j
    X, alpha = constrained_solve(F, b[:, :, None], np.ones((na, n)), budget, tol)
    return X[:, :, 0], alpha


# ---------------------------------------------------------------------------
# alternating optimization loop
# ---------------------------------------------------------------------------


def _receiver_and_weights(H, V, N0, diagonal, e_floor):
    if diagonal:
        m = metrics.mu_mmse_receiver(H, V, N0)
        e = metrics.mu_user_errors(H, V, m, N0)
        M = np.diag(m.conj())
        return M, m, metrics.weights_from_errors(e, e_floor)
    M = metrics.mmse_receiver(H, V, N0)
    e = np.real(np.diag(metrics.su_error_matrix(H, V, M, N0)))
    return M, M, metrics.weights_from_errors(e, e_floor)


def _rates(H, V, N0, diagonal):
    if diagonal:
        return metrics.mu_user_rates(H, V, N0)
    return metrics.su_stream_rates(H, V, N0)


def run_wmmse(H, hb0: HybridBeamformer, cfg: SolverConfig, diagonal: bool, update_analog: bool = True) -> SolverOutcome:
    """Alternate receiver, weights, digital and analog updates until the
    relative sum-rate change falls below ``cfg.rel_tol``.

    ``hb0.mode`` selects full-array (digital + analog updates) or subarray
    processing (analog only). ``update_analog=False`` freezes the analog
    stage, which with ``n = 1`` and unit analog gains is the fully digital
    WMMSE algorithm.
    """
    H = np.asarray(H, dtype=complex)
    part = hb0.partition
    if H.shape[1] != part.nt:
        raise ValueError(f"channel has {H.shape[1]} columns, partition expects nt={part.nt}")
    if not diagonal and part.ns > H.shape[0]:
        raise ValueError(f"ns={part.ns} exceeds nr={H.shape[0]}")
    if diagonal and H.shape[0] != part.ns:
        raise ValueError(f"{H.shape[0]} users but ns={part.ns}")
    N0, P, tol = cfg.noise_power, cfg.power, cfg.bisect_tol
    full = hb0.mode == FULL
    a = hb0.analog.vectors.copy()
    D = hb0.digital.matrix.copy()

    V = stacked_precoder(a, D)
    prev = float(np.sum(_rates(H, V, N0, diagonal)))
    trace = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        M, rx, w = _receiver_and_weights(H, V, N0, diagonal, cfg.e_floor)
        if full:
            D, _ = update_digital(H, a, M, w, P, tol)
            if update_analog:
                a, _, _ = update_analog_full(H, a, D, M, w, P, tol)
        else:
            a, _ = update_analog_sub(H, a, M, w, P, tol)
        V = stacked_precoder(a, D)
        rate = float(np.sum(_rates(H, V, N0, diagonal)))
        trace.append(rate)
        if abs(rate - prev) <= cfg.rel_tol * max(abs(prev), 1e-300):
            converged = True
            break
        prev = rate

    V = stacked_precoder(a, D)
    if diagonal:
        rx = metrics.mu_mmse_receiver(H, V, N0)
    else:
        rx = metrics.mmse_receiver(H, V, N0)
    digital = DigitalPrecoder.identity(part.na) if not full else DigitalPrecoder(D, FULL)
    hb = HybridBeamformer(AnalogBeamformer(a), digital, part)
    return SolverOutcome(
        precoder=V,
        combiner=rx,
        rates=_rates(H, V, N0, diagonal),
        trace=trace,
        iterations=it,
        converged=converged,
        beamformer=hb,
    )


def digital_start(nt: int, ns: int, cfg: SolverConfig) -> HybridBeamformer:
    """Fully digital start: the ``n = 1`` hybrid initialization folded into D.

    The analog stage becomes all-ones (``A = I``) and ``D = A0 D0``, so the
    digital and ``na = nt`` hybrid solvers begin from the same precoder.
    """
    part = PartitionSpec(nt, nt, ns)
    hb0 = initial_beamformer(part, cfg.power, cfg.init_seed, FULL)
    V0 = hb0.precoder()
    return HybridBeamformer(AnalogBeamformer(np.ones((nt, 1), dtype=complex)), DigitalPrecoder(V0, FULL), part)


def waterfill(gains, power: float, noise_power: float) -> np.ndarray:
    """Waterfilling ``P_i = max(mu - N0 / g_i, 0)`` with ``sum P_i = P``.

    Zero gains receive zero power.

    Examples
    --------
    >>> waterfill([2.0, 1.0], 1.0, 1.0)
    array([0.75, 0.25])
    """
    g = np.asarray(gains, dtype=float)
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise ValueError("gains must be finite and nonnegative")
    if not power > 0 or not noise_power > 0:
        raise ValueError("power and noise power must be positive")
    if not np.any(g > 0):
        raise ValueError("all channel gains are zero")
    pos = np.flatnonzero(g > 0)
    floor = noise_power / g[pos]
    order = np.argsort(floor, kind="stable")
    f = floor[order]
    csum = np.cumsum(f)
    k = len(f)
    while k > 1:
        mu = (power + csum[k - 1]) / k
        if mu > f[k - 1]:
            break
        k -= 1
    # P_i = (P + sum_j (f_j - f_i)) / k avoids cancelling mu against a large floor
    active = f[:k]
    p = np.zeros_like(g)
    p[pos[order[:k]]] = (power + np.sum(active[None, :] - active[:, None], axis=1)) / k
    return p


def water_level(gains, powers, noise_power: float) -> float:
    g = np.asarray(gains, dtype=float)
    p = np.asarray(powers, dtype=float)
    on = p > 0
    return float(np.mean(p[on] + noise_power / g[on]))


def config_dict(cfg: SolverConfig) -> dict:
    return asdict(cfg)

