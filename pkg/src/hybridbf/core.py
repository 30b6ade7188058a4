"""Partially connected hybrid beamformer data model.

The transmit array of ``nt`` antennas is split into ``na`` disjoint subarrays
of ``n = nt / na`` antennas, each driven by one RF chain. The analog stage is
kept as an ``(na, n)`` array whose row ``i`` is the subarray vector ``a_i``;
the block-diagonal ``nt x na`` matrix is only materialized on request.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "PartitionSpec",
    "AnalogBeamformer",
    "DigitalPrecoder",
    "HybridBeamformer",
    "BisectionError",
    "assemble_analog",
    "effective_precoder",
    "transmit_power",
    "bisect_multiplier",
    "initial_beamformer",
    "complex_to_pairs",
    "pairs_to_complex",
]

FULL = "full"
SUB = "sub"


@dataclass(frozen=True)
class PartitionSpec:
    """Subarray layout: ``nt`` antennas, ``na`` RF chains, ``ns`` streams."""

    nt: int
    na: int
    ns: int

    def __post_init__(self):
        if self.nt < 1 or self.na < 1 or self.ns < 1:
            raise ValueError(f"nt, na, ns must be positive, got {self}")
        if self.nt % self.na:
            raise ValueError(f"na={self.na} does not divide nt={self.nt}")
        if self.ns > self.na:
            raise ValueError(f"ns={self.ns} exceeds the number of RF chains na={self.na}")

    @property
    def n(self) -> int:
        """Antennas per subarray."""
        return self.nt // self.na

    def blocks(self, H: np.ndarray) -> np.ndarray:
        """View an ``(nr, nt)`` channel as ``(nr, na, n)`` sub-channels H_j."""
        H = np.asarray(H)
        if H.shape[-1] != self.nt:
            raise ValueError(f"channel has {H.shape[-1]} columns, expected nt={self.nt}")
        return H.reshape(H.shape[0], self.na, self.n)

    def to_dict(self) -> dict:
        return {"nt": self.nt, "na": self.na, "ns": self.ns}


@dataclass(frozen=True)
class AnalogBeamformer:
    """Subarray vectors ``a_i`` stored row-wise, shape ``(na, n)``.

    Amplitude and phase are both free; there is no unit-modulus constraint.
    """

    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=complex)
        if v.ndim != 2:
            raise ValueError(f"analog vectors must be 2-D (na, n), got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("analog vectors contain non-finite entries")
        object.__setattr__(self, "vectors", v)

    @property
    def na(self) -> int:
        return self.vectors.shape[0]

    @property
    def n(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class DigitalPrecoder:
    """Baseband precoder ``D`` (na x ns).

    In subarray mode the matrix is the identity and only routes streams to
    RF chains; all power then lives in the analog vectors.
    """

    matrix: np.ndarray
    mode: str = FULL

    def __post_init__(self):
        D = np.asarray(self.matrix, dtype=complex)
        if D.ndim != 2:
            raise ValueError(f"digital precoder must be 2-D, got shape {D.shape}")
        if self.mode not in (FULL, SUB):
            raise ValueError(f"unknown precoder mode {self.mode!r}")
        if self.mode == SUB and (D.shape[0] != D.shape[1] or not np.array_equal(D, np.eye(D.shape[0]))):
            raise ValueError("subarray mode requires the identity digital precoder")
        object.__setattr__(self, "matrix", D)

    @classmethod
    def identity(cls, na: int) -> "DigitalPrecoder":
        return cls(np.eye(na, dtype=complex), SUB)


@dataclass(frozen=True)
class HybridBeamformer:
    analog: AnalogBeamformer
    digital: DigitalPrecoder
    partition: PartitionSpec

    def __post_init__(self):
        p = self.partition
        if self.analog.vectors.shape != (p.na, p.n):
            raise ValueError(
                f"analog shape {self.analog.vectors.shape} does not match partition ({p.na}, {p.n})"
            )
        if self.digital.matrix.shape != (p.na, p.ns):
            raise ValueError(
                f"digital shape {self.digital.matrix.shape} does not match partition ({p.na}, {p.ns})"
            )

    @property
    def mode(self) -> str:
        return self.digital.mode

    def precoder(self) -> np.ndarray:
        return effective_precoder(self)

    def power(self) -> float:
        return transmit_power(self)

    def to_dict(self) -> dict:
        return {
            "partition": self.partition.to_dict(),
            "analog": [complex_to_pairs(a) for a in self.analog.vectors],
            "digital": [complex_to_pairs(row) for row in self.digital.matrix],
            "mode": self.mode,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "HybridBeamformer":
        part = PartitionSpec(**obj["partition"])
        analog = AnalogBeamformer(np.array([pairs_to_complex(a) for a in obj["analog"]]))
        D = np.array([pairs_to_complex(row) for row in obj["digital"]]).reshape(part.na, part.ns)
        return cls(analog, DigitalPrecoder(D, obj.get("mode", FULL)), part)


def complex_to_pairs(x) -> list:
    """Flatten a complex array into ``[[re, im], ...]`` (row-major)."""
    x = np.asarray(x, dtype=complex).ravel()
    return [[float(z.real), float(z.imag)] for z in x]


def pairs_to_complex(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    return arr[:, 0] + 1j * arr[:, 1]


def assemble_analog(partition: PartitionSpec, subarray_vectors) -> np.ndarray:
    """Block-diagonal ``nt x na`` analog matrix with ``a_i`` on block ``(i, i)``."""
    a = np.asarray(subarray_vectors, dtype=complex)
    if a.shape != (partition.na, partition.n):
        raise ValueError(f"expected {partition.na} vectors of length {partition.n}, got shape {a.shape}")
    A = np.zeros((partition.nt, partition.na), dtype=complex)
    n = partition.n
    for i in range(partition.na):
        A[i * n:(i + 1) * n, i] = a[i]
    return A


def stacked_precoder(a: np.ndarray, D: np.ndarray) -> np.ndarray:
    """``A @ D`` computed from the ``(na, n)`` subarray rows without forming ``A``."""
    na, n = a.shape
    return (a[:, :, None] * D[:, None, :]).reshape(na * n, D.shape[1])


def effective_precoder(hb: HybridBeamformer) -> np.ndarray:
    """Overall precoder ``V = A D`` (nt x ns); column i stacks ``a_j d_ji``."""
    return stacked_precoder(hb.analog.vectors, hb.digital.matrix)


def transmit_power(hb: HybridBeamformer) -> float:
    """``tr(A D D^H A^H) = sum_i ||a_i||^2 ||d_i||^2``."""
    row_gain = np.sum(np.abs(hb.digital.matrix) ** 2, axis=1)
    return float(np.sum(np.sum(np.abs(hb.analog.vectors) ** 2, axis=1) * row_gain))


class BisectionError(RuntimeError):
    """Multiplier search did not converge; ``bracket`` holds the last interval."""

    def __init__(self, message: str, bracket: tuple[float, float]):
        super().__init__(f"{message} (last bracket [{bracket[0]:.6g}, {bracket[1]:.6g}])")
        self.bracket = bracket


def bisect_multiplier(
    power_of_alpha: Callable[[float], float],
    budget: float,
    tol: float = 1e-8,
    max_halvings: int = 200,
) -> float:
    """Find the Lagrange multiplier that meets a total power budget.

    ``power_of_alpha`` must be continuous and nonincreasing on ``[0, inf)``
    and vanish as alpha grows. Returns 0 when the unconstrained solution is
    already feasible; otherwise doubles the upper end of ``[0, 1]`` until
    the power drops below ``budget`` and bisects until the power is within
    ``tol * budget`` of it. The returned multiplier is never on the
    infeasible side by more than that tolerance.
    """
    if budget <= 0:
        raise ValueError(f"power budget must be positive, got {budget}")
    if power_of_alpha(0.0) <= budget:
        return 0.0

    lo, hi = 0.0, 1.0
    p_hi = power_of_alpha(hi)
    while p_hi > budget:
        lo, hi = hi, 2.0 * hi
        if not math.isfinite(hi):
            raise BisectionError("no multiplier brings the power under budget", (lo, hi))
        p_hi = power_of_alpha(hi)
    if budget - p_hi <= tol * budget:
        return hi

    for _ in range(max_halvings):
        mid = 0.5 * (lo + hi)
        p_mid = power_of_alpha(mid)
        if abs(p_mid - budget) <= tol * budget:
            return mid
        if p_mid > budget:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4.0 * np.finfo(float).eps * hi:
            # interval exhausted at float resolution: return the feasible end
            return hi
    raise BisectionError(f"bisection exceeded {max_halvings} halvings", (lo, hi))


def initial_beamformer(partition: PartitionSpec, power: float, seed: int, mode: str = FULL) -> HybridBeamformer:
    """Power-feasible random start shared by every WMMSE solver.

    Each ``a_i`` is i.i.d. CN(0, 1) scaled to ``||a_i||^2 = P / na``; the
    full-array digital precoder is the truncated ``na x ns`` identity.
    """
    rng = np.random.default_rng(seed)
    shape = (partition.na, partition.n)
    a = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    norms = np.linalg.norm(a, axis=1, keepdims=True)
    a = a / norms * math.sqrt(power / partition.na)
    if mode == SUB:
        if partition.ns != partition.na:
            raise ValueError("subarray processing requires ns == na")
        digital = DigitalPrecoder.identity(partition.na)
    else:
        digital = DigitalPrecoder(np.eye(partition.na, partition.ns, dtype=complex), FULL)
    return HybridBeamformer(AnalogBeamformer(a), digital, partition)
