"""Geometric multipath ULA channels and channel file I/O.

The narrowband channel is

    H = sqrt(Nt Nr / L) * sum_l alpha_l g_r(phi_r_l) g_t(phi_t_l)^H

with ``alpha_l ~ CN(0, 1)``, departure and arrival angles uniform on
``[0, 2pi)`` and ULA responses ``g(phi)_m = exp(j 2pi d m sin(phi)) / sqrt(N)``
for element spacing ``d`` in wavelengths. Externally generated channels
(e.g. exported from a measurement-based simulator) are read from the JSON or
binary formats documented in :func:`import_channels`.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "ArrayGeometry",
    "PathSet",
    "ChannelRealization",
    "ChannelFormatError",
    "array_response",
    "sample_paths",
    "geometric_channel",
    "generate_geometric_channel",
    "mu_geometric_channel",
    "realization_seed",
    "import_channels",
    "export_channels",
]

MAGIC = b"CHNL"


class ChannelFormatError(ValueError):
    """Malformed or inconsistent channel file."""


@dataclass(frozen=True)
class ArrayGeometry:
    num_elements: int
    element_spacing: float = 0.5
    carrier_frequency: float = 28e9  # metadata only

    def __post_init__(self):
        if self.num_elements < 1:
            raise ValueError(f"num_elements must be >= 1, got {self.num_elements}")
        if not self.element_spacing > 0:
            raise ValueError(f"element_spacing must be positive, got {self.element_spacing}")


@dataclass(frozen=True)
class PathSet:
    """Path gains and angles (radians) of an L-path channel."""

    gains: np.ndarray
    aod: np.ndarray
    aoa: np.ndarray

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.gains, dtype=complex))
        t = np.atleast_1d(np.asarray(self.aod, dtype=float))
        r = np.atleast_1d(np.asarray(self.aoa, dtype=float))
        if not (len(g) == len(t) == len(r)):
            raise ValueError(f"path lists differ in length: {len(g)}, {len(t)}, {len(r)}")
        if len(g) == 0:
            raise ValueError("a channel needs at least one path")
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "aod", t)
        object.__setattr__(self, "aoa", r)

    @property
    def num_paths(self) -> int:
        return len(self.gains)


@dataclass
class ChannelRealization:
    """Channel matrix (rows = receive antennas, or users for MU-MISO) and noise power."""

    matrix: np.ndarray
    noise_power: float = 1.0
    label: str = ""

    def __post_init__(self):
        H = np.asarray(self.matrix, dtype=complex)
        if H.ndim != 2:
            raise ValueError(f"channel matrix must be 2-D, got shape {H.shape}")
        if not np.all(np.isfinite(H)):
            raise ValueError("channel matrix has non-finite entries")
        if not self.noise_power > 0:
            raise ValueError(f"noise power must be positive, got {self.noise_power}")
        self.matrix = H

    @property
    def n_rx(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_tx(self) -> int:
        return self.matrix.shape[1]


def array_response(geometry: ArrayGeometry | int, angle: float) -> np.ndarray:
    """Unit-norm ULA steering vector ``exp(j 2pi d m sin(angle)) / sqrt(N)``."""
    if isinstance(geometry, (int, np.integer)):
        geometry = ArrayGeometry(int(geometry))
    N = geometry.num_elements
    phase = 2.0 * np.pi * geometry.element_spacing * np.sin(np.mod(angle, 2.0 * np.pi))
    return np.exp(1j * phase * np.arange(N)) / math.sqrt(N)


def sample_paths(rng: np.random.Generator, num_paths: int = 5) -> PathSet:
    """Draw ``alpha_l ~ CN(0,1)`` and i.i.d. uniform angles on [0, 2pi)."""
    if num_paths < 1:
        raise ValueError("num_paths must be >= 1")
    g = (rng.standard_normal(num_paths) + 1j * rng.standard_normal(num_paths)) / math.sqrt(2.0)
    aod = rng.uniform(0.0, 2.0 * np.pi, num_paths)
    aoa = rng.uniform(0.0, 2.0 * np.pi, num_paths)
    return PathSet(g, aod, aoa)


def geometric_channel(nt: int, nr: int, paths: PathSet, spacing: float = 0.5) -> np.ndarray:
    """Deterministic channel matrix for a given path set."""
    tx = ArrayGeometry(nt, spacing)
    rx = ArrayGeometry(nr, spacing)
    Gt = np.stack([array_response(tx, p) for p in paths.aod], axis=1)  # (nt, L)
    Gr = np.stack([array_response(rx, p) for p in paths.aoa], axis=1)  # (nr, L)
    scale = math.sqrt(nt * nr / paths.num_paths)
    return scale * (Gr * paths.gains) @ Gt.conj().T


def generate_geometric_channel(
    rng_seed: int,
    nt: int,
    nr: int,
    paths: PathSet | int = 5,
    noise_power: float = 1.0,
    spacing: float = 0.5,
) -> ChannelRealization:
    """Seeded geometric channel; ``paths`` is a fixed :class:`PathSet` or a path count to sample."""
    if nt < 1 or nr < 1:
        raise ValueError("nt and nr must be >= 1")
    if not isinstance(paths, PathSet):
        paths = sample_paths(np.random.default_rng(rng_seed), int(paths))
    H = geometric_channel(nt, nr, paths, spacing)
    return ChannelRealization(H, noise_power, f"geometric seed={rng_seed} L={paths.num_paths}")


def mu_geometric_channel(rng_seed: int, nt: int, nu: int, num_paths: int = 5, noise_power: float = 1.0) -> ChannelRealization:
    """Stack ``nu`` independent single-antenna geometric channels; row k is ``h_k^H``."""
    rng = np.random.default_rng(rng_seed)
    rows = [geometric_channel(nt, 1, sample_paths(rng, num_paths))[0] for _ in range(nu)]
    return ChannelRealization(np.array(rows), noise_power, f"geometric-mu seed={rng_seed} L={num_paths}")


def realization_seed(master_seed: int, index: int) -> int:
    """64-bit seed of realization ``index``: the first word of
    ``numpy.random.SeedSequence([master_seed, index])``.

    Depends only on the pair, so realizations can be generated in any order.
    """
    state = np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1, np.uint64)
    return int(state[0])


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


def _format_for(path: Path, fmt: str | None) -> str:
    if fmt:
        if fmt not in ("json", "bin"):
            raise ValueError(f"unknown channel format {fmt!r}; use 'json' or 'bin'")
        return fmt
    return "bin" if path.suffix.lower() in (".bin", ".chnl") else "json"


def export_channels(channels, path, fmt: str | None = None, overwrite: bool = False) -> None:
    """Write channels to ``path`` (``json`` or ``bin``, inferred from the suffix)."""
    path = Path(path)
    if path.exists() and not overwrite:
        raise FileExistsError(f"{path} exists; pass overwrite=True to replace it")
    fmt = _format_for(path, fmt)
    if fmt == "json":
        doc = []
        for ch in channels:
            H = ch.matrix
            doc.append({
                "n_rx": int(H.shape[0]),
                "n_tx": int(H.shape[1]),
                "noise_power": float(ch.noise_power),
                "label": ch.label,
                "data": [[float(z.real), float(z.imag)] for z in H.ravel()],
            })
        # repr round-trips doubles exactly
        path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
        return
    chunks = [MAGIC, struct.pack("<I", len(channels))]
    for ch in channels:
        H = ch.matrix
        chunks.append(struct.pack("<IId", H.shape[0], H.shape[1], float(ch.noise_power)))
        chunks.append(np.ascontiguousarray(H, dtype="<c16").tobytes())
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    os.replace(tmp, path)


def import_channels(path, fmt: str | None = None) -> list[ChannelRealization]:
    """Read channels written by :func:`export_channels` or an external tool.

    JSON: a list of ``{"n_rx", "n_tx", "noise_power", "label", "data"}``
    objects where ``data`` holds ``n_rx * n_tx`` ``[re, im]`` pairs in
    row-major order. Binary: ``b"CHNL"``, u32 count, then per channel u32
    n_rx, u32 n_tx, f64 noise power and interleaved f64 re/im row-major,
    all little-endian.
    """
    path = Path(path)
    fmt = _format_for(path, fmt)
    if fmt == "json":
        return _read_json(path)
    return _read_bin(path)


def _read_json(path: Path) -> list[ChannelRealization]:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ChannelFormatError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, list):
        raise ChannelFormatError(f"{path}: top level must be a list of channel objects")
    out = []
    for idx, obj in enumerate(doc):
        where = f"{path}: channel {idx}"
        try:
            nr, nt = int(obj["n_rx"]), int(obj["n_tx"])
            n0 = float(obj.get("noise_power", 1.0))
            data = obj["data"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ChannelFormatError(f"{where}: missing or invalid field ({exc})") from exc
        if len(data) != nr * nt:
            raise ChannelFormatError(f"{where}: 'data' has {len(data)} entries, expected n_rx*n_tx = {nr * nt}")
        for j, entry in enumerate(data):
            if not isinstance(entry, (list, tuple)) or len(entry) != 2:
                raise ChannelFormatError(f"{where}: 'data'[{j}] must be a [re, im] pair")
        arr = np.asarray(data, dtype=float)
        H = (arr[:, 0] + 1j * arr[:, 1]).reshape(nr, nt)
        try:
            out.append(ChannelRealization(H, n0, str(obj.get("label", ""))))
        except ValueError as exc:
            raise ChannelFormatError(f"{where}: {exc}") from exc
    return out


def _read_bin(path: Path) -> list[ChannelRealization]:
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise ChannelFormatError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < 8:
        raise ChannelFormatError(f"{path}: truncated header")
    (count,) = struct.unpack_from("<I", raw, 4)
    off = 8
    out = []
    for idx in range(count):
        if off + 16 > len(raw):
            raise ChannelFormatError(f"{path}: channel {idx}: truncated header at byte {off}")
        nr, nt, n0 = struct.unpack_from("<IId", raw, off)
        off += 16
        nbytes = 16 * nr * nt
        if off + nbytes > len(raw):
            raise ChannelFormatError(f"{path}: channel {idx}: expected {nbytes} data bytes at byte {off}")
        H = np.frombuffer(raw, dtype="<c16", count=nr * nt, offset=off).reshape(nr, nt).astype(complex)
        off += nbytes
        try:
            out.append(ChannelRealization(H, n0, ""))
        except ValueError as exc:
            raise ChannelFormatError(f"{path}: channel {idx}: {exc}") from exc
    if off != len(raw):
        raise ChannelFormatError(f"{path}: {len(raw) - off} trailing bytes after {count} channels")
    return out
