"""Seeded Monte Carlo sweeps over SNR or array dimensions.

A sweep is described by a YAML file loaded into :class:`SweepSpec`. Each
realization index ``r`` draws its channel from ``realization_seed(master_seed,
r)``, so every algorithm and every swept value sees the same channels and
results do not depend on execution order or worker count.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import mu, su
from .channel import ChannelRealization, import_channels, mu_geometric_channel, generate_geometric_channel, realization_seed
from .core import PartitionSpec
from .solver import SolverConfig, SolverOutcome, failed_outcome

__all__ = [
    "SpecError",
    "SweepSpec",
    "ResultRecord",
    "RECORD_COLUMNS",
    "SU_ALGORITHMS",
    "MU_ALGORITHMS",
    "load_spec",
    "dump_spec",
    "check_point",
    "run_algorithm",
    "run_sweep",
    "run_convergence",
    "summarize",
    "write_records",
    "write_summary",
    "write_traces",
]

SU_ALGORITHMS = ("digital-svd", "analog-ss", "digital-wmmse", "fa-wmmse", "sa-wmmse", "txrx-zf")
MU_ALGORITHMS = ("digital-wmmse", "digital-zf", "fa-wmmse", "sa-wmmse", "sub-zf")
AXES = ("nt", "nr", "ns", "na")
SOLVER_KEYS = ("max_iters", "rel_tol", "bisect_tol", "init_seed", "e_floor")


class SpecError(ValueError):
    """Invalid sweep specification."""


def _as_list(value, name, kind):
    items = value if isinstance(value, (list, tuple)) else [value]
    if not items:
        raise SpecError(f"'{name}' must not be empty")
    try:
        out = [kind(v) for v in items]
    except (TypeError, ValueError):
        raise SpecError(f"'{name}' has a non-numeric entry: {value!r}") from None
    if kind is int and any(float(v) != int(v) for v in items):
        raise SpecError(f"'{name}' must hold integers, got {value!r}")
    return out


@dataclass
class SweepSpec:
    """One experiment: algorithms x (one swept axis) x realizations.

    ``nt``, ``nr``, ``ns`` and ``na`` hold one value or a list; ``nr`` is
    the user count in the multi-user scenario. ``snr_db`` is always a list.
    At most one of these five may hold more than one value.
    ``channel_source`` is ``"geometric"`` or ``"file:<path>"``.
    """

    scenario: str
    algorithms: list
    nt: list
    nr: list
    ns: list
    na: list
    snr_db: list
    channel_source: str = "geometric"
    num_paths: int = 5
    realizations: int = 100
    master_seed: int = 0
    power: float = 1.0
    solver: dict = field(default_factory=dict)
    output: str = ""
    workers: int = 1

    def __post_init__(self):
        if self.scenario not in ("su", "mu"):
            raise SpecError(f"scenario must be 'su' or 'mu', got {self.scenario!r}")
        self.algorithms = [str(a) for a in _as_list(self.algorithms, "algorithms", str)]
        known = SU_ALGORITHMS if self.scenario == "su" else MU_ALGORITHMS
        for tag in self.algorithms:
            if tag not in known:
                raise SpecError(f"unknown algorithm tag {tag!r} for scenario {self.scenario!r}; known: {', '.join(known)}")
        for name in AXES:
            vals = _as_list(getattr(self, name), name, int)
            if any(v < 1 for v in vals):
                raise SpecError(f"'{name}' values must be positive, got {vals}")
            setattr(self, name, vals)
        self.snr_db = _as_list(self.snr_db, "snr_db", float)
        swept = [a for a in AXES + ("snr_db",) if len(getattr(self, a)) > 1]
        if len(swept) > 1:
            raise SpecError(f"only one axis may be swept per run, got {', '.join(swept)}")
        if not (self.channel_source == "geometric" or self.channel_source.startswith("file:")):
            raise SpecError(f"channel_source must be 'geometric' or 'file:<path>', got {self.channel_source!r}")
        if self.channel_source.startswith("file:") and len(self.snr_db) > 1:
            raise SpecError("file channels carry their own noise power; give a single snr_db label")
        if int(self.realizations) < 1:
            raise SpecError(f"realizations must be >= 1, got {self.realizations}")
        if int(self.num_paths) < 1:
            raise SpecError(f"num_paths must be >= 1, got {self.num_paths}")
        if not float(self.power) > 0:
            raise SpecError(f"power must be positive, got {self.power}")
        if int(self.workers) < 1:
            raise SpecError(f"workers must be >= 1, got {self.workers}")
        self.realizations = int(self.realizations)
        self.num_paths = int(self.num_paths)
        self.master_seed = int(self.master_seed)
        self.power = float(self.power)
        self.workers = int(self.workers)
        self.solver = dict(self.solver or {})
        for key in self.solver:
            if key not in SOLVER_KEYS:
                raise SpecError(f"unknown solver option {key!r}; known: {', '.join(SOLVER_KEYS)}")
        try:
            self.solver_config(0.0)
        except ValueError as exc:
            raise SpecError(f"invalid solver options: {exc}") from None

    @property
    def swept_axis(self) -> str:
        for name in AXES:
            if len(getattr(self, name)) > 1:
                return name
        return "snr_db"

    def points(self) -> list[dict]:
        """Axis values in sweep order, each a dict of nt/nr/ns/na/snr_db."""
        axis = self.swept_axis
        base = {a: getattr(self, a)[0] for a in AXES + ("snr_db",)}
        return [{**base, axis: v} for v in getattr(self, axis)]

    def solver_config(self, snr_db: float, noise_power: float | None = None) -> SolverConfig:
        kw = dict(self.solver)
        if noise_power is None:
            return SolverConfig.from_snr(snr_db, self.power, **kw)
        return SolverConfig(power=self.power, noise_power=noise_power, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


def load_spec(path) -> SweepSpec:
    """Read a YAML sweep file; ``nu`` is accepted for ``nr`` in multi-user specs."""
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise SpecError(f"{path}: {exc}") from None
    return spec_from_dict(doc, str(path))


def spec_from_dict(doc, where: str = "spec") -> SweepSpec:
    if not isinstance(doc, dict):
        raise SpecError(f"{where}: top level must be a mapping")
    doc = dict(doc)
    if "nu" in doc:
        if "nr" in doc:
            raise SpecError(f"{where}: give either 'nr' or 'nu', not both")
        doc["nr"] = doc.pop("nu")
    names = {f.name for f in fields(SweepSpec)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise SpecError(f"{where}: unknown field(s) {', '.join(unknown)}")
    missing = [n for n in ("scenario", "algorithms", "nt", "nr", "ns", "na", "snr_db") if n not in doc]
    if missing:
        raise SpecError(f"{where}: missing field(s) {', '.join(missing)}")
    return SweepSpec(**doc)


def dump_spec(spec: SweepSpec, path=None) -> str:
    text = yaml.safe_dump(spec.to_dict(), sort_keys=False)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


@dataclass
class ResultRecord:
    scenario: str
    algorithm: str
    nt: int
    nr_or_nu: int
    ns: int
    na: int
    snr_db: float
    realization_index: int
    seed: int
    sum_rate: float
    iterations: int
    converged: bool
    wall_time_ms: float


RECORD_COLUMNS = tuple(f.name for f in fields(ResultRecord))


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------


def run_algorithm(scenario: str, tag: str, H, partition: PartitionSpec, cfg: SolverConfig) -> SolverOutcome:
    """Dispatch one algorithm tag on one channel."""
    P, N0 = cfg.power, cfg.noise_power
    if scenario == "su":
        table = {
            "digital-svd": lambda: su.digital_svd_baseline(H, P, N0, partition.ns),
            "analog-ss": lambda: su.analog_single_stream(H, P, N0),
            "digital-wmmse": lambda: su.digital_su_wmmse(H, partition.ns, cfg),
            "fa-wmmse": lambda: su.solve_fa_wmmse(H, partition, cfg),
            "sa-wmmse": lambda: su.solve_sa_wmmse(H, partition, cfg),
            "txrx-zf": lambda: su.txrx_zf(H, partition, cfg),
        }
    else:
        table = {
            "digital-wmmse": lambda: mu.digital_mu_wmmse(H, cfg),
            "digital-zf": lambda: mu.digital_mu_zf(H, P, N0),
            "fa-wmmse": lambda: mu.solve_mu_fa_wmmse(H, partition, cfg),
            "sa-wmmse": lambda: mu.solve_mu_sa_wmmse(H, partition, cfg),
            "sub-zf": lambda: mu.mu_subarray_zf(H, partition, P, N0),
        }
    if tag not in table:
        raise SpecError(f"unknown algorithm tag {tag!r} for scenario {scenario!r}")
    return table[tag]()


def _file_channels(spec: SweepSpec) -> list[ChannelRealization]:
    path = spec.channel_source[len("file:"):]
    chans = import_channels(path)
    if len(chans) < spec.realizations:
        raise SpecError(f"{path} holds {len(chans)} channels but {spec.realizations} realizations were requested")
    return chans[: spec.realizations]


def _channel(spec: SweepSpec, point: dict, index: int, files) -> tuple[ChannelRealization, int]:
    if files is not None:
        ch = files[index]
        if ch.matrix.shape != (point["nr"], point["nt"]):
            raise SpecError(
                f"file channel {index} is {ch.matrix.shape[0]}x{ch.matrix.shape[1]}, spec expects "
                f"{point['nr']}x{point['nt']}"
            )
        return ch, index
    seed = realization_seed(spec.master_seed, index)
    if spec.scenario == "su":
        return generate_geometric_channel(seed, point["nt"], point["nr"], spec.num_paths), seed
    return mu_geometric_channel(seed, point["nt"], point["nr"], spec.num_paths), seed


def _partition(point: dict) -> PartitionSpec:
    try:
        return PartitionSpec(point["nt"], point["na"], point["ns"])
    except ValueError as exc:
        raise SpecError(str(exc)) from None


def check_point(spec: SweepSpec, point: dict) -> None:
    """Raise :class:`SpecError` if an algorithm cannot run at ``point``."""
    part = _partition(point)
    nr, ns, na, n = point["nr"], part.ns, part.na, part.n
    where = f"at nt={part.nt} nr={nr} ns={ns} na={na}"
    if spec.scenario == "mu" and nr != ns:
        raise SpecError(f"multi-user runs need one stream per user (nu={nr}, ns={ns}) {where}")
    for tag in spec.algorithms:
        if spec.scenario == "su" and ns > nr and tag != "analog-ss":
            raise SpecError(f"{tag}: ns exceeds nr {where}")
        if tag in ("sa-wmmse", "txrx-zf", "sub-zf") and ns != na:
            raise SpecError(f"{tag}: subarray processing needs ns == na {where}")
        if tag == "txrx-zf" and n < ns:
            raise SpecError(f"{tag}: needs n = nt/na >= ns {where}")
        if tag == "sub-zf" and n < nr:
            raise SpecError(f"{tag}: needs n = nt/na >= nu {where}")
        if tag == "digital-zf" and nr > part.nt:
            raise SpecError(f"{tag}: more users than antennas {where}")


def _job(args):
    spec, point, index, files, keep_traces = args
    H, seed = _channel(spec, point, index, files)
    part = _partition(point)
    cfg = spec.solver_config(point["snr_db"], H.noise_power if files is not None else None)
    records, traces = [], []
    for tag in spec.algorithms:
        t0 = time.perf_counter()
        try:
            out = run_algorithm(spec.scenario, tag, H.matrix, part, cfg)
        except (np.linalg.LinAlgError, ArithmeticError, RuntimeError) as exc:
            out = failed_outcome(part.nt, part.ns, f"{tag}: {exc}")
        ms = (time.perf_counter() - t0) * 1e3
        records.append(ResultRecord(
            scenario=spec.scenario,
            algorithm=tag,
            nt=point["nt"],
            nr_or_nu=point["nr"],
            ns=point["ns"],
            na=point["na"],
            snr_db=point["snr_db"],
            realization_index=index,
            seed=seed,
            sum_rate=out.sum_rate,
            iterations=out.iterations,
            converged=bool(out.converged and not out.failed),
            wall_time_ms=ms,
        ))
        if keep_traces:
            traces.append((tag, index, seed, list(out.trace)))
    return records, traces


def _run_jobs(spec: SweepSpec, keep_traces: bool):
    for pt in spec.points():
        check_point(spec, pt)
    files = _file_channels(spec) if spec.channel_source.startswith("file:") else None
    jobs = [(spec, pt, r, files, keep_traces) for pt in spec.points() for r in range(spec.realizations)]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            # map preserves submission order
            return list(pool.map(_job, jobs, chunksize=max(1, len(jobs) // (4 * spec.workers))))
    return [_job(j) for j in jobs]


def run_sweep(spec: SweepSpec, out_path=None, fmt: str | None = None) -> list[ResultRecord]:
    """Run every (axis value, realization, algorithm) and optionally write the records.

    A solver failure on one realization yields ``sum_rate = nan`` and
    ``converged = False`` and the sweep continues.
    """
    records = [rec for recs, _ in _run_jobs(spec, False) for rec in recs]
    target = out_path or spec.output
    if target:
        write_records(records, target, fmt)
    return records


def run_convergence(spec: SweepSpec, out_path=None) -> list[tuple]:
    """Per-iteration sum-rate traces at a single configuration.

    Returns ``(algorithm, realization_index, seed, trace)`` tuples and, if a
    path is given, writes them in long form via :func:`write_traces`.
    """
    if len(spec.points()) != 1:
        raise SpecError(f"convergence runs take a single configuration; {spec.swept_axis} is swept")
    traces = [t for _, tr in _run_jobs(spec, True) for t in tr]
    target = out_path or spec.output
    if target:
        write_traces(traces, target)
    return traces


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)  # shortest round-trip form
    return str(value)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for rec in records:
        w.writerow([_fmt(getattr(rec, c)) for c in RECORD_COLUMNS])
    return buf.getvalue()


def write_records(records, path, fmt: str | None = None) -> None:
    """Write records as CSV (header row, ``\\n`` line ends) or JSON."""
    path = Path(path)
    fmt = fmt or ("json" if path.suffix.lower() == ".json" else "csv")
    if fmt == "csv":
        text = records_to_csv(records)
    elif fmt == "json":
        rows = [{k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in asdict(r).items()} for r in records]
        text = json.dumps(rows, indent=1) + "\n"
    else:
        raise ValueError(f"unknown record format {fmt!r}; use 'csv' or 'json'")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_records(path) -> list[ResultRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    kinds = {f.name: f.type for f in fields(ResultRecord)}
    out = []
    for row in rows:
        vals = {}
        for k, v in row.items():
            t = kinds[k]
            vals[k] = v == "true" if t == "bool" else int(v) if t == "int" else float(v) if t == "float" else v
        out.append(ResultRecord(**vals))
    return out


def summarize(records) -> list[dict]:
    """Mean sum rate per (algorithm, configuration) over non-failed realizations."""
    groups: dict[tuple, list] = {}
    for r in records:
        key = (r.algorithm, r.nt, r.nr_or_nu, r.ns, r.na, r.snr_db)
        groups.setdefault(key, []).append(r.sum_rate)
    rows = []
    for (alg, nt, nr, ns, na, snr), rates in groups.items():
        ok = [x for x in rates if not math.isnan(x)]
        rows.append({
            "algorithm": alg, "nt": nt, "nr_or_nu": nr, "ns": ns, "na": na, "snr_db": snr,
            "mean_sum_rate": float(np.mean(ok)) if ok else float("nan"),
            "realizations": len(ok), "failed": len(rates) - len(ok),
        })
    return rows


def write_summary(records, path) -> None:
    rows = summarize(records)
    cols = ["algorithm", "nt", "nr_or_nu", "ns", "na", "snr_db", "mean_sum_rate", "realizations", "failed"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in cols])


def write_traces(traces, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "realization_index", "seed", "iteration", "sum_rate"])
        for tag, index, seed, trace in traces:
            for it, rate in enumerate(trace, start=1):
                w.writerow([tag, index, seed, it, repr(float(rate))])


def with_overrides(spec: SweepSpec, **kw) -> SweepSpec:
    """Copy of ``spec`` with the non-None keyword fields replaced (re-validated)."""
    changes = {k: v for k, v in kw.items() if v is not None}
    return replace(spec, **changes) if changes else spec
