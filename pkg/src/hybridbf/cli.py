"""Command-line entry point: ``hybridbf {sweep,convergence,design,gen-channels}``.

Exit codes: 0 success, 1 invalid spec or input, 2 at least one solver
failure (the run itself completed and its output was written).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import harness
from .channel import (
    ChannelFormatError,
    ChannelRealization,
    export_channels,
    generate_geometric_channel,
    import_channels,
    mu_geometric_channel,
    realization_seed,
)
from .core import PartitionSpec
from .solver import SolverConfig

EXIT_OK, EXIT_SPEC, EXIT_SOLVER = 0, 1, 2

log = logging.getLogger("hybridbf")


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("spec", help="YAML sweep specification")
    p.add_argument("--out", help="output file (overrides 'output' in the sweep file)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--realizations", type=int)
    p.add_argument("--snr", type=float, nargs="+", metavar="DB", help="SNR values in dB")
    p.add_argument("--nt", type=int, nargs="+", help="transmit antenna count(s)")
    p.add_argument("--algo", nargs="+", help="algorithm tags")
    p.add_argument("--workers", type=int, help="worker processes")


def _spec_with_overrides(args) -> harness.SweepSpec:
    spec = harness.load_spec(args.spec)
    return harness.with_overrides(
        spec,
        master_seed=args.seed,
        realizations=args.realizations,
        snr_db=args.snr,
        nt=args.nt,
        algorithms=args.algo,
        workers=args.workers,
        output=args.out,
    )


def cmd_sweep(args) -> int:
    spec = _spec_with_overrides(args)
    if not spec.output:
        raise harness.SpecError("no output path: set 'output' in the sweep file or pass --out")
    records = harness.run_sweep(spec, fmt=args.format)
    if args.summary:
        harness.write_summary(records, args.summary)
    failed = sum(math.isnan(r.sum_rate) for r in records)
    print(f"{len(records)} records -> {spec.output}" + (f" ({failed} solver failures)" if failed else ""))
    return EXIT_SOLVER if failed else EXIT_OK


def cmd_convergence(args) -> int:
    spec = _spec_with_overrides(args)
    if not spec.output:
        raise harness.SpecError("no output path: set 'output' in the sweep file or pass --out")
    traces = harness.run_convergence(spec)
    print(f"{len(traces)} traces -> {spec.output}")
    return EXIT_OK


def cmd_design(args) -> int:
    chans = import_channels(args.channel)
    if not 0 <= args.index < len(chans):
        raise harness.SpecError(f"{args.channel} holds {len(chans)} channels; index {args.index} is out of range")
    ch = chans[args.index]
    nr, nt = ch.matrix.shape
    ns = args.ns or (nr if args.scenario == "mu" else min(nr, args.na))
    try:
        part = PartitionSpec(nt, args.na, ns)
    except ValueError as exc:
        raise harness.SpecError(str(exc)) from None
    noise = ch.noise_power if args.snr is None else args.power * 10.0 ** (-args.snr / 10.0)
    cfg = SolverConfig(power=args.power, noise_power=noise, init_seed=args.init_seed)
    if args.algo not in (harness.SU_ALGORITHMS if args.scenario == "su" else harness.MU_ALGORITHMS):
        raise harness.SpecError(f"unknown algorithm tag {args.algo!r} for scenario {args.scenario!r}")
    harness.check_point(
        harness.SweepSpec(args.scenario, [args.algo], nt, nr, ns, args.na, [0.0], realizations=1),
        {"nt": nt, "nr": nr, "ns": ns, "na": args.na, "snr_db": 0.0},
    )
    out = harness.run_algorithm(args.scenario, args.algo, ch.matrix, part, cfg)
    doc = {"algorithm": args.algo, "scenario": args.scenario, "noise_power": noise, "power": args.power}
    doc.update(out.to_dict())
    text = json.dumps(doc, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_SOLVER if out.failed else EXIT_OK


def cmd_gen_channels(args) -> int:
    noise = 10.0 ** (-args.snr / 10.0) if args.snr is not None else 1.0
    chans = []
    for r in range(args.count):
        seed = realization_seed(args.seed, r)
        if args.scenario == "su":
            ch = generate_geometric_channel(seed, args.nt, args.nr, args.paths, noise)
        else:
            ch = mu_geometric_channel(seed, args.nt, args.nr, args.paths, noise)
        chans.append(ChannelRealization(ch.matrix, noise, f"{ch.label} index={r}"))
    export_channels(chans, args.out, args.format, overwrite=args.force)
    print(f"{len(chans)} channels -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridbf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="Monte Carlo rate sweep to CSV/JSON")
    _add_overrides(p)
    p.add_argument("--format", choices=("csv", "json"), help="record format (default from suffix)")
    p.add_argument("--summary", help="also write per-configuration mean rates to this CSV")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("convergence", help="per-iteration sum-rate traces")
    _add_overrides(p)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("design", help="design one beamformer for a channel file entry")
    p.add_argument("channel", help="channel file (.json or .bin)")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--scenario", choices=("su", "mu"), default="su")
    p.add_argument("--algo", default="fa-wmmse")
    p.add_argument("--na", type=int, required=True, help="RF chains")
    p.add_argument("--ns", type=int, help="streams (default: nr for mu, min(nr, na) for su)")
    p.add_argument("--power", type=float, default=1.0)
    p.add_argument("--snr", type=float, help="override the file's noise power with P/10^(SNR/10)")
    p.add_argument("--init-seed", type=int, default=0)
    p.add_argument("--out", help="beamformer JSON (default stdout)")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("gen-channels", help="write seeded geometric channels to a file")
    p.add_argument("--scenario", choices=("su", "mu"), default="su")
    p.add_argument("--nt", type=int, default=64)
    p.add_argument("--nr", type=int, default=4, help="receive antennas (su) or users (mu)")
    p.add_argument("--paths", type=int, default=5)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snr", type=float, help="store N0 = 10^(-SNR/10) (default N0 = 1)")
    p.add_argument("--format", choices=("json", "bin"))
    p.add_argument("--force", action="store_true", help="overwrite an existing file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_channels)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (harness.SpecError, ChannelFormatError, FileNotFoundError, FileExistsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC


if __name__ == "__main__":
    sys.exit(main())
