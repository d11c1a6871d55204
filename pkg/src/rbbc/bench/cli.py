"""``bench run`` and ``bench sweep`` entry points."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, ExperimentConfig, load_config
from .metrics import compute
from .report import emit, summary
from .world import RunFailure, run_experiment

# flag -> config field
OVERRIDES = {
    "protocol": ("protocol", str),
    "nodes": ("n", int),
    "faulty": ("t", int),
    "proposers": ("proposer_mode", str),
    "proposal_size": ("beta", int),
    "adversary": ("adversary", str),
    "byzantine_count": ("byzantine_count", int),
    "seed": ("seed", int),
    "rounds": ("rounds", int),
    "duration_ms": ("duration_ms", float),
    "warmup_rounds": ("warmup_rounds", int),
    "latency_matrix": ("latency_matrix", str),
    "gst_ms": ("gst_ms", float),
    "jitter_ms": ("jitter_ms", float),
    "requesters": ("requesters", int),
    "genesis_per_requester": ("genesis_per_requester", int),
    "genesis_utxos_per_requester": ("genesis_utxos_per_requester", int),
    "verify_cost_ms": ("verify_cost_ms", float),
    "out_dir": ("out_dir", str),
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with an [experiment] section")
    for flag, (_, typ) in OVERRIDES.items():
        p.add_argument("--" + flag.replace("_", "-"), dest=flag, type=typ, default=None)
    p.add_argument("--regions", default=None, help="comma-separated region subset")
    p.add_argument("--requester-regions", default=None)
    p.add_argument("--no-gnuplot", action="store_true")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    for flag, (name, _) in OVERRIDES.items():
        v = getattr(args, flag)
        if v is not None:
            changes[name] = v
    if args.proposers is not None:
        aliases = {"n": "all_n", "all": "all_n", "t+1": "t_plus_1"}
        changes["proposer_mode"] = aliases.get(args.proposers, args.proposers)
    if args.regions:
        changes["regions"] = [r.strip() for r in args.regions.split(",") if r.strip()]
    if args.requester_regions:
        changes["requester_regions"] = [r.strip() for r in args.requester_regions.split(",")]
    cfg = cfg.replace(**changes)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bench", description=__doc__)
    sub = parser.add_subparsers(dest="cmd", required=True)
    run_p = sub.add_parser("run", help="run one experiment")
    _add_common(run_p)
    sweep_p = sub.add_parser("sweep", help="run several seeds and aggregate")
    _add_common(sweep_p)
    sweep_p.add_argument("--seeds", type=int, default=5, help="number of consecutive seeds")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    seeds = [cfg.seed] if args.cmd == "run" else [cfg.seed + i for i in range(args.seeds)]
    reports = []
    for s in seeds:
        try:
            result = run_experiment(cfg.replace(seed=s))
        except RunFailure as exc:
            print(f"run failed (seed {s}): {exc}", file=sys.stderr)
            return 1
        if result.violations:
            for v in result.violations:
                print(f"SAFETY VIOLATION: {v}", file=sys.stderr)
            return 1
        report = compute(result)
        reports.append(report)
        print(summary(report))
    paths = emit(reports, cfg.out_dir, aggregate=args.cmd == "sweep",
                 gnuplot=not args.no_gnuplot)
    for p in paths:
        print(f"wrote {p}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
