"""Command line entry point: ``irsdiag {simulate,diagnose,sweep,validate}``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from .config import ScenarioConfig, SweepSpec, load_config
from .errors import ConfigError
from .harness import diagnose, persist_results, run_sweep, simulate, summarize
from .system import support_f1, threshold_faults
from .validate import validate_suite


def _load(args):
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    base = cfg.base if isinstance(cfg, SweepSpec) else cfg
    kw = {}
    if args.case is not None:
        kw["case"] = args.case
    if args.seed is not None:
        kw["seed"] = args.seed
    if getattr(args, "no_timing", False):
        kw["record_timing"] = False
    if kw:
        try:
            base = replace(base, **kw)
        except ConfigError as exc:
            raise ConfigError(f"command line: {exc}") from None
    if isinstance(cfg, SweepSpec):
        seed = args.seed if args.seed is not None else cfg.seed
        return replace(cfg, base=base, seed=seed)
    return base


def _scenario(cfg):
    if isinstance(cfg, SweepSpec):
        return cfg.base
    return cfg


def cmd_simulate(args):
    cfg = _scenario(_load(args))
    sc = simulate(cfg)
    out = args.out or "measurements.npz"
    np.savez(out, weights=sc.measurements.weights, y=sc.measurements.y,
             snr_linear=sc.measurements.snr_linear, mask=sc.mask.m,
             faulty=np.array(sorted(sc.mask.faulty_indices), dtype=int),
             h_tx=sc.h_tx, rx_channels=sc.rx_channels,
             config=json.dumps(cfg.to_dict()))
    print(f"wrote K={sc.measurements.K} measurements ({cfg.case}) to {out}")
    return 0


def cmd_diagnose(args):
    cfg = _scenario(_load(args))
    sc = simulate(cfg)
    res = diagnose(sc)
    summary = res.summary()
    summary["case"] = cfg.case
    summary["method"] = cfg.resolved_method
    summary["true_faults"] = sorted(sc.mask.faulty_indices)
    summary["support_f1"] = support_f1(threshold_faults(sc.mask.m, cfg.threshold), res.faults)
    if not cfg.record_timing:
        summary["runtime_ms"] = 0.0
    print(json.dumps(summary, indent=2))
    return 0


def cmd_sweep(args):
    cfg = _load(args)
    spec = cfg if isinstance(cfg, SweepSpec) else SweepSpec(base=cfg, seed=cfg.seed)
    out = args.out or ("results.csv" if args.format == "tabular" else "results.jsonl")

    def progress(i, total, row):
        if args.verbose:
            print(f"[{i}/{total}] {row.case} K={row.K} snr={row.snr_db} N_RX={row.N_RX} "
                  f"trial={row.trial} nmse={row.nmse:.3e}", file=sys.stderr)

    rows = run_sweep(spec, args.parallelism, progress)
    persist_results(rows, out, args.format, append=args.append)
    for s in summarize(rows):
        print(json.dumps(s))
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_validate(args):
    report = validate_suite()
    return 0 if report.ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irsdiag", description="Diagnosis of faulty IRS elements")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file (scenario or sweep)")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--case", choices=["full", "partial", "none", "mmv"],
                        help="override the diagnosis case")
    common.add_argument("--no-timing", action="store_true",
                        help="write runtime_ms = 0 so result files are reproducible byte for byte")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate and save one measurement set")
    p.add_argument("--out", help="output .npz path (default measurements.npz)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("diagnose", parents=[common], help="run one trial and print its summary")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("sweep", parents=[common], help="run a parameter grid and save the rows")
    p.add_argument("--out", help="results file")
    p.add_argument("--format", choices=["tabular", "records"], default="tabular")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--append", action="store_true", help="add rows to an existing results file")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="run the built-in oracle checks")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileExistsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
