"""Command line entry point: ``catfair <subcommand> --config FILE``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import yaml

from . import __version__, harness
from .config import ConfigError, load_config
from .dataset import DataError, category_stats
from .results import emit_results

SUBCOMMANDS = {
    "audit": "run every configured encoder once",
    "sweep": "sweep the target-encoding regularization grids",
    "intersect": "compare single attributes with their concatenation",
    "synth": "irreducible/reducible bias decomposition on a synthetic population",
    "stats": "per-category counts of the dataset",
}


def _parse_set(items):
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        out[key] = yaml.safe_load(value)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="catfair", description=__doc__)
    parser.add_argument("--version", action="version", version=f"catfair {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment config (YAML or JSON)")
        p.add_argument("--out", help="result file (overrides output.path)")
        p.add_argument("--seed", type=int, help="split seed (overrides split.seed)")
        p.add_argument("--format", choices=("tabular", "structured"), help="overrides output.format")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key, e.g. --set model.family=boosted")
        if name in ("sweep", "intersect"):
            p.add_argument("--workers", type=int, default=1, help="grid points run in parallel")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _out_path(args, config) -> Path:
    if args.out:
        return Path(args.out)
    if config.output_path:
        return Path(config.output_path)
    suffix = ".json" if config.output_format == "structured" else ".csv"
    return Path(f"catfair_{args.command}{suffix}")


def _print_records(records) -> None:
    print(f"{'attribute':<24} {'encoder':<9} {'hyper':<7} {'value':>9} {'AUC':>7} "
          f"{'L_EOF':>7} {'L_DP':>7} {'L_AAO':>7}  status")
    fmt = lambda v: "-" if v is None else f"{v:.4f}"
    for r in records:
        print(f"{r.attribute:<24} {r.encoder:<9} {r.hyperparameter or '-':<7} "
              f"{'-' if r.value is None else f'{r.value:g}':>9} {fmt(r.auc):>7} "
              f"{fmt(r.l_eof):>7} {fmt(r.l_dp):>7} {fmt(r.l_aao):>7}  {r.status}")


def _stats(config, path: Path) -> None:
    data = harness.load_data(config)
    rows = []
    for col in data.schema:
        if col.kind != "categorical":
            continue
        stats = category_stats(data, col.name)
        for z, (n_i, n_iy) in stats.as_dict().items():
            rows.append([col.name, z, n_i, n_iy, repr(n_iy / n_i)])
    print(f"rows: {data.n}  positives: {int(data.target.sum())}")
    for r in rows:
        print(f"{r[0]:<20} {r[1]:<30} n={r[2]:<7} positives={r[3]:<7} rate={float(r[4]):.4f}")
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["attribute", "category", "n", "positives", "rate"])
        writer.writerows(rows)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = _parse_set(args.set)
    if args.seed is not None:
        overrides["split.seed"] = args.seed
    if args.format:
        overrides["output.format"] = args.format
    try:
        config = load_config(args.config, overrides)
    except (ConfigError, DataError, KeyError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    path = _out_path(args, config)
    echo = config.to_dict()
    try:
        if args.command == "stats":
            _stats(config, path)
        elif args.command == "audit":
            records = harness.run_audit(config)
            _print_records(records)
            emit_results(records, path, config.output_format, echo)
        elif args.command == "sweep":
            records = harness.run_sweep(config, workers=args.workers)
            _print_records(records)
            emit_results(records, path, config.output_format, echo)
        elif args.command == "intersect":
            report = harness.run_intersectional(config, workers=args.workers)
            _print_records(report.records)
            print(f"\nmax |{report.metric}| per arrangement:")
            for row in report.comparison:
                viol = "  ".join(f"{a}={v:.4f}" if v is not None else f"{a}=-"
                                 for a, v in row["max_violation"].items())
                flag = "  concatenation worse" if row["concat_exceeds"] else ""
                print(f"  {row['encoder']:<8} {row['hyperparameter'] or '-'}={row['value']}: {viol}{flag}")
            emit_results(report.records, path, config.output_format, echo,
                         extra={"comparison": report.comparison})
        elif args.command == "synth":
            records = harness.run_synth(config)
            emit_results(records, path, config.output_format, echo)
            print(f"{len(records)} decomposition records")
    except (DataError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"results written to {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
