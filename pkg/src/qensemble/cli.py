"""Command line entry point: ``qensemble run|report|resources``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import bench
from .errors import ConfigurationError, ContractViolation, IngestionError


def _load(args) -> bench.ExperimentConfig:
    config = bench.load_config(args.config)
    return config.with_overrides(seed=args.seed, backend=args.backend)


def cmd_run(args) -> int:
    config = _load(args)
    records = bench.run_experiment(config, args.out, args.jobs)
    out = config.output_dir(args.out)
    failed = sum(1 for r in records if not r.ok)
    print(f"{len(records)} records ({failed} failed) in {out}")
    return 0


def cmd_report(args) -> int:
    records = bench.read_records(args.records_dir)
    written = bench.emit_report(records, args.out or args.records_dir)
    for path in written.values():
        print(path)
    return 0


def cmd_resources(args) -> int:
    config = _load(args)
    rows = bench.resource_table(config)
    columns = bench.runner.RESOURCE_COLUMNS
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        fh = path.open("w", newline="", encoding="utf-8")
    else:
        fh = sys.stdout
    writer = csv.writer(fh)
    writer.writerow(columns)
    for row in rows:
        writer.writerow([row[c] for c in columns])
    if fh is not sys.stdout:
        fh.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qensemble", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--seed", type=int, default=None, help="override the root seed")
        p.add_argument("--backend", default=None,
                       help="exact | shots:<n> | noisy | noisy:<p1>,<p2>")
        p.add_argument("--out", default=None, help=out_help)

    p = sub.add_parser("run", help="run the experiment grid of a YAML config")
    p.add_argument("config")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
    common(p, f"output directory (default: config 'output', else ${bench.OUTPUT_ENV}/<name>)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="rebuild summaries from a records directory")
    p.add_argument("records_dir")
    p.add_argument("--out", default=None, help="write report files here instead")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("resources", help="print the per-member resource table")
    p.add_argument("config")
    common(p, "write the table to this CSV file")
    p.set_defaults(func=cmd_resources)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, ContractViolation, IngestionError, OSError) as exc:
        print(f"qensemble: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
