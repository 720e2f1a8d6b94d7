"""Command line entry point: ``incipient {generate,run,theory,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import datagen
from .config import load_config
from .datagen import ConfigurationError
from .experiment import (derived_seed, emit_results, export_histograms, read_results, run_experiment,
                         summarize_records, write_report)
from .theory import delta_grid, verify_theorem_grid, write_theory_report

log = logging.getLogger("incipient")


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    gen = cfg.data.generator(derived_seed(args.seed, "data"))
    data = datagen.generate(gen, datagen.get_policy(cfg.data.policy))
    out = Path(args.out)
    datagen.write_csv(data, out)
    print(f"wrote {len(data)} examples ({data.d} features) to {out}")
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out or cfg.output.dir)
    t0 = time.perf_counter()
    records = run_experiment(cfg, jobs=args.jobs)
    paths = emit_results(records, out_dir)
    n_err = sum(r["status"] != "ok" for r in records)
    if cfg.output.histograms:
        s = cfg.sweep
        paths.append(export_histograms(cfg, s.seeds[0], s.rho[0], max(s.K), out_dir))
    for p in paths:
        print(f"wrote {p}")
    print(f"{len(records)} records, {n_err} failed, {time.perf_counter() - t0:.1f}s")
    return 0 if n_err == 0 else 1


def cmd_theory(args) -> int:
    cfg = load_config(args.config)
    grid = cfg.theory
    if args.trials is not None:
        if args.trials < 1:
            raise ConfigurationError("trials must be positive")
        grid = replace(grid, trials=args.trials)
    if args.seed is not None:
        grid = replace(grid, seed=args.seed)
    rows, summary = verify_theorem_grid(grid)
    exact = delta_grid(grid.c_values)
    summary["delta_ordering_half_step_grid"] = all(r["ordered"] for r in exact)
    summary["half_step_grid_cells"] = len(exact)
    out_dir = Path(args.out or cfg.output.dir)
    for p in write_theory_report(rows, summary, out_dir):
        print(f"wrote {p}")
    print(json.dumps(summary, indent=2, sort_keys=True))
    ok = all(v for k, v in summary.items() if isinstance(v, bool))
    return 0 if ok else 1


def cmd_report(args) -> int:
    records = []
    for path in args.results:
        records.extend(read_results(path))
    tables = summarize_records(records)
    out_dir = Path(args.out)
    for p in write_report(tables, out_dir):
        print(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="incipient", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic severity-spectrum dataset as CSV")
    p.add_argument("--config", help="TOML config (defaults if omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="data.csv")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="run the (seed, rho, K, q, theta, metric) sweep")
    p.add_argument("--config", help="TOML config (defaults if omitted)")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("theory", help="Monte Carlo check of the MEAN vs VAR ranking claims")
    p.add_argument("--config", help="TOML config (defaults if omitted)")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("report", help="aggregate results CSVs into box-plot summary tables")
    p.add_argument("results", nargs="+", help="results.csv files")
    p.add_argument("--out", default="report")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
