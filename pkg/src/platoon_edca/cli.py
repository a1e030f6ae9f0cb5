"""Command-line entry point.  Exit status: 0 ok, 1 configuration error, 2 numeric failure."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ScenarioConfig, load_config
from .errors import ConfigError, NumericError
from .pipeline import gap_table, run_pipeline, simulate_only

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

log = logging.getLogger("platoon_edca")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML scenario file (defaults used when omitted)")
    common.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="simulation seed (overrides seed)")
    common.add_argument("--workers", type=int, help="parallel grid cells (overrides workers)")
    common.add_argument("--model", choices=("fvd", "movm", "both"), help="car-following variant(s) for the delay bound")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="platoon-edca", description="Platoon stability bounds versus EDCA access delay.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("critical-delay", parents=[common], help="critical feedback delay per headway")
    sub.add_parser("gap", parents=[common], help="gap acceptance probability and AC0 rates")
    sub.add_parser("analyze", parents=[common], help="analytic delay, fits and reliability")
    sub.add_parser("simulate", parents=[common], help="replicated MAC simulation against the analytic model")
    sub.add_parser("sweep", parents=[common], help="full pipeline, simulation included when des.enabled")
    sub.add_parser("validate", parents=[common], help="check a config and print the defaulted result")
    return p


def _configure(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    changes = {}
    if args.out is not None:
        changes["output_dir"] = str(args.out)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed must be non-negative", [("--seed", "must be >= 0")])
        changes["seed"] = args.seed
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("workers must be >= 1", [("--workers", "must be >= 1")])
        changes["workers"] = args.workers
    if args.model is not None:
        changes["models"] = ("fvd", "movm") if args.model == "both" else (args.model,)
    return replace(cfg, **changes) if changes else cfg


def _print_rows(path: Path, limit: int = 40) -> None:
    lines = path.read_text().splitlines()
    for line in lines[:limit]:
        print(line)
    if len(lines) > limit:
        print(f"... ({len(lines) - limit} more rows in {path})")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _configure(args)
    except ConfigError as exc:
        print(f"configuration error: {len(exc.problems) or 1} problem(s)", file=sys.stderr)
        for path, msg in exc.problems or [("<config>", str(exc))]:
            print(f"  {path}: {msg}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        import yaml

        print(yaml.safe_dump(cfg.to_dict() | {"config_hash": cfg.config_hash()}, sort_keys=False, default_flow_style=None), end="")
        return EXIT_OK

    out = Path(cfg.output_dir)
    try:
        if args.command == "critical-delay":
            res = run_pipeline(cfg, stages="bounds")
            _print_rows(out / res.files[0])
        elif args.command == "gap":
            path, failed = gap_table(cfg)
            _print_rows(path)
            return EXIT_NUMERIC if failed else EXIT_OK
        elif args.command == "analyze":
            res = run_pipeline(cfg, stages="analytic")
            print(f"wrote {len(res.files)} files to {out}")
        elif args.command == "simulate":
            recs = simulate_only(cfg)
            _print_rows(out / "des_comparison.csv")
            failures = [r.error for r in recs if r.error]
            return EXIT_NUMERIC if failures else EXIT_OK
        else:
            res = run_pipeline(cfg, stages="all")
            print(f"wrote {len(res.files)} files to {out}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    if res.failures:
        print(f"{len(res.failures)} grid cell(s) failed:", file=sys.stderr)
        for f in res.failures:
            print(f"  {f}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
