"""Command-line entry point: ``perturbiga run`` and ``perturbiga list``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, NumericalError
from .experiments import REGISTRY, build_config, list_experiments, parse_config_text, run

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="perturbiga", description="Perturbed-eigenvalue outlier suppression experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("experiment", nargs="?", help="experiment name (overrides the config file)")
    r.add_argument("--config", type=Path, help="flat key=value config file")
    r.add_argument("--out", help="output directory")
    r.add_argument("--seed", type=int)
    r.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")

    ls = sub.add_parser("list", help="list experiments")
    ls.add_argument("--json", action="store_true", help="machine-readable output")
    return ap


def _cmd_list(args) -> int:
    entries = list_experiments()
    if args.json:
        print(json.dumps(entries, indent=2))
        return EXIT_OK
    for e in entries:
        print(f"{e['name']:<18} {e['description']}")
        print(f"{'':<18} params: {' '.join(e['params'])}")
        print(f"{'':<18} reproduces: {e['reproduces']}")
    return EXIT_OK


def _cmd_run(args) -> int:
    values = {}
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
        values = parse_config_text(text, source=str(args.config))
    if args.experiment:
        if args.experiment not in REGISTRY:
            raise ConfigError(f"unknown experiment {args.experiment!r}; valid: {', '.join(REGISTRY)}")
        values["experiment"] = args.experiment
    if args.out is not None:
        values["out"] = args.out
    if args.seed is not None:
        values["seed"] = args.seed
    cfg = build_config(values, args.override)
    for name, path in run(cfg).items():
        print(f"{name}: {path}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _cmd_list(args) if args.command == "list" else _cmd_run(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
