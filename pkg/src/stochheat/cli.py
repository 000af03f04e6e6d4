"""Command line entry point: ``stochheat run | report | accept``."""

from __future__ import annotations

import argparse
import logging
import sys
import warnings

from .config import ConfigError, acceptance_config, load_config
from .experiments import emit_report, resolve_out, run_experiment
from .parallel import default_workers


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    common.add_argument("--workers", type=int, default=None,
                        help="worker threads (default: available cores)")
    common.add_argument("--out", default=None, help="output directory (overrides STOCHHEAT_OUT and the config)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")

    p = argparse.ArgumentParser(prog="stochheat", description=__doc__)
    sub = p.add_subparsers(dest="verb", required=True)
    run = sub.add_parser("run", parents=[common], help="run the experiment described by a YAML file")
    run.add_argument("config")
    rep = sub.add_parser("report", help="summarize a finished run directory")
    rep.add_argument("dir")
    acc = sub.add_parser("accept", parents=[common], help="run the full acceptance suite with built-in defaults")
    acc.add_argument("--criteria", default=None, help="comma-separated subset of criterion ids")
    acc.add_argument("--no-rerun", action="store_true", help="skip the determinism rerun")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.verb == "report":
        try:
            text, _, code = emit_report(args.dir)
        except FileNotFoundError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(text)
        return code

    workers = args.workers or default_workers()
    if args.verb == "run":
        try:
            cfg, defaulted = load_config(args.config)
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    else:
        cfg, defaulted = acceptance_config(), ["all (built-in acceptance defaults)"]
        if args.criteria:
            cfg.options["criteria"] = [int(c) for c in args.criteria.split(",")]
        cfg.options["rerun_workers"] = 0 if args.no_rerun else (4 if workers == 1 else 1)
    if args.seed is not None:
        cfg.seed = args.seed
    out = resolve_out(cfg.out, args.out)
    with warnings.catch_warnings():
        if not args.verbose:
            warnings.simplefilter("ignore", RuntimeWarning)
        result = run_experiment(cfg, workers, out, defaulted)
    if result.status != "completed":
        print(f"run failed: {result.error} (partial outputs in {result.path})", file=sys.stderr)
    text, _, code = emit_report(result.path) if result.summary else ("", [], 1)
    print(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
