"""Command line: ``run <config>``, ``summarize <csv>``, ``demo <mode>``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import experiments as ex
from .errors import ConfigError

log = logging.getLogger("trunclasso")


def _write_outputs(spec, rows, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    metrics = os.path.join(out_dir, spec.output.get("csv", "metrics.csv"))
    summary = os.path.join(out_dir, spec.output.get("summary", "summary.csv"))
    ex.emit_csv(rows, metrics)
    if rows:
        ex.emit_summary_csv(ex.summarize(rows), summary)
    log.info("wrote %s and %s", metrics, summary)


def _execute(spec, args):
    if args.seed is not None:
        spec.master_seed = args.seed
    rows = ex.run_experiment(spec, workers=args.workers, timing=args.timing)
    _write_outputs(spec, rows, args.out)


def cmd_run(args):
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: invalid JSON ({exc})") from None
    _execute(ex.spec_from_dict(cfg), args)


def cmd_demo(args):
    _execute(ex.demo_spec(args.mode), args)


def cmd_summarize(args):
    summary = ex.summarize(ex.read_metrics_csv(args.csv))
    if args.out:
        ex.emit_summary_csv(summary, args.out)
    else:
        ex.emit_summary_csv(summary, sys.stdout)


def build_parser():
    p = argparse.ArgumentParser(prog="trunclasso",
                                description="Truncated regularized least squares experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def sweep_opts(sp):
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--workers", type=int, default=None,
                        help=f"worker processes (default: ${ex.WORKERS_ENV} or 1)")
        sp.add_argument("--seed", type=int, default=None, help="override master_seed")
        sp.add_argument("--timing", action="store_true",
                        help="record wall_ms (output is then not reproducible)")

    run = sub.add_parser("run", help="run an experiment config (JSON)")
    run.add_argument("config")
    sweep_opts(run)
    run.set_defaults(func=cmd_run)

    demo = sub.add_parser("demo", help="run a built-in desk-scale experiment")
    demo.add_argument("mode", choices=sorted(ex.DEMOS))
    sweep_opts(demo)
    demo.set_defaults(func=cmd_demo)

    summ = sub.add_parser("summarize", help="quartiles and fitted constants of a metrics CSV")
    summ.add_argument("csv")
    summ.add_argument("--out", default=None, help="write here instead of stdout")
    summ.set_defaults(func=cmd_summarize)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
