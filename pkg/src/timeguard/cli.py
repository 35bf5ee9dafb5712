"""Command line: run, sweep, allan, report.

Exit codes: 0 completed, 2 configuration error, 3 numerical failure.
``TIMEGUARD_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .allan import InsufficientDataError, allan_curve, decade_taus
from .detect import NumericalFailure
from .harness import ConfigError, emit_report, load_scenario, run_scenario, sweep, sweep_csv, write_run
from .harness.config import load_raw
from .harness.sweep import parse_param
from .oscillator import PhaseSeries

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
log = logging.getLogger("timeguard")


def _cmd_run(args) -> int:
    cfg = load_scenario(args.scenario)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = Path(args.out or cfg.output_dir or f"runs/{cfg.name}-seed{cfg.seed}")
    result = run_scenario(cfg)
    write_run(result, out)
    sys.stdout.write(emit_report(out, "text"))
    log.info("wrote %s", out)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    template = load_raw(args.template)
    grid = dict(parse_param(p) for p in args.param)
    cells = sweep(template, grid, workers=args.workers)
    text = sweep_csv(cells)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def _read_series(path) -> PhaseSeries:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"t", "offset"} <= set(reader.fieldnames):
            raise ConfigError(f"{path}: expected columns t,offset")
        rows = [(float(r["t"]), float(r["offset"])) for r in reader]
    if len(rows) < 3:
        raise ConfigError(f"{path}: need at least three samples")
    t = np.array([r[0] for r in rows])
    steps = np.diff(t)
    if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * max(1.0, steps[0]):
        raise ConfigError(f"{path}: samples must be uniformly spaced in t")
    return PhaseSeries(float(steps[0]), np.array([r[1] for r in rows]))


def _cmd_allan(args) -> int:
    series = _read_series(args.series)
    try:
        lo, hi = (int(v) for v in args.tau_decades.split(":"))
    except ValueError:
        raise ConfigError(f"--tau-decades expects A:B, got {args.tau_decades!r}") from None
    curve = allan_curve(series, decade_taus(series.sample_interval, lo, hi))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["tau", "adev", "n"])
    for tau, adev, n in zip(curve.taus, curve.adevs, curve.counts):
        w.writerow([repr(float(tau)), repr(float(adev)), int(n)])
    return EXIT_OK


def _cmd_report(args) -> int:
    sys.stdout.write(emit_report(args.run_dir, args.format))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="timeguard", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario file")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("sweep", help="run a parameter grid over a scenario template")
    s.add_argument("template")
    s.add_argument("--param", action="append", required=True, help="dotted.key=v1,v2,...")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", help="also write the aggregated CSV here")
    s.set_defaults(func=_cmd_sweep)

    a = sub.add_parser("allan", help="Allan deviation of a t,offset CSV")
    a.add_argument("series")
    a.add_argument("--tau-decades", default="0:3", help="A:B, taus from 10^A to 10^B s")
    a.set_defaults(func=_cmd_allan)

    rep = sub.add_parser("report", help="render a finished run")
    rep.add_argument("run_dir")
    rep.add_argument("--format", choices=("csv", "jsonl", "text"), default="text")
    rep.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("TIMEGUARD_LOG", "WARNING").upper(), format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, InsufficientDataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
