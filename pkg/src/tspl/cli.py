"""Command line entry point: ``tspl simulate | converge | verify | plot``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import ExitStack
from pathlib import Path
from unittest import mock

import numpy as np

from . import semigroups, spectral
from .config import ExperimentConfig, preset
from .experiments import run_converge, run_simulate
from .plotting import EmptyInputError, plot_convergence_csv
from .spectral import ConfigurationError
from .verify import run_suites

log = logging.getLogger("tspl")


def _threads(args) -> int:
    if args.threads:
        return args.threads
    env = os.environ.get("TSPL_THREADS")
    if env:
        return int(env)
    return os.cpu_count() or 1


def _load_config(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise ConfigurationError("give either --config or --preset, not both")
    cfg = ExperimentConfig.load(args.config) if args.config else preset(args.preset or "paper-desk")
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.out:
        cfg.output_dir = args.out
    return cfg


def _corrupted_heat(u, grid, nu, t):
    # 1% error in the heat multiplier; exercised by the hidden --corrupt-heat flag.
    u = np.asarray(u, dtype=float)
    return grid.irfft(np.exp(-1.01 * nu * t * grid.k2) * grid.rfft(u))


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    tau = 2.0 ** -args.tau_exponent if args.tau_exponent is not None else None
    man = run_simulate(cfg, args.scheme, args.seed if args.seed is not None else cfg.master_seed, tau)
    print(f"wrote {len(man.files)} files ({man.wallclock_s:.1f}s)")
    return 0


def cmd_converge(args) -> int:
    cfg = _load_config(args)
    man = run_converge(cfg, threads=_threads(args))
    for key, fit in sorted(man.slopes.items()):
        print(f"{key:40s} slope {fit['slope']:.3f} (residual {fit['residual']:.3f})")
    return 0


def cmd_verify(args) -> int:
    with ExitStack() as stack:
        if args.corrupt_heat:
            stack.enter_context(mock.patch.object(semigroups, "heat_step", _corrupted_heat))
        checks = run_suites(args.suite)
    for c in checks:
        print(f"[{'PASS' if c.passed else 'FAIL'}] {c.suite}: {c.name} (value {c.value:.3e}, threshold {c.threshold:.3e})")
    summary = {"passed": all(c.passed for c in checks), "checks": [c.as_dict() for c in checks]}
    if args.json:
        Path(args.json).write_text(json.dumps(summary, indent=2))
    return 0 if summary["passed"] else 1


def cmd_plot(args) -> int:
    for path in args.csv:
        for svg in plot_convergence_csv(path, args.out):
            print(svg)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tspl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path)
        p.add_argument("--preset")
        p.add_argument("--out")
        p.add_argument("--threads", type=int)
        p.add_argument("--seed", type=int)

    p = sub.add_parser("simulate", help="run one trajectory and write snapshots")
    common(p)
    p.add_argument("--scheme", default="random")
    p.add_argument("--tau-exponent", type=int, help="tau = 2**-m (default: first rung of the error ladder)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("converge", help="ensemble convergence study")
    common(p)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("verify", help="run the property suites")
    p.add_argument("--suite", action="append", help="restrict to a suite (repeatable)")
    p.add_argument("--json", help="write a machine-readable summary here")
    p.add_argument("--threads", type=int)
    p.add_argument("--corrupt-heat", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plot", help="render SVG plots from convergence CSV files")
    p.add_argument("csv", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None) or os.environ.get("TSPL_THREADS"):
        spectral.set_workers(_threads(args))
    try:
        return args.func(args)
    except (ConfigurationError, EmptyInputError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
