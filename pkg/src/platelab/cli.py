"""Command line entry point: platelab <experiment> --config F --out DIR [--seed N] [--threads N].

Exit status 0 on success, 1 when a checked property is violated or a
module fails, 2 on usage or configuration errors.  Wall time goes to
stderr and to a '.timing' sidecar so the CSV stays byte-deterministic.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from .config import EXPERIMENTS, ConfigError, parse_config

THREAD_ENV = "PLATELAB_THREADS"
EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="platelab", description="Plate and bi-Laplace numerical experiments.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="TOML configuration file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the configured seed")
    p.add_argument("--threads", type=int, default=None, help="BLAS thread count")
    return p


def _set_threads(n: int) -> None:
    # only effective before numpy loads its BLAS; later calls are harmless
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def resolve_threads(cli_value: int | None, config_value: int) -> int:
    env = os.environ.get(THREAD_ENV)
    if env is not None:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"{THREAD_ENV}={env!r} is not an integer") from None
    elif cli_value is not None:
        n = cli_value
    else:
        n = config_value
    if n < 1:
        raise UsageError(f"thread count must be at least 1, got {n}")
    return n


def main(argv: list[str] | None = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = parse_config(args.config)
        if cfg.experiment != args.experiment:
            raise ConfigError(f"experiment: config declares {cfg.experiment!r}, command line asks for {args.experiment!r}")
        if args.seed is not None:
            cfg.seed = args.seed
        cfg.threads = resolve_threads(args.threads, cfg.threads)
    except (ConfigError, UsageError) as exc:
        print(f"platelab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _set_threads(cfg.threads)

    from .experiments import ExperimentError, run_experiment

    start = time.perf_counter()
    try:
        report = run_experiment(cfg)
    except ConfigError as exc:
        print(f"platelab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ExperimentError as exc:
        print(f"platelab: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    wall = time.perf_counter() - start
    out = Path(args.out) / cfg.output_file
    report.write(out)
    out.with_name(out.name + ".timing").write_text(f"wall_time_s {wall:.6f}\n")
    print(f"platelab: wrote {out} (wall time {wall:.3f} s)", file=sys.stderr)
    if not report.ok:
        for v in report.violations:
            print(f"platelab: violation: {v}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
