"""``dirac-eq`` command line entry point.

    dirac-eq <verify|covariance|ensemble|rooms|decay> [--config PATH] [--out DIR]
             [--seed U64] [--threads N] [--dump-fields] [--print-config]

Exit status: 0 when every check passes, 1 when a check fails, 2 for an
invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy
import scipy.fft as sfft

from . import __version__
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, default_config, load_config
from .experiments import run_experiment
from .fieldio import write_field
from .report import emit_report, file_digest
from .stats import BudgetError

__all__ = ["main", "build_parser", "run"]


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dirac-eq", description="Free Dirac field experiments with random initial data.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="experiment", required=True, metavar="experiment")
    helps = {
        "verify": "algebra, propagator and duality invariants",
        "covariance": "exact covariance convergence to equilibrium",
        "ensemble": "Monte Carlo Gaussianity of projections",
        "rooms": "room-corridor decomposition and variance scaling",
        "decay": "sup-norm decay of evolved test functions",
    }
    for name in EXPERIMENTS:
        s = sub.add_parser(name, help=helps[name])
        s.add_argument("--config", type=Path, help="INI config (defaults are used when omitted)")
        s.add_argument("--out", type=Path, help="output directory (default: output.directory/<experiment>)")
        s.add_argument("--seed", type=_u64, help="override sampler.seed")
        s.add_argument("--threads", type=_positive, help="FFT worker threads (override run.threads)")
        s.add_argument("--dump-fields", action="store_true", help="write binary field dumps")
        s.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    return p


def _resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config, args.experiment) if args.config else default_config(args.experiment)
    if args.seed is not None:
        cfg = cfg.replace(sampler__seed=args.seed)
    if args.threads is not None:
        cfg = cfg.replace(run__threads=args.threads)
    return cfg.validate()


def run(cfg: ExperimentConfig, out: Path, dump_fields: bool = False, stream=None) -> int:
    """Run one experiment, write its artifacts under ``out`` and return the exit status."""
    stream = stream or sys.stdout
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    with sfft.set_workers(cfg.get("run", "threads")):
        result = run_experiment(cfg)
    wall = time.perf_counter() - start

    files = emit_report(result, out)
    cfg_path = out / "config.ini"
    cfg_path.write_text(cfg.to_ini())
    files.append(cfg_path)
    if dump_fields:
        fdir = out / "fields"
        fdir.mkdir(exist_ok=True)
        for name, fld in sorted(result.fields.items()):
            p = fdir / f"{name}.bin"
            write_field(p, fld)
            files.append(p)

    manifest = {
        "experiment": cfg.experiment,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "code_version": __version__,
        "wall_time_s": round(wall, 3),
        "threads": cfg.get("run", "threads"),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "passed": result.passed,
        "files": [{"path": str(p.relative_to(out)), "sha256": file_digest(p), "bytes": p.stat().st_size}
                  for p in sorted(files)],
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    print(f"experiment {cfg.experiment}: {'PASS' if result.passed else 'FAIL'} ({wall:.1f} s) -> {out}", file=stream)
    for c in result.checks:
        print("  " + c.line(), file=stream)
    return 0 if result.passed else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
    except ConfigError as e:
        print(f"dirac-eq: invalid config: {e}", file=sys.stderr)
        return 2
    if args.print_config:
        sys.stdout.write(cfg.to_ini())
        return 0
    out = args.out if args.out is not None else Path(cfg.get("output", "directory")) / cfg.experiment
    try:
        return run(cfg, out, args.dump_fields)
    except (ConfigError, BudgetError) as e:
        print(f"dirac-eq: invalid config: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
