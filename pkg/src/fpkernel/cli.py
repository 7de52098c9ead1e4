"""Command line entry point.

    fpkernel run CONFIG [--out-dir DIR] [--seed N] [--quiet]
    fpkernel kernel-check CONFIG [--out-dir DIR] [--seed N] [--quiet]

``CONFIG`` is a YAML file or the name of a bundled config. Exit codes:
0 success, 1 config error (nothing written), 2 numerical failure (nothing
written), 3 a checked property failed (outputs written).
"""
import argparse
import json
import os
from pathlib import Path
import shutil
import sys
import tempfile
import traceback

import numpy as np

from . import __version__, _backend, config, experiments, io
from .errors import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PROPERTY = 0, 1, 2, 3
NUMERICAL_ERRORS = (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError)


def _parser():
    p = argparse.ArgumentParser(prog="fpkernel", description="PDE-constrained kernel regression and density experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run an experiment config"), ("kernel-check", "run the kernel invariant suite")):
        s = sub.add_parser(name, help=text)
        s.add_argument("config", help="YAML config path or bundled config name")
        s.add_argument("--out-dir", default=None, help="output directory (default: out/<config name>)")
        s.add_argument("--seed", type=int, default=None, help="override the config's seed")
        s.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")
    sub.add_parser("list", help="list bundled configs")
    return p


def _report_error(kind, message, **extra):
    print(json.dumps({"error": kind, "message": message, **extra}), file=sys.stderr)


def _module_of(exc):
    """Package module where ``exc`` was raised, for error context."""
    here = Path(__file__).parent
    module = None
    for frame in traceback.extract_tb(exc.__traceback__):
        path = Path(frame.filename)
        if path.parent == here:
            module = path.stem
    return module or "fpkernel"


def write_outputs(out_dir, cfg, outcome):
    """Write every artifact into a scratch directory, then move them into place."""
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=".fpkernel-", dir=out_dir.parent))
    try:
        for name, writer in outcome.writers.items():
            writer(scratch / name)
        metrics = {
            "experiment": cfg.experiment,
            "name": cfg.name,
            "seed": cfg.seed,
            **outcome.metrics,
            "properties": [p.as_dict() for p in outcome.properties],
        }
        io.write_json(scratch / cfg.outputs.metrics, metrics)
        names = sorted(p.name for p in scratch.iterdir())
        manifest = {
            "config_sha256": cfg.digest(),
            "seed": cfg.seed,
            "library": "fpkernel",
            "library_version": __version__,
            "backend": _backend.NAME,
            "experiment": cfg.experiment,
            "files": {name: io.sha256_file(scratch / name) for name in names},
        }
        io.write_json(scratch / cfg.outputs.manifest, manifest)
        out_dir.mkdir(exist_ok=True)
        for path in scratch.iterdir():
            os.replace(path, out_dir / path.name)
    finally:
        shutil.rmtree(scratch, ignore_errors=True)
    return out_dir


def _summary(cfg, outcome, out_dir):
    lines = [f"{cfg.experiment} {cfg.name or ''}".rstrip() + f" -> {out_dir}"]
    for key, value in outcome.metrics.items():
        if key.startswith("coefficient_"):
            continue
        lines.append(f"  {key} = {value}")
    for p in outcome.properties:
        status = "skip" if p.skipped else ("pass" if p.passed else "FAIL")
        lines.append(f"  [{status}] {p.name}: measured {p.measured:.6g} (tolerance {p.tolerance:.6g})")
    return "\n".join(lines)


def execute(command, config_ref, out_dir=None, seed=None, quiet=False):
    """Run one subcommand; returns the process exit code."""
    try:
        cfg, path = config.load(config_ref, seed)
    except ConfigError as exc:
        _report_error("config", str(exc), details=exc.details)
        return EXIT_CONFIG
    out_dir = Path(out_dir) if out_dir else Path("out") / path.stem
    try:
        if command == "kernel-check":
            outcome = experiments.run_kernel_check(cfg)
        else:
            outcome = experiments.run(cfg, path.parent)
        # writers may still evaluate fits; a failure leaves nothing behind
        write_outputs(out_dir, cfg, outcome)
    except ConfigError as exc:
        _report_error("config", str(exc), details=exc.details)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        _report_error("numerical", f"{type(exc).__name__}: {exc}", module=_module_of(exc))
        return EXIT_NUMERICAL
    if not quiet:
        print(_summary(cfg, outcome, out_dir))
    if outcome.failed:
        names = [p.name for p in outcome.failed]
        _report_error("property", "failed: " + ", ".join(names), failed=names)
        return EXIT_PROPERTY
    return EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "list":
        print("\n".join(config.bundled_configs()))
        return EXIT_OK
    return execute(args.command, args.config, args.out_dir, args.seed, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
