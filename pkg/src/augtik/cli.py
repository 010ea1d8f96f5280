"""Command-line entry point: ``augtik --problem example1 --cells 4096 --out runs/ex1``.

Each run writes ``log.csv`` (one row per outer iteration), ``summary.json``
and, when the problem has an exact solution, ``errors.csv`` with the errors
of the successful and intermediate iterates against alpha. ``--plot-data``
adds ``solution.csv`` with the final nodal fields. The exit status is 0 only
when every run converged.
"""

import argparse
import csv
import io
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, Optional

import yaml

from .auglag import NOT_SUCCESSFUL, SolverParams, run_batch
from .problems import PROBLEMS

OUT_ENV = "AUGTIK_OUT"
EXIT_NOT_CONVERGED = 1
EXIT_USAGE = 2
EXIT_IO = 3

_PARAM_KEYS = {f.name for f in fields(SolverParams)}
_CONFIG_KEYS = {"problem", "cells", "beta", "batch_beta", "out", "plot_data", "workers"} | _PARAM_KEYS


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass
class RunConfig:
    problem: str = "example1"
    cells: Optional[int] = None
    params: SolverParams = field(default_factory=SolverParams)
    out: str = "augtik_out"
    beta: Optional[float] = None
    batch_beta: List[float] = field(default_factory=list)
    plot_data: bool = False
    workers: Optional[int] = None

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem: unknown problem {self.problem!r}; choose from {sorted(PROBLEMS)}")
        if self.cells is not None and self.cells < 4:
            raise ConfigError("cells: resolution must be at least 4")
        for key, b in [("beta", self.beta)] + [("batch_beta", b) for b in self.batch_beta]:
            if b is not None and not b > 0:
                raise ConfigError(f"{key}: β must be positive")


def build_parser():
    p = argparse.ArgumentParser(prog="augtik", description="Augmented Lagrange solver with decreasing Tikhonov weight.")
    p.add_argument("--config", help="flat YAML file of key: value settings (flags take precedence)")
    p.add_argument("--problem", help=f"one of {', '.join(sorted(PROBLEMS))}")
    p.add_argument("--cells", type=int, help="cells per axis (default 4096 in 1D, 128 in 2D)")
    p.add_argument("--alpha1", type=float, help="initial Tikhonov weight")
    p.add_argument("--rho1", type=float, help="initial penalty parameter")
    p.add_argument("--theta", type=float, help="penalty growth factor (> 1)")
    p.add_argument("--omega", type=float, help="Tikhonov decay factor in (0,1)")
    p.add_argument("--tau", type=float, help="sufficient-decrease factor in (0,1)")
    p.add_argument("--eps", type=float, help="outer stopping tolerance")
    p.add_argument("--eps-i", dest="eps_i", type=float, help="intermediate-step tolerance (< eps)")
    p.add_argument("--max-outer", dest="max_outer", type=int, help="outer iteration cap")
    p.add_argument("--max-inner", dest="max_inner", type=int, help="active-set iteration cap")
    p.add_argument("--beta", type=float, help="override the sparsity weight")
    p.add_argument("--batch-beta", dest="batch_beta", help="comma-separated beta values, run concurrently")
    p.add_argument("--workers", type=int, help="worker processes for batch runs")
    p.add_argument("--out", help=f"output directory (overridden by ${OUT_ENV})")
    p.add_argument("--plot-data", dest="plot_data", action="store_true", default=None,
                   help="also write the final nodal fields to solution.csv")
    return p


def _parse_floats(text, key):
    if isinstance(text, (list, tuple)):
        items = list(text)
    else:
        items = [t for t in str(text).split(",") if t.strip()]
    try:
        return [float(t) for t in items]
    except ValueError:
        raise ConfigError(f"{key}: expected a comma-separated list of numbers, got {text!r}") from None


def load_config_file(path):
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: {path} is not valid YAML ({exc})") from None
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a flat mapping of key: value pairs")
    out = {}
    for key, value in raw.items():
        norm = str(key).replace("-", "_")
        if norm not in _CONFIG_KEYS:
            raise ConfigError(f"{key}: unknown configuration key")
        if isinstance(value, (dict, list)) and norm != "batch_beta":
            raise ConfigError(f"{key}: nested values are not supported")
        out[norm] = value
    return out


def parse_config(argv=None, environ=None):
    """Merge defaults, the optional config file, flags and the environment into a RunConfig."""
    environ = os.environ if environ is None else environ
    args = build_parser().parse_args(argv)
    merged = load_config_file(args.config) if args.config else {}
    for key, value in vars(args).items():
        if key != "config" and value is not None:
            merged[key] = value
    if environ.get(OUT_ENV):
        merged["out"] = environ[OUT_ENV]

    params = {}
    for key in _PARAM_KEYS & merged.keys():
        kind = int if key in ("max_outer", "max_inner") else float
        try:
            params[key] = kind(merged.pop(key))
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a number") from None
    try:
        solver = SolverParams(**params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if "batch_beta" in merged:
        merged["batch_beta"] = _parse_floats(merged["batch_beta"], "batch_beta")
    for key, kind in (("cells", int), ("beta", float), ("workers", int)):
        if key in merged:
            try:
                merged[key] = kind(merged[key])
            except (TypeError, ValueError):
                raise ConfigError(f"{key}: expected a number") from None
    if "plot_data" in merged:
        merged["plot_data"] = bool(merged["plot_data"])
    if "out" in merged:
        merged["out"] = str(merged["out"])
    return RunConfig(params=solver, **merged)


def errors_csv(result):
    """Error of each successful or intermediate iterate against alpha."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("k", "alpha", "step_class", "err_u_L2", "err_y_L2", "err_y_over_alpha"))
    for r in result.log:
        if r.step_class != NOT_SUCCESSFUL and r.err_u_L2 is not None:
            values = (r.alpha, r.err_u_L2, r.err_y_L2, r.err_y_over_alpha)
            alpha, eu, ey, eya = (repr(float(v)) for v in values)
            writer.writerow((r.k, alpha, r.step_class, eu, ey, eya))
    return buf.getvalue()


def solution_csv(result, grid_coords):
    it = result.iterate
    names = ("x", "y")[: len(grid_coords)]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names + ("u", "state", "adjoint", "mu"))
    for row in zip(*grid_coords, it.u, it.y, it.p, result.mu):
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def write_outputs(result, directory, plot_data=False):
    from .problems import get_problem

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "log.csv").write_text(result.log.to_csv())
    (directory / "summary.json").write_text(result.summary_json())
    if any(r.err_u_L2 is not None for r in result.log):
        (directory / "errors.csv").write_text(errors_csv(result))
    if plot_data:
        spec = get_problem(result.problem)
        grid = spec.grid(result.resolution[0])
        (directory / "solution.csv").write_text(solution_csv(result, grid.coords))


def _jobs(config):
    if not config.batch_beta:
        return [(Path(config.out), dict(name=config.problem, cells=config.cells, params=config.params, beta=config.beta))]
    return [
        (Path(config.out) / f"beta_{b!r}", dict(name=config.problem, cells=config.cells, params=config.params, beta=b))
        for b in config.batch_beta
    ]


def run_and_emit(config, stream=sys.stdout):
    """Run every instance of ``config`` and write its outputs; return the exit status."""
    jobs = _jobs(config)
    results = run_batch([job for _, job in jobs], max_workers=config.workers)
    status = 0
    for (directory, job), result in zip(jobs, results):
        try:
            write_outputs(result, directory, config.plot_data)
        except OSError as exc:
            print(f"augtik: cannot write outputs to {directory}: {exc.strerror or exc}", file=sys.stderr)
            return EXIT_IO
        counts = result.log.counts()
        print(
            f"{result.problem} cells={result.resolution[0]} beta={job['beta'] if job['beta'] is not None else 'default'}: "
            f"{result.status} after {len(result.log)} iterations "
            f"({counts['successful']}/{counts['intermediate']}/{counts['not_successful']}), "
            f"stop_residual={result.stop_residual:.3e} -> {directory}",
            file=stream,
        )
        if not result.converged:
            status = EXIT_NOT_CONVERGED
    return status


def main(argv=None):
    try:
        config = parse_config(argv)
    except ConfigError as exc:
        print(f"augtik: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return run_and_emit(config)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
