"""``restore`` command line front end.

Exit codes: 0 success, 1 input error, 2 solver stopped at ``--max-iter``
before reaching ``--tol``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..field import Histogram, Image, LevelGrid, histogram_of
from ..solver import DataTerm, Problem, SolverParams, SolveReport, solve
from ..transport import w1_cdf
from .io import (
    InputError,
    format_histogram,
    read_config,
    read_histogram,
    read_mask,
    read_pgm,
    write_histogram,
    write_json,
    write_pgm,
    write_trace,
)
from .presets import PRESETS, RNG_NAME, run_preset

log = logging.getLogger("histrestore")

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2

SYNTHETIC_PRIORS = ("bimodal", "uniform")

# option name -> (type, default)
OPTIONS = {
    "input": (str, None),
    "mask": (str, None),
    "prior": (str, None),
    "prior_from": (str, None),
    "k": (int, 16),
    "lambda": (float, 0.1),
    "nu": (float, None),
    "alpha": (float, None),
    "gamma": (float, SolverParams.gamma),
    "rho": (float, SolverParams.rho),
    "tol": (float, SolverParams.tol),
    "max_iter": (int, SolverParams.max_iter),
    "trace_every": (int, SolverParams.trace_every),
    "out_dir": (str, "."),
    "seed": (int, 0),
    "isotropic_tv": (bool, False),
}


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    mask: str | None = None
    prior: str | None = None
    prior_from: str | None = None
    k: int = 16
    lam: float = 0.1
    nu: float | None = None
    alpha: float | None = None
    gamma: float = SolverParams.gamma
    rho: float = SolverParams.rho
    tol: float = SolverParams.tol
    max_iter: int = SolverParams.max_iter
    trace_every: int = SolverParams.trace_every
    out_dir: str = "."
    seed: int = 0
    isotropic_tv: bool = False

    @property
    def params(self) -> SolverParams:
        return SolverParams(gamma=self.gamma, rho=self.rho, max_iter=self.max_iter, tol=self.tol,
                            trace_every=self.trace_every)


def _parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def build_config(args: argparse.Namespace) -> RunConfig:
    """Merge flags over the optional ``--config`` file over built-in defaults."""
    from_file = read_config(args.config) if getattr(args, "config", None) else {}
    unknown = set(from_file) - set(OPTIONS)
    if unknown:
        raise InputError(args.config, f"unknown keys: {', '.join(sorted(unknown))}")
    values = {}
    for key, (kind, default) in OPTIONS.items():
        flag = getattr(args, key, None)
        if flag is not None and flag is not False:
            values[key] = flag
        elif key in from_file:
            try:
                values[key] = _parse_bool(from_file[key]) if kind is bool else kind(from_file[key])
            except ValueError as exc:
                raise InputError(args.config, f"bad value for {key}: {exc}") from None
        else:
            values[key] = default
    values["lam"] = values.pop("lambda")
    cfg = RunConfig(command=args.command, **values)
    if cfg.k < 2:
        raise InputError("<flags>", f"k must be at least 2, got {cfg.k}")
    if cfg.lam < 0 or (cfg.nu is not None and cfg.nu < 0):
        raise InputError("<flags>", "weights must be nonnegative")
    return cfg


def synthetic_prior(name: str, grid: LevelGrid) -> Histogram:
    if name == "bimodal":
        mass = np.zeros(grid.k)
        mass[[0, -1]] = 0.5
        return Histogram(grid, mass)
    if name == "uniform":
        return Histogram.normalized(grid, np.ones(grid.k))
    raise InputError("<flags>", f"unknown synthetic prior {name!r}; choose from {', '.join(SYNTHETIC_PRIORS)}")


def load_prior(cfg: RunConfig, grid: LevelGrid) -> Histogram | None:
    if cfg.prior and cfg.prior_from:
        raise InputError("<flags>", "give either --prior or --prior-from, not both")
    if cfg.prior:
        if cfg.prior.startswith("synthetic:"):
            return synthetic_prior(cfg.prior.split(":", 1)[1], grid)
        prior = read_histogram(cfg.prior)
        if prior.grid != grid:
            raise InputError(cfg.prior, f"histogram has k={prior.grid.k}, run uses k={grid.k}")
        return prior
    if cfg.prior_from:
        return histogram_of(read_pgm(cfg.prior_from), grid)
    return None


def run_summary(report: SolveReport, problem: Problem) -> dict:
    summary = dict(
        relaxed_energy=report.relaxed_energy,
        primal_energy=report.primal_energy,
        gap=report.gap,
        nonintegral_fraction=report.nonintegral_fraction,
        iterations=report.iterations,
        converged=report.converged,
        residual=report.residual,
        threshold_alpha=report.alpha,
        solver=dict(gamma=report.params.gamma, rho=report.params.rho, tol=report.params.tol,
                    max_iter=report.params.max_iter, rounding=report.params.rounding),
        weights=dict(lam=problem.lam, nu=problem.nu),
        k=problem.grid.k,
    )
    if problem.prior is not None:
        summary["w1_result_prior"] = w1_cdf(histogram_of(report.u_star, problem.grid), problem.prior)
        summary["w1_input_prior"] = w1_cdf(histogram_of(problem.input, problem.grid), problem.prior)
    return summary


def _write_outputs(out_dir: Path, report: SolveReport, problem: Problem, extra: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_pgm(out_dir / "result.pgm", report.u_star)
    write_trace(out_dir / "trace.csv", report.trace)
    write_json(out_dir / "summary.json", {**run_summary(report, problem), **extra})
    write_json(out_dir / "timing.json", dict(wall_time=report.wall_time))


def _restore(cfg: RunConfig, inpaint: bool) -> int:
    if not cfg.input:
        raise InputError("<flags>", "--input is required")
    image = read_pgm(cfg.input)
    grid = LevelGrid(cfg.k)
    prior = load_prior(cfg, grid)
    nu = cfg.nu if cfg.nu is not None else (1.0 if prior is not None else 0.0)
    if nu > 0 and prior is None:
        raise InputError("<flags>", "--nu > 0 needs --prior or --prior-from")
    if inpaint:
        if not cfg.mask:
            raise InputError("<flags>", "inpaint needs --mask")
        term = DataTerm.masked(read_mask(cfg.mask, image.shape))
    else:
        term = DataTerm.truncated(cfg.alpha) if cfg.alpha else DataTerm.quadratic()
    problem = Problem(image, grid, term, prior, lam=cfg.lam, nu=nu, isotropic=cfg.isotropic_tv)
    report = solve(problem, cfg.params)
    _write_outputs(Path(cfg.out_dir), report, problem, dict(command=cfg.command, input=cfg.input))
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def cmd_denoise(cfg: RunConfig) -> int:
    return _restore(cfg, inpaint=False)


def cmd_inpaint(cfg: RunConfig) -> int:
    return _restore(cfg, inpaint=True)


def cmd_hist(cfg: RunConfig, output: str | None) -> int:
    if not cfg.input:
        raise InputError("<flags>", "--input is required")
    h = histogram_of(read_pgm(cfg.input), LevelGrid(cfg.k))
    if output:
        write_histogram(output, h)
    else:
        sys.stdout.write(format_histogram(h))
    return EXIT_OK


def cmd_w1(path_a: str, path_b: str) -> int:
    a, b = read_histogram(path_a), read_histogram(path_b)
    if a.grid != b.grid:
        raise InputError(path_b, f"histogram has k={b.grid.k}, {path_a} has k={a.grid.k}")
    print(repr(w1_cdf(a, b)))
    return EXIT_OK


def cmd_experiment(name: str, cfg: RunConfig, params: SolverParams | None = None) -> int:
    if name not in PRESETS:
        print(f"unknown experiment {name!r}; valid names: {', '.join(PRESETS)}", file=sys.stderr)
        return EXIT_INPUT
    result = run_preset(name, seed=cfg.seed, params=params)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for key, image in result.images.items():
        write_pgm(out_dir / f"{key}.pgm", image)
    arms, timing = {}, {}
    for arm, report in result.reports.items():
        write_trace(out_dir / f"trace_{arm}.csv", report.trace)
        arms[arm] = run_summary(report, result.problems[arm])
        timing[arm] = report.wall_time
    write_json(out_dir / "comparison.json", dict(
        experiment=name, seed=cfg.seed, rng=RNG_NAME, settings=result.settings,
        metrics=result.metrics, arms=arms,
    ))
    write_json(out_dir / "timing.json", dict(wall_time=timing))
    converged = all(r.converged for r in result.reports.values())
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="file of 'key = value' lines; flags take precedence")
    p.add_argument("--input")
    p.add_argument("--mask")
    p.add_argument("--prior", help="histogram file or synthetic:<bimodal|uniform>")
    p.add_argument("--prior-from", dest="prior_from", help="image whose histogram is the prior")
    p.add_argument("--k", type=int)
    p.add_argument("--lambda", dest="lambda", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--alpha", type=float, help="truncation threshold of the quadratic data term")
    p.add_argument("--gamma", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--trace-every", dest="trace_every", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--isotropic-tv", dest="isotropic_tv", action="store_true", default=None)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="restore", description="TV restoration with a Wasserstein histogram prior")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("denoise", "restore a noisy image"), ("inpaint", "fill the masked region")):
        _add_run_flags(sub.add_parser(name, help=text))
    p = sub.add_parser("hist", help="grayvalue histogram of an image")
    _add_run_flags(p)
    p.add_argument("--output", help="histogram file to write (default: stdout)")
    p = sub.add_parser("w1", help="Wasserstein-1 distance of two histogram files")
    p.add_argument("hist_a")
    p.add_argument("hist_b")
    p = sub.add_parser("experiment", help=f"run a preset: {', '.join(PRESETS)}")
    p.add_argument("name")
    _add_run_flags(p)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "w1":
            return cmd_w1(args.hist_a, args.hist_b)
        cfg = build_config(args)
        if args.command == "denoise":
            return cmd_denoise(cfg)
        if args.command == "inpaint":
            return cmd_inpaint(cfg)
        if args.command == "hist":
            return cmd_hist(cfg, args.output)
        explicit = any(getattr(args, key, None) is not None for key in ("gamma", "rho", "tol", "max_iter"))
        return cmd_experiment(args.name, cfg, cfg.params if explicit else None)
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
