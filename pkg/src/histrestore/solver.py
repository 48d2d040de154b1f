"""Minimization of the lifted TV + Wasserstein energy.

Energies are normalized per pixel and per unit grayvalue, so weights carry
over between image sizes and level counts:

    E(phi) = (1/N) sum_x sum_l f(g_l, x) * (phi(x, l-1) - phi(x, l))
             + lam * dg / N * sum_l |grad phi_l|_1
             + nu * W1(marginal(phi), prior)

The iteration runs on ``N * (k - 1) * E``, which has the same minimizers
and keeps the step size ``gamma`` independent of the problem dimensions.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .field import (
    FIELD_TOL,
    Histogram,
    Image,
    LevelGrid,
    LiftedField,
    constraint_violation,
    histogram_of,
    level_index,
    lift,
    marginal_histogram,
    threshold,
)
from .proxops import (
    GradientField,
    grad,
    project_gradient_coupling,
    project_monotone_planes,
    prox_wasserstein,
    shrink,
)
from .transport import w1_cdf

__all__ = [
    "DataTerm",
    "Problem",
    "SolverParams",
    "SolveReport",
    "SolverDivergence",
    "data_cost_table",
    "relaxed_energy",
    "primal_energy",
    "initial_field",
    "solve",
    "nonintegral_fraction",
    "round_field",
]

log = logging.getLogger(__name__)

DATA_KINDS = ("quadratic", "truncated_quadratic", "masked_quadratic")


class SolverDivergence(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DataTerm:
    """Pointwise fidelity ``f(s, x)`` to the input image.

    ``quadratic``: ``(u0 - s)^2``.  ``truncated_quadratic``: ``min((u0 - s)^2, alpha)``.
    ``masked_quadratic``: quadratic outside ``mask`` and zero on it (``mask`` is
    True where the image is to be inpainted).
    """

    kind: str = "quadratic"
    alpha: float | None = None
    mask: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in DATA_KINDS:
            raise ValueError(f"unknown data term {self.kind!r}; expected one of {DATA_KINDS}")
        if self.kind == "truncated_quadratic" and not (self.alpha is not None and self.alpha > 0):
            raise ValueError("truncated quadratic data term needs alpha > 0")
        if self.kind == "masked_quadratic":
            if self.mask is None:
                raise ValueError("masked quadratic data term needs a mask")
            object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool))

    @classmethod
    def quadratic(cls) -> "DataTerm":
        return cls("quadratic")

    @classmethod
    def truncated(cls, alpha: float) -> "DataTerm":
        return cls("truncated_quadratic", alpha=alpha)

    @classmethod
    def masked(cls, mask) -> "DataTerm":
        return cls("masked_quadratic", mask=mask)


@dataclass(frozen=True, eq=False)
class Problem:
    input: Image
    grid: LevelGrid
    data_term: DataTerm = field(default_factory=DataTerm)
    prior: Histogram | None = None
    lam: float = 0.1
    nu: float = 0.0
    isotropic: bool = False

    def __post_init__(self):
        if self.lam < 0 or self.nu < 0:
            raise ValueError("weights must be nonnegative")
        if self.nu > 0 and self.prior is None:
            raise ValueError("a positive Wasserstein weight needs a prior histogram")
        if self.prior is not None and self.prior.grid != self.grid:
            raise ValueError(f"prior has k={self.prior.grid.k}, problem grid has k={self.grid.k}")
        mask = self.data_term.mask
        if mask is not None and mask.shape != self.input.shape:
            raise ValueError(f"mask shape {mask.shape} does not match image shape {self.input.shape}")

    @property
    def n_pixels(self) -> int:
        return self.input.size


@dataclass(frozen=True)
class SolverParams:
    gamma: float = 1.0
    rho: float = 1.0
    max_iter: int = 5000
    tol: float = 1e-5
    trace_every: int = 10
    coupling: str = "dct"
    rounding: str = "best"

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0 < self.rho < 2:
            raise ValueError("relaxation rho must lie in (0, 2)")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1 or self.trace_every < 1:
            raise ValueError("max_iter and trace_every must be at least 1")
        if self.coupling not in ("dct", "cg"):
            raise ValueError(f"unknown coupling solver {self.coupling!r}; expected 'dct' or 'cg'")
        if self.rounding not in ("best", "fixed"):
            raise ValueError(f"unknown rounding {self.rounding!r}; expected 'best' or 'fixed'")


@dataclass(frozen=True, eq=False)
class SolveReport:
    phi_star: LiftedField
    u_star: Image
    relaxed_energy: float
    primal_energy: float
    gap: float
    nonintegral_fraction: float
    iterations: int
    converged: bool
    residual: float
    trace: list = field(default_factory=list)
    params: SolverParams = field(default_factory=SolverParams)
    wall_time: float = 0.0
    alpha: float = 0.5


def data_cost_table(problem: Problem) -> np.ndarray:
    """``f(g_l, x)`` for every level, shape ``(k, height, width)``."""
    u0 = problem.input.data
    levels = problem.grid.levels[:, None, None]
    table = (u0[None] - levels) ** 2
    term = problem.data_term
    if term.kind == "truncated_quadratic":
        table = np.minimum(table, term.alpha)
    elif term.kind == "masked_quadratic":
        table = np.where(term.mask[None], 0.0, table)
    return table


def _pointwise_cost(u: Image, problem: Problem) -> np.ndarray:
    table = data_cost_table(problem)
    idx = level_index(u.data, problem.grid.k)
    return np.take_along_axis(table, idx[None], axis=0)[0]


def _tv(g: GradientField, isotropic: bool) -> float:
    return g.l2_per_pixel() if isotropic else g.l1()


def relaxed_energy(phi: LiftedField, problem: Problem, g: GradientField | None = None) -> float:
    """Lifted energy of a field in the monotone-column set.

    ``g`` defaults to ``grad(phi)``; when given it must equal it.
    """
    if phi.k != problem.grid.k or (phi.height, phi.width) != problem.input.shape:
        raise ValueError("field dimensions do not match the problem")
    violation = constraint_violation(phi.planes)
    if violation > FIELD_TOL:
        raise ValueError(f"field violates the monotone-column constraints by {violation:.3g}")
    n_pix = problem.n_pixels
    if g is None:
        g = grad(phi.interior)
    else:
        ref = grad(phi.interior)
        err = max(np.abs(ref.gx - g.gx).max(), np.abs(ref.gy - g.gy).max())
        if err > FIELD_TOL:
            raise ValueError(f"gradient field differs from grad(phi) by {err:.3g}")
    drops = phi.planes[:-1] - phi.planes[1:]
    energy = float(np.sum(data_cost_table(problem) * drops)) / n_pix
    energy += problem.lam * problem.grid.step * _tv(g, problem.isotropic) / n_pix
    if problem.nu > 0:
        energy += problem.nu * w1_cdf(marginal_histogram(phi), problem.prior)
    return energy


def _image_tv(u: Image, isotropic: bool) -> float:
    return _tv(grad(u.data), isotropic)


def primal_energy(u: Image, problem: Problem) -> float:
    """Energy of an image whose intensities lie on the grid levels."""
    if u.shape != problem.input.shape:
        raise ValueError("image shape does not match the problem")
    n_pix = problem.n_pixels
    energy = float(_pointwise_cost(u, problem).sum()) / n_pix
    energy += problem.lam * _image_tv(u, problem.isotropic) / n_pix
    if problem.nu > 0:
        energy += problem.nu * w1_cdf(histogram_of(u, problem.grid), problem.prior)
    return energy


def nonintegral_fraction(phi: LiftedField, low: float = 0.05, high: float = 0.95) -> float:
    """Share of free-plane entries strictly between ``low`` and ``high``."""
    inner = phi.interior
    return float(np.mean((inner > low) & (inner < high)))


def initial_field(problem: Problem) -> np.ndarray:
    """Free planes of the starting point: the lifted input, a linear ramp inside the mask."""
    k = problem.grid.k
    inner = lift(problem.input, problem.grid).interior.copy()
    mask = problem.data_term.mask
    if mask is not None:
        ramp = 1.0 - np.arange(1, k) / k
        inner[:, mask] = ramp[:, None]
    return inner


class _Blocks:
    """The four proximal blocks acting on the stacked variable ``[phi, gx, gy]``."""

    def __init__(self, problem: Problem, params: SolverParams):
        self.problem = problem
        self.params = params
        k = problem.grid.k
        n_pix = problem.n_pixels
        gamma = params.gamma
        table = data_cost_table(problem)
        self.shift = gamma * (k - 1) * (table[1:] - table[:-1])
        self.tv_step = gamma * problem.lam
        self.w_step = gamma * problem.nu * n_pix * (k - 1)
        self.ones = np.ones((1,) + problem.input.shape)
        self.active = [self.data, self.tv, self.coupling]
        if problem.nu > 0:
            self.active.append(self.wasserstein)

    def data(self, z):
        out = z.copy()
        out[0] = project_monotone_planes(z[0], self.shift)
        return out

    def tv(self, z):
        out = z.copy()
        if self.problem.isotropic:
            norm = np.sqrt(z[1] ** 2 + z[2] ** 2)
            scale = np.maximum(1.0 - self.tv_step / np.maximum(norm, 1e-300), 0.0)
            out[1:] = z[1:] * scale
        else:
            out[1:] = shrink(z[1:], self.tv_step)
        return out

    def coupling(self, z):
        u, v = project_gradient_coupling(z[0], GradientField(z[1], z[2]), self.params.coupling)
        return np.stack([u, v.gx, v.gy])

    def wasserstein(self, z):
        out = z.copy()
        planes = np.concatenate([self.ones, z[0], 0.0 * self.ones])
        out[0] = prox_wasserstein(planes, self.problem.prior, self.w_step)[1:-1]
        return out


MAX_ROUNDING_CANDIDATES = 64


def round_field(phi: LiftedField, problem: Problem, rounding: str = "best") -> tuple[Image, float]:
    """Threshold a relaxed field into an image; returns ``(image, alpha)``.

    ``"fixed"`` uses ``alpha = 0.5``.  ``"best"`` also tries the distinct
    free-plane values in ``(0, 1)`` (every distinct thresholded image arises
    from one of them) and keeps the lowest primal energy; 0.5 wins ties, so
    the result is never worse than the fixed rule.  Large fields use
    evenly spaced quantiles of those values.
    """
    best_alpha = 0.5
    best_u = threshold(phi, best_alpha)
    if rounding == "fixed":
        return best_u, best_alpha
    values = np.unique(phi.interior)
    values = values[(values > 0.0) & (values < 1.0)]
    if values.size > MAX_ROUNDING_CANDIDATES:
        values = np.unique(np.quantile(values, np.linspace(0, 1, MAX_ROUNDING_CANDIDATES)))
    best_e = primal_energy(best_u, problem)
    for alpha in values:
        u = threshold(phi, float(alpha))
        e = primal_energy(u, problem)
        if e < best_e:
            best_u, best_e, best_alpha = u, e, float(alpha)
    return best_u, best_alpha


def _feasible(inner: np.ndarray) -> LiftedField:
    return LiftedField.from_interior(project_monotone_planes(inner), check=False)


def solve(problem: Problem, params: SolverParams | None = None) -> SolveReport:
    """Product-space Douglas-Rachford on the lifted energy.

    Each block keeps its own copy ``z_i`` of the stacked variable; the
    iterate ``x`` is their average and every step applies
    ``z_i += rho * (prox_i(2x - z_i) - x)``.  The run stops when the relative
    change of ``x`` drops below ``tol``.
    """
    params = params or SolverParams()
    started = time.perf_counter()
    blocks = _Blocks(problem, params)

    phi0 = initial_field(problem)
    g0 = grad(phi0)
    x = np.stack([phi0, g0.gx, g0.gy])
    zs = [x.copy() for _ in blocks.active]
    m = len(zs)

    def energy_of(inner):
        return relaxed_energy(_feasible(inner), problem)

    initial_energy = energy_of(x[0])
    trace = [(0, initial_energy, float("nan"))]
    above = 0
    residual = float("inf")
    converged = False
    it = 0
    for it in range(1, params.max_iter + 1):
        reflected = 2.0 * x
        for i, prox in enumerate(blocks.active):
            zs[i] += params.rho * (prox(reflected - zs[i]) - x)
        x_new = sum(zs) / m
        residual = float(np.linalg.norm(x_new - x) / max(np.linalg.norm(x), 1e-300))
        x = x_new
        converged = residual < params.tol
        if it % params.trace_every == 0 or converged:
            energy = energy_of(x[0])
            trace.append((it, energy, residual))
            above = above + 1 if energy > 10.0 * abs(initial_energy) + 1e-12 else 0
            if above >= 100:
                raise SolverDivergence(
                    f"energy {energy:.4g} stayed above 10x the initial {initial_energy:.4g} "
                    f"for 100 samples (iteration {it})"
                )
        if converged:
            break

    phi_star = _feasible(x[0])
    u_star, alpha = round_field(phi_star, problem, params.rounding)
    relaxed = relaxed_energy(phi_star, problem)
    primal = primal_energy(u_star, problem)
    log.info("solve finished after %d iterations (residual %.3g, gap %.3g)", it, residual, primal - relaxed)
    return SolveReport(
        phi_star=phi_star,
        u_star=u_star,
        relaxed_energy=relaxed,
        primal_energy=primal,
        gap=primal - relaxed,
        nonintegral_fraction=nonintegral_fraction(phi_star),
        iterations=it,
        converged=converged,
        residual=residual,
        trace=trace,
        params=params,
        wall_time=time.perf_counter() - started,
        alpha=alpha,
    )
