"""Slow, independent reference computations for tests.

Nothing in here is used by the solver.  Every routine trades speed for
transparency: exhaustive enumeration, grid search or a different algorithm
than the production path.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .field import Image, LevelGrid, LiftedField, lift
from .proxops import grad, project_monotone_planes
from .solver import Problem, data_cost_table

__all__ = [
    "OracleBudget",
    "BudgetExceeded",
    "brute_force_minimize",
    "scalar_prox_oracle",
    "qp_project_oracle",
    "exhaustive_transport_cost",
    "rational_cost_matrix",
    "lifted_tv_reference",
]


class BudgetExceeded(ValueError):
    pass


@dataclass(frozen=True)
class OracleBudget:
    max_pixels: int = 9
    max_levels: int = 4
    grid_step: float = 1e-6

    def __post_init__(self):
        if self.max_pixels > 9 or self.max_levels > 4:
            raise BudgetExceeded("oracle budget is capped at 9 pixels and 4 levels")
        if self.max_levels ** self.max_pixels > 300_000:
            raise BudgetExceeded(
                f"{self.max_levels}^{self.max_pixels} images exceed the 3e5 enumeration cap"
            )


def brute_force_minimize(problem: Problem, budget: OracleBudget | None = None):
    """Enumerate every quantized image and return ``(argmin, min energy)``.

    Images are visited in lexicographic order of their level indices
    (row-major), so the first minimizer wins ties.
    """
    budget = budget or OracleBudget()
    n_pix, k = problem.n_pixels, problem.grid.k
    if n_pix > budget.max_pixels or k > budget.max_levels:
        raise BudgetExceeded(
            f"problem with {n_pix} pixels and {k} levels exceeds the oracle budget "
            f"({budget.max_pixels} pixels, {budget.max_levels} levels)"
        )
    levels = problem.grid.levels
    h, w = problem.input.shape
    # row-major product order: itertools.product over pixels, last pixel fastest
    labels = np.array(list(itertools.product(range(k), repeat=n_pix)), dtype=np.intp)
    table = data_cost_table(problem).reshape(k, n_pix)
    energy = table[labels, np.arange(n_pix)].sum(axis=1) / n_pix
    u = levels[labels].reshape(-1, h, w)
    dx = np.diff(u, axis=2)
    dy = np.diff(u, axis=1)
    if problem.isotropic:
        gx = np.zeros_like(u)
        gy = np.zeros_like(u)
        gx[:, :, :-1] = dx
        gy[:, :-1, :] = dy
        tv = np.sqrt(gx**2 + gy**2).sum(axis=(1, 2))
    else:
        tv = np.abs(dx).sum(axis=(1, 2)) + np.abs(dy).sum(axis=(1, 2))
    energy += problem.lam * tv / n_pix
    if problem.nu > 0:
        counts = (labels[:, :, None] == np.arange(k)).sum(axis=1) / n_pix
        cdf_gap = np.cumsum(counts, axis=1) - np.cumsum(problem.prior.mass)
        energy += problem.nu * problem.grid.step * np.abs(cdf_gap[:, :-1]).sum(axis=1)
    best = int(np.argmin(energy))
    return Image(u[best]), float(energy[best])


def _coarse_to_fine(objective, lo: float, hi: float, step: float) -> float:
    # exact for convex objectives: the minimizer lies within one coarse step
    # of the best coarse grid point
    h = (hi - lo) / 400
    while True:
        h = max(h, step)
        grid = np.arange(lo, hi + 0.5 * h, h)
        best = grid[np.argmin(objective(grid))]
        if h <= step:
            return float(best)
        lo, hi = best - h, best + h
        h /= 100


def scalar_prox_oracle(m: float, F0: float, w: float, N: int, step: float = 1e-6) -> float:
    """Grid-search minimizer of ``0.5 * N * c^2 + w * |1 - m - c - F0|`` over ``c in [-2, 2]``."""
    if step <= 0:
        raise ValueError("step must be positive")
    return _coarse_to_fine(lambda c: 0.5 * N * c**2 + w * np.abs(1.0 - m - c - F0), -2.0, 2.0, step)


def qp_project_oracle(v, k: int, tol: float = 1e-12, max_iter: int = 200_000) -> np.ndarray:
    """Projection of a length-``k + 1`` column onto monotone columns with pinned ends.

    Runs projected gradient ascent on the dual of
    ``min 0.5 |w - v|^2  s.t.  w_{i+1} <= w_i,  0 <= w_i <= 1`` over the free
    entries, then polishes with the equality-constrained solve on the
    detected active set.
    """
    if k > 10:
        raise BudgetExceeded("qp oracle handles k <= 10")
    v = np.asarray(v, dtype=float)
    if v.size != k + 1:
        raise ValueError(f"expected {k + 1} entries, got {v.size}")
    y = v[1:-1]
    n = y.size
    rows, rhs = [], []
    for i in range(n - 1):  # w_{i+1} - w_i <= 0
        r = np.zeros(n)
        r[i + 1], r[i] = 1.0, -1.0
        rows.append(r)
        rhs.append(0.0)
    for i in range(n):
        r = np.zeros(n)
        r[i] = 1.0
        rows.append(r.copy())
        rhs.append(1.0)
        rows.append(-r)
        rhs.append(0.0)
    A, b = np.array(rows), np.array(rhs)
    gram = A @ A.T
    step = 1.0 / np.linalg.eigvalsh(gram).max()

    mu = np.zeros(len(b))
    converged = False
    for _ in range(max_iter):
        w = y - A.T @ mu
        mu_next = np.maximum(mu + step * (A @ w - b), 0.0)
        delta = np.abs(mu_next - mu).max()
        mu = mu_next
        if delta < tol:
            converged = True
            break
    w = y - A.T @ mu

    active = (mu > 1e-9) | (np.abs(A @ w - b) < 1e-9)
    if active.any():
        Aa, ba = A[active], b[active]
        kkt = np.block([[np.eye(n), Aa.T], [Aa, np.zeros((len(ba), len(ba)))]])
        sol = np.linalg.lstsq(kkt, np.concatenate([y, ba]), rcond=None)[0]
        w_pol = sol[:n]
        if np.all(A @ w_pol - b <= 1e-12) and np.abs(w_pol - w).max() < 1e-6:
            w = w_pol
            converged = True
    if not converged:
        raise RuntimeError("qp oracle did not converge")
    return np.concatenate([[1.0], w, [0.0]])


def _splits(total: int, caps: tuple):
    """Every way to write ``total`` as a sum bounded componentwise by ``caps``."""
    if len(caps) == 1:
        if total <= caps[0]:
            yield (total,)
        return
    rest = sum(caps[1:])
    for x in range(max(0, total - rest), min(total, caps[0]) + 1):
        for tail in _splits(total - x, caps[1:]):
            yield (x,) + tail


def exhaustive_transport_cost(a, b, cost):
    """Exact optimal transport cost by enumerating every integral plan.

    Masses are rationals with a common denominator ``d``; measured in units
    of ``1/d`` the marginals are integers, the transportation polytope has
    integral vertices, and the minimum over all integral plans is the
    linear-program optimum.  Plans are enumerated row by row with the
    remaining column capacities memoized.  Returns a ``Fraction``.
    """
    a = [Fraction(x) for x in a]
    b = [Fraction(x) for x in b]
    k = len(a)
    if k > 5 or len(b) != k:
        raise BudgetExceeded("exhaustive transport oracle handles k <= 5")
    if sum(a) != sum(b):
        raise ValueError("marginals carry different total mass")
    d = math.lcm(*(x.denominator for x in a + b))
    if d > 16:
        raise BudgetExceeded(f"common denominator {d} exceeds 16")
    rows = [int(x * d) for x in a]
    cols = tuple(int(x * d) for x in b)
    cost = [[Fraction(c) for c in row] for row in cost]

    @lru_cache(maxsize=None)
    def best(r, caps):
        if r == k:
            return Fraction(0)
        out = None
        for split in _splits(rows[r], caps):
            rest = tuple(c - x for c, x in zip(caps, split))
            c = sum((x * cost[r][j] for j, x in enumerate(split) if x), Fraction(0)) / d + best(r + 1, rest)
            if out is None or c < out:
                out = c
        return out

    return best(0, cols)


def rational_cost_matrix(grid: LevelGrid):
    """``|g_i - g_j|`` as exact fractions."""
    k = grid.k
    return [[Fraction(abs(i - j), k - 1) for j in range(k)] for i in range(k)]


def lifted_tv_reference(problem: Problem, n_iter: int = 20000, tau: float = 0.25,
                        sigma: float = 0.45) -> LiftedField:
    """Lifted TV problem without the Wasserstein term, by primal-dual iteration.

    Minimizes ``<c, phi> + lam * |grad phi|_1`` over monotone columns with a
    first-order primal-dual scheme (dual variable clipped to the ``lam`` box),
    which shares no iteration logic with the splitting solver.
    """
    if problem.nu != 0:
        raise ValueError("the reference only covers problems without the Wasserstein term")
    if problem.isotropic:
        raise ValueError("the reference covers anisotropic TV only")
    k = problem.grid.k
    table = data_cost_table(problem)
    lin = (k - 1) * (table[1:] - table[:-1])
    lam = problem.lam
    phi = lift(problem.input, problem.grid).interior.copy()
    phi_bar = phi.copy()
    px = np.zeros_like(phi)
    py = np.zeros_like(phi)
    for _ in range(n_iter):
        gb = grad(phi_bar)
        px = np.clip(px + sigma * gb.gx, -lam, lam)
        py = np.clip(py + sigma * gb.gy, -lam, lam)
        # grad^T p
        gt = np.zeros_like(phi)
        gt[:, :, :-1] -= px[:, :, :-1]
        gt[:, :, 1:] += px[:, :, :-1]
        gt[:, :-1, :] -= py[:, :-1, :]
        gt[:, 1:, :] += py[:, :-1, :]
        phi_new = project_monotone_planes(phi - tau * (gt + lin))
        phi_bar = 2.0 * phi_new - phi
        phi = phi_new
    return LiftedField.from_interior(phi, check=False)
