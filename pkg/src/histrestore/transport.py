"""Optimal transport between grayvalue histograms on the line.

The Wasserstein-1 distance for the cost ``|g1 - g2|`` is computed from
distribution functions; a monotone coupling and a Kantorovich potential give
the matching primal and dual certificates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import Histogram, LevelGrid, cdf_of

__all__ = [
    "CostMatrix",
    "TransportPlan",
    "DualPair",
    "w1_cdf",
    "ot_monotone",
    "w1_dual_certificate",
    "dual_objective",
    "dual_feasible",
    "hf_bounds_check",
]

PLAN_TOL = 1e-10
DUAL_TOL = 1e-12


def _same_grid(*hs: Histogram) -> LevelGrid:
    grid = hs[0].grid
    for h in hs[1:]:
        if h.grid != grid:
            raise ValueError(f"histograms live on different grids (k={grid.k} vs k={h.grid.k})")
    return grid


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """Transport cost between grid levels.

    The built-in family is ``|g1 - g2| ** power``.  Passing ``matrix``
    gives an arbitrary cost table, usable only by the exhaustive oracle.
    """

    grid: LevelGrid
    power: float | None = 1.0
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.matrix is None:
            if self.power is None or self.power < 1:
                raise ValueError("built-in cost family needs power >= 1")
            g = self.grid.levels
            m = np.abs(g[:, None] - g[None, :]) ** self.power
        else:
            m = np.asarray(self.matrix, dtype=float)
            if m.shape != (self.grid.k, self.grid.k):
                raise ValueError(f"cost matrix must be {self.grid.k}x{self.grid.k}, got {m.shape}")
            object.__setattr__(self, "power", None)
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise ValueError("cost entries must be finite and nonnegative")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def builtin(self) -> bool:
        return self.power is not None

    @classmethod
    def l1(cls, grid: LevelGrid) -> "CostMatrix":
        return cls(grid, 1.0)


@dataclass(frozen=True, eq=False)
class TransportPlan:
    grid: LevelGrid
    pi: np.ndarray
    source: Histogram
    target: Histogram

    def cost(self, cost: CostMatrix) -> float:
        return float(np.sum(self.pi * cost.matrix))

    def marginal_error(self) -> float:
        return float(
            max(
                np.abs(self.pi.sum(axis=1) - self.source.mass).max(),
                np.abs(self.pi.sum(axis=0) - self.target.mass).max(),
            )
        )


@dataclass(frozen=True, eq=False)
class DualPair:
    """Kantorovich potentials ``psi`` (source side) and ``psi_prime`` (target side)."""

    grid: LevelGrid
    psi: np.ndarray
    psi_prime: np.ndarray


def w1_cdf(h1: Histogram, h2: Histogram) -> float:
    """Wasserstein-1 distance as the L1 distance of the two distribution functions.

    The distribution functions are piecewise constant on the ``k - 1`` grid
    cells, so the left-endpoint sum is exact.
    """
    grid = _same_grid(h1, h2)
    diff = cdf_of(h1).values[:-1] - cdf_of(h2).values[:-1]
    return float(grid.step * np.abs(diff).sum())


def ot_monotone(h1: Histogram, h2: Histogram, cost: CostMatrix | None = None) -> TransportPlan:
    """Monotone (north-west corner) coupling, optimal for convex costs on the line."""
    grid = _same_grid(h1, h2)
    if cost is None:
        cost = CostMatrix.l1(grid)
    if cost.grid != grid:
        raise ValueError("cost matrix and histograms live on different grids")
    if not cost.builtin:
        raise ValueError("monotone coupling is only optimal for the |g1 - g2|^p cost family")

    a = h1.mass.astype(float).copy()
    b = h2.mass.astype(float).copy()
    pi = np.zeros((grid.k, grid.k))
    i = j = 0
    while i < grid.k and j < grid.k:
        t = min(a[i], b[j])
        pi[i, j] += t
        a[i] -= t
        b[j] -= t
        # advance whichever side is exhausted; the other keeps its remainder
        if a[i] <= b[j]:
            i += 1
        else:
            j += 1
    return TransportPlan(grid, pi, h1, h2)


def w1_dual_certificate(h1: Histogram, h2: Histogram) -> DualPair:
    """1-Lipschitz potential attaining the Wasserstein-1 distance.

    ``psi`` descends by one grid step wherever ``F1 > F2`` and climbs where
    ``F1 < F2``; ``psi(g_1) = 0`` fixes the additive constant.
    """
    grid = _same_grid(h1, h2)
    diff = cdf_of(h1).values[:-1] - cdf_of(h2).values[:-1]
    psi = np.concatenate([[0.0], -grid.step * np.cumsum(np.sign(diff))])
    return DualPair(grid, psi, psi.copy())


def dual_objective(pair: DualPair, h1: Histogram, h2: Histogram) -> float:
    return float(np.dot(pair.psi, h1.mass) - np.dot(pair.psi_prime, h2.mass))


def dual_feasible(pair: DualPair, cost: CostMatrix) -> bool:
    if pair.grid != cost.grid:
        raise ValueError("potentials and cost matrix live on different grids")
    slack = pair.psi[:, None] - pair.psi_prime[None, :] - cost.matrix
    return bool(slack.max() <= DUAL_TOL)


def hf_bounds_check(plan: TransportPlan) -> bool:
    """Check the joint distribution function of ``plan`` against the Hoeffding-Frechet bounds.

    With the source and target marginals fixed, a nonnegative plan satisfies
    ``max(F1 + F2 - 1, 0) <= F <= min(F1, F2)`` everywhere exactly when its
    marginals are the prescribed ones.
    """
    if np.any(plan.pi < -PLAN_TOL):
        return False
    joint = plan.pi.cumsum(axis=0).cumsum(axis=1)
    f1 = cdf_of(plan.source).values[:, None]
    f2 = cdf_of(plan.target).values[None, :]
    lower = np.maximum(f1 + f2 - 1.0, 0.0)
    upper = np.minimum(f1, f2)
    return bool(np.all(joint >= lower - PLAN_TOL) and np.all(joint <= upper + PLAN_TOL))
