from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from histrestore.field import Histogram, LevelGrid
from histrestore.oracle import exhaustive_transport_cost, rational_cost_matrix
from histrestore.transport import (
    CostMatrix,
    DualPair,
    TransportPlan,
    dual_feasible,
    dual_objective,
    hf_bounds_check,
    ot_monotone,
    w1_cdf,
    w1_dual_certificate,
)


@st.composite
def histograms(draw, k=None, n=1):
    if k is None:
        k = draw(st.integers(2, 16))
    grid = LevelGrid(k)
    out = []
    for _ in range(n):
        w = draw(st.lists(st.floats(0, 1), min_size=k, max_size=k))
        assume(sum(w) > 1e-3)
        out.append(Histogram.normalized(grid, w))
    return out


def h(*mass):
    return Histogram(LevelGrid(len(mass)), mass)


class TestW1:
    def test_identical(self):
        assert w1_cdf(h(0.2, 0.3, 0.5), h(0.2, 0.3, 0.5)) == 0.0

    def test_diracs(self):
        assert w1_cdf(h(1, 0), h(0, 1)) == 1.0

    def test_spread_vs_center(self):
        a, b = h(0.5, 0, 0.5), h(0, 1, 0)
        assert w1_cdf(a, b) == pytest.approx(0.5, abs=1e-15)
        assert ot_monotone(a, b).cost(CostMatrix.l1(a.grid)) == pytest.approx(0.5, abs=1e-15)

    def test_grid_mismatch(self):
        with pytest.raises(ValueError):
            w1_cdf(h(1, 0), h(1, 0, 0))

    @settings(max_examples=80, deadline=None)
    @given(st.integers(2, 10).flatmap(lambda k: histograms(k=k, n=3)))
    def test_metric_axioms(self, hs):
        a, b, c = hs
        assert w1_cdf(a, b) >= 0
        assert w1_cdf(a, b) == pytest.approx(w1_cdf(b, a), abs=1e-15)
        assert w1_cdf(a, c) <= w1_cdf(a, b) + w1_cdf(b, c) + 1e-12
        assert w1_cdf(a, b) <= 1.0 + 1e-12


class TestMonotonePlan:
    def test_identical_is_diagonal(self):
        a = h(0.2, 0.3, 0.5)
        plan = ot_monotone(a, a)
        np.testing.assert_allclose(plan.pi, np.diag(a.mass))
        assert plan.cost(CostMatrix.l1(a.grid)) == 0.0

    def test_diracs(self):
        plan = ot_monotone(h(1, 0, 0), h(0, 0, 1))
        expected = np.zeros((3, 3))
        expected[0, 2] = 1.0
        np.testing.assert_array_equal(plan.pi, expected)

    def test_rejects_custom_cost(self):
        grid = LevelGrid(3)
        cost = CostMatrix(grid, matrix=np.ones((3, 3)))
        with pytest.raises(ValueError):
            ot_monotone(h(1, 0, 0), h(0, 0, 1), cost)

    def test_matches_lp_oracle(self, rng):
        for _ in range(40):
            k = int(rng.integers(2, 6))
            d = int(rng.integers(1, 9))
            a = np.bincount(rng.integers(0, k, d), minlength=k)
            b = np.bincount(rng.integers(0, k, d), minlength=k)
            fa = [Fraction(int(x), d) for x in a]
            fb = [Fraction(int(x), d) for x in b]
            grid = LevelGrid(k)
            exact = exhaustive_transport_cost(fa, fb, rational_cost_matrix(grid))
            plan = ot_monotone(Histogram(grid, a / d), Histogram(grid, b / d))
            assert abs(plan.cost(CostMatrix.l1(grid)) - float(exact)) <= 1e-12

    @settings(max_examples=80, deadline=None)
    @given(histograms(n=2), st.sampled_from([1.0, 2.0]))
    def test_plan_is_feasible_and_optimal(self, hs, power):
        a, b = hs
        plan = ot_monotone(a, b, CostMatrix(a.grid, power))
        assert plan.marginal_error() <= 1e-12
        assert np.all(plan.pi >= 0)
        assert hf_bounds_check(plan)
        if power == 1.0:
            assert abs(plan.cost(CostMatrix.l1(a.grid)) - w1_cdf(a, b)) <= 1e-12


class TestDual:
    def test_identical(self):
        a = h(0.1, 0.4, 0.5)
        pair = w1_dual_certificate(a, a)
        np.testing.assert_array_equal(pair.psi, 0)
        assert dual_objective(pair, a, a) == 0

    def test_diracs(self):
        a, b = h(1, 0), h(0, 1)
        pair = w1_dual_certificate(a, b)
        assert tuple(abs(pair.psi)) == (0, 1)
        assert dual_objective(pair, a, b) == pytest.approx(1.0)
        assert dual_feasible(pair, CostMatrix.l1(a.grid))

    def test_zero_potentials_feasible(self):
        grid = LevelGrid(3)
        assert dual_feasible(DualPair(grid, np.zeros(3), np.zeros(3)), CostMatrix.l1(grid))

    def test_infeasible_potential(self):
        grid = LevelGrid(2)
        assert not dual_feasible(DualPair(grid, np.array([0.0, 2.0]), np.zeros(2)), CostMatrix.l1(grid))

    @settings(max_examples=100, deadline=None)
    @given(histograms(n=2))
    def test_strong_duality(self, hs):
        a, b = hs
        pair = w1_dual_certificate(a, b)
        assert dual_feasible(pair, CostMatrix.l1(a.grid))
        assert abs(dual_objective(pair, a, b) - w1_cdf(a, b)) <= 1e-10

    @settings(max_examples=60, deadline=None)
    @given(histograms(n=2), st.integers(0, 2**31))
    def test_weak_duality(self, hs, seed):
        # any feasible pair lower-bounds the cost of any feasible plan
        a, b = hs
        rng = np.random.default_rng(seed)
        # increments of at most one grid step keep psi 1-Lipschitz
        psi = np.cumsum(rng.uniform(-1, 1, a.grid.k)) * a.grid.step
        pair = DualPair(a.grid, psi, psi)
        assert dual_feasible(pair, CostMatrix.l1(a.grid))
        assert dual_objective(pair, a, b) <= w1_cdf(a, b) + 1e-12


class TestFrechetBounds:
    def test_diagonal(self):
        a = h(0.25, 0.25, 0.5)
        assert hf_bounds_check(TransportPlan(a.grid, np.diag(a.mass), a, a))

    def test_perturbed_entry(self):
        a = h(0.25, 0.25, 0.5)
        pi = np.diag(a.mass)
        pi[0, 1] += 0.1
        assert not hf_bounds_check(TransportPlan(a.grid, pi, a, a))

    def test_negative_entry(self):
        a = h(0.5, 0.5)
        pi = np.array([[0.6, -0.1], [-0.1, 0.6]])
        assert not hf_bounds_check(TransportPlan(a.grid, pi, a, a))

    def test_independent_coupling(self):
        a, b = h(0.3, 0.7), h(0.6, 0.4)
        assert hf_bounds_check(TransportPlan(a.grid, np.outer(a.mass, b.mass), a, b))


def test_cost_matrix_validation():
    grid = LevelGrid(3)
    with pytest.raises(ValueError):
        CostMatrix(grid, 0.5)
    with pytest.raises(ValueError):
        CostMatrix(grid, matrix=-np.ones((3, 3)))
    with pytest.raises(ValueError):
        CostMatrix(grid, matrix=np.ones((2, 2)))
