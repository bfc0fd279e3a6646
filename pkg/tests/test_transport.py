import itertools

import numpy as np
import pytest

from sparseot import (
    Dictionary,
    TransportPlan,
    TransportSizeError,
    cost_matrix,
    exact_ot,
    export_plan_csv,
    sinkhorn,
    transport_cost,
)
from sparseot.transport import _log_loop, _plain_loop


def brute_force_uniform(cost):
    """Exact OT for uniform equal marginals: best permutation / n (Birkhoff)."""
    n = cost.shape[0]
    best = min(
        sum(cost[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n))
    )
    return best / n


def random_simplex(rng, n, floor=0.02):
    v = rng.random(n) + floor
    return v / v.sum()


class TestCostMatrix:
    def test_identical_dictionaries(self, rng):
        d = Dictionary(rng.normal(size=(6, 5)))
        c = cost_matrix(d, d)
        assert np.allclose(np.diag(c), 0.0, atol=1e-12)
        np.testing.assert_allclose(c, c.T, atol=1e-12)

    def test_known_distance(self):
        dx = Dictionary(np.array([[0.0], [0.0]]))
        dy = Dictionary(np.array([[3.0], [4.0]]))
        assert cost_matrix(dx, dy)[0, 0] == pytest.approx(25.0)

    def test_expansion_identity(self, rng):
        dx = Dictionary(rng.normal(size=(10, 7)))
        dy = Dictionary(rng.normal(size=(10, 9)))
        c = cost_matrix(dx, dy)
        nx = np.sum(dx.atoms**2, axis=0)
        ny = np.sum(dy.atoms**2, axis=0)
        expected = nx[:, None] + ny[None, :] - 2.0 * dx.atoms.T @ dy.atoms
        np.testing.assert_allclose(c, expected, rtol=1e-9, atol=1e-9)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError):
            cost_matrix(
                Dictionary(rng.normal(size=(4, 3))), Dictionary(rng.normal(size=(5, 3)))
            )


class TestExactOt:
    def test_singleton(self):
        plan = exact_ot(np.array([[2.0]]), np.array([1.0]), np.array([1.0]))
        assert plan.entries[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_zero_cost_matching(self):
        c = np.array([[0.0, 1.0], [1.0, 0.0]])
        half = np.array([0.5, 0.5])
        plan = exact_ot(c, half, half)
        np.testing.assert_allclose(plan.entries, [[0.5, 0.0], [0.0, 0.5]], atol=1e-10)
        assert transport_cost(c, plan) == pytest.approx(0.0, abs=1e-12)

    def test_matches_permutation_oracle(self, rng):
        for trial in range(10):
            c = rng.random((5, 5))
            u = np.full(5, 0.2)
            plan = exact_ot(c, u, u)
            assert transport_cost(c, plan) == pytest.approx(
                brute_force_uniform(c), abs=1e-12
            )

    def test_vertex_support_size(self, rng):
        for trial in range(10):
            m, n = 6, 7
            c = rng.random((m, n))
            plan = exact_ot(c, random_simplex(rng, m), random_simplex(rng, n))
            assert int((plan.entries > 1e-12).sum()) <= m + n - 1

    def test_marginals_satisfied(self, rng):
        c = rng.random((8, 5))
        a, b = random_simplex(rng, 8), random_simplex(rng, 5)
        plan = exact_ot(c, a, b)
        assert np.abs(plan.entries.sum(axis=1) - a).max() <= 1e-9
        assert np.abs(plan.entries.sum(axis=0) - b).max() <= 1e-9

    def test_cap_redirects_to_sinkhorn(self, rng):
        c = rng.random((3, 3))
        u = np.full(3, 1 / 3)
        with pytest.raises(TransportSizeError, match="sinkhorn"):
            exact_ot(c, u, u, cap=8)

    def test_input_validation(self, rng):
        c = rng.random((3, 3))
        u = np.full(3, 1 / 3)
        with pytest.raises(ValueError):
            exact_ot(c, np.array([0.5, 0.5, 0.0]), u)  # zero entry
        with pytest.raises(ValueError):
            exact_ot(c, np.array([0.5, 0.4, 0.3]), u)  # not a simplex
        with pytest.raises(ValueError):
            exact_ot(np.array([[1.0, -0.1], [0.2, 0.3]]), u[:2] * 1.5, u[:2] * 1.5)


class TestSinkhorn:
    def test_zero_cost_gives_outer_product(self):
        a = np.array([0.1, 0.2, 0.3, 0.4])
        b = np.array([0.25, 0.25, 0.25, 0.25])
        plan = sinkhorn(np.zeros((4, 4)), a, b, eta=0.05, max_iters=5, tol=1e-12)
        assert np.abs(plan.entries - np.outer(a, b)).max() <= 1e-12

    def test_marginal_convergence_and_reporting(self, rng):
        c = rng.random((8, 8))
        a, b = random_simplex(rng, 8), random_simplex(rng, 8)
        plan = sinkhorn(c, a, b, eta=0.05, max_iters=500, tol=1e-6)
        assert plan.marginal_error <= 1e-6
        assert plan.iterations is not None and plan.iterations <= 500
        assert plan.entries.min() > 0.0  # entropic plans are strictly positive

    def test_marginal_error_monotone(self, rng):
        # error after each full (u, v) update never increases; re-running a
        # deterministic prefix exposes the per-iteration values
        c = rng.random((6, 6))
        a, b = random_simplex(rng, 6), random_simplex(rng, 6)
        errors = [
            sinkhorn(c, a, b, eta=0.1, max_iters=i, tol=0.0).marginal_error
            for i in range(1, 40)
        ]
        assert all(e2 <= e1 + 1e-12 for e1, e2 in zip(errors, errors[1:]))

    def test_fixed_point_after_convergence(self, rng):
        c = rng.random((5, 5))
        a, b = random_simplex(rng, 5), random_simplex(rng, 5)
        eta, tol = 0.2, 1e-10
        kernel = np.exp(-(c / c.max()) / eta)
        u, v, iters, err, ok = _plain_loop(kernel, a, b, 10000, tol)
        assert ok and err <= tol
        u2 = a / (kernel @ v)
        v2 = b / (kernel.T @ u2)
        assert np.abs(u2 / u - 1.0).max() < tol * 10
        assert np.abs(v2 / v - 1.0).max() < tol * 10

    def test_log_domain_matches_plain(self, rng):
        c = rng.random((6, 4))
        a, b = random_simplex(rng, 6), random_simplex(rng, 4)
        eta = 0.3
        kernel = np.exp(-(c / c.max()) / eta)
        u, v, *_ = _plain_loop(kernel, a, b, 200, 1e-12)
        phi, psi, *_ = _log_loop(
            np.log(kernel), a, b, np.zeros(6), np.zeros(4), 0, 200, 1e-12
        )
        plain = u[:, None] * kernel * v[None, :]
        logd = np.exp(np.log(kernel) + phi[:, None] + psi[None, :])
        np.testing.assert_allclose(logd, plain, rtol=1e-9, atol=1e-12)

    def test_tiny_eta_forces_log_domain_and_approaches_exact(self, rng):
        for trial in range(5):
            c = rng.random((5, 5))
            u = np.full(5, 0.2)
            plan = sinkhorn(c, u, u, eta=1e-3, max_iters=2000, tol=1e-7)
            exact = brute_force_uniform(c)
            assert transport_cost(c, plan) <= exact * 1.01
            # a not-fully-converged plan is slightly infeasible, so it can
            # undercut the optimum by at most the misplaced mass times max C
            slack = plan.marginal_error * c.max() + 1e-9
            assert transport_cost(c, plan) >= exact - slack

    def test_exact_cost_never_exceeds_sinkhorn_cost(self, rng):
        for trial in range(5):
            c = rng.random((6, 6))
            a, b = random_simplex(rng, 6), random_simplex(rng, 6)
            lp = exact_ot(c, a, b)
            sk = sinkhorn(c, a, b, eta=0.05, max_iters=2000, tol=1e-9)
            assert transport_cost(c, lp) <= transport_cost(c, sk) + 1e-9

    def test_input_validation(self, rng):
        c = rng.random((3, 3))
        u = np.full(3, 1 / 3)
        with pytest.raises(ValueError):
            sinkhorn(c, u, u, eta=0.0)
        with pytest.raises(ValueError):
            sinkhorn(c, u, u, eta=0.1, max_iters=0)
        with pytest.raises(ValueError):
            sinkhorn(np.full((3, 3), np.nan), u, u, eta=0.1)


class TestTransportCost:
    def test_singleton(self):
        plan = TransportPlan(np.array([[1.0]]), np.array([1.0]), np.array([1.0]))
        assert transport_cost(np.array([[3.25]]), plan) == pytest.approx(3.25)

    def test_zero_cost(self, rng):
        a = random_simplex(rng, 4)
        plan = TransportPlan(np.outer(a, a), a, a)
        assert transport_cost(np.zeros((4, 4)), plan) == 0.0

    def test_shape_mismatch(self, rng):
        a = random_simplex(rng, 4)
        plan = TransportPlan(np.outer(a, a), a, a)
        with pytest.raises(ValueError):
            transport_cost(np.zeros((4, 5)), plan)


class TestPlanExport:
    def test_csv_layout_and_round_trip_values(self, rng, tmp_path):
        a, b = random_simplex(rng, 3), random_simplex(rng, 4)
        plan = sinkhorn(rng.random((3, 4)), a, b, eta=0.1, max_iters=500, tol=1e-9)
        path = tmp_path / "plan.csv"
        export_plan_csv(plan, path)
        rows = [line.split(",") for line in path.read_text().strip().splitlines()]
        assert len(rows) == 4 and len(rows[0]) == 5
        assert rows[0][0] == ""
        header_b = np.array([float(x) for x in rows[0][1:]])
        np.testing.assert_array_equal(header_b, plan.col_marginal)
        body = np.array([[float(x) for x in row[1:]] for row in rows[1:]])
        np.testing.assert_array_equal(body, plan.entries)
