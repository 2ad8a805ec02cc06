import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flatcap import qpsolver
from flatcap.errors import QPInfeasible, QPMaxIterations
from flatcap.qpsolver import ActiveSetQP, QPStatus, QProblem, kkt_residual, solve_qp
from tests.oracles import qp_by_enumeration


def random_qp(rng, n=None, m=None):
    n = n or int(rng.integers(1, 5))
    m = m if m is not None else int(rng.integers(0, 7))
    M = rng.normal(size=(n, n))
    H = M @ M.T + 0.1 * np.eye(n)
    f = rng.normal(size=n) * 3
    A = rng.normal(size=(m, n))
    x0 = rng.normal(size=n)
    b = A @ x0 + rng.uniform(0, 1, m)  # x0 is feasible
    return H, f, A, b


def _check_optimality(q: QProblem, res):
    assert res.optimal
    assert np.all(q.A @ res.x <= q.b + 1e-8)
    lam = res.multipliers
    assert np.all(lam >= 0)
    assert np.max(np.abs(q.H @ res.x + q.f + q.A.T @ lam), initial=0) <= 1e-6
    assert np.max(np.abs(lam * (q.A @ res.x - q.b)), initial=0) <= 1e-6
    assert res.kkt_residual <= 1e-6


class TestExamples:
    def test_active_bound(self):
        # (x - 1)^2 = x^2 - 2x + 1
        res = solve_qp([[2.0]], [-2.0], [[1.0]], [0.0])
        assert res.x == pytest.approx([0.0], abs=1e-12)
        assert res.active == [0]

    def test_unconstrained(self):
        res = solve_qp(np.eye(3), np.zeros(3))
        np.testing.assert_allclose(res.x, 0, atol=1e-15)
        assert res.status is QPStatus.OPTIMAL

    def test_halfspace_projection(self):
        res = solve_qp(2 * np.eye(2), [-4.0, -4.0], [[1.0, 1.0]], [2.0])
        np.testing.assert_allclose(res.x, [1, 1], atol=1e-12)
        assert res.multipliers[0] == pytest.approx(2.0)

    def test_inactive_constraint(self):
        res = solve_qp(np.eye(2), [-1.0, 0.0], [[1.0, 0.0]], [5.0])
        np.testing.assert_allclose(res.x, [1, 0], atol=1e-12)
        assert res.active == []


class TestAgainstEnumeration:
    def test_500_random_problems(self, rng):
        for _ in range(500):
            H, f, A, b = random_qp(rng)
            q = QProblem(H, f, A, b)
            res = ActiveSetQP().solve(q)
            _check_optimality(q, res)
            ref = qp_by_enumeration(H, f, A, b)
            np.testing.assert_allclose(res.x, ref, atol=1e-6)

    def test_degenerate_vertex(self):
        # three constraints through the same point in 2-D
        A = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        b = np.zeros(3)
        q = QProblem(np.eye(2), [-1.0, -1.0], A, b)
        res = ActiveSetQP().solve(q)
        _check_optimality(q, res)
        np.testing.assert_allclose(res.x, qp_by_enumeration(q.H, q.f, A, b), atol=1e-9)

    @pytest.mark.parametrize("k", [4, 8, 24])
    def test_many_constraints_through_optimum(self, k):
        # apex of a k-sided cone; the optimum pulls straight through it
        t = 2 * np.pi * np.arange(k) / k
        A = np.column_stack([np.cos(t), np.sin(t), np.ones(k)])
        q = QProblem(2 * np.eye(3), [-0.3, 0.1, -10.0], A, np.zeros(k))
        for start in (None, [0.0, 0.0, -1.0], [0.05, -0.02, -0.5]):
            res = ActiveSetQP().solve(q, warm_start=start)
            _check_optimality(q, res)
            assert len(res.active) <= 3
            np.testing.assert_allclose(res.x, qp_by_enumeration(q.H, q.f, A, q.b), atol=1e-9)

    def test_duplicated_constraints(self, rng):
        H, f, A, b = random_qp(rng, n=3, m=3)
        q = QProblem(H, f, np.vstack([A, A]), np.r_[b, b])
        res = ActiveSetQP().solve(q)
        _check_optimality(q, res)
        np.testing.assert_allclose(res.x, qp_by_enumeration(H, f, A, b), atol=1e-7)


class TestProperties:
    @given(st.integers(0, 10_000))
    def test_warm_start_never_worse(self, seed):
        rng = np.random.default_rng(seed)
        H, f, A, b = random_qp(rng)
        q = QProblem(H, f, A, b)
        cold = ActiveSetQP().solve(q)
        warm = ActiveSetQP().solve(q, warm_start=rng.normal(size=q.n) * 2)
        assert q.objective(warm.x) >= q.objective(cold.x) - 1e-9
        assert q.objective(warm.x) <= q.objective(cold.x) + 1e-9

    def test_warm_start_at_solution_converges_immediately(self, rng):
        H, f, A, b = random_qp(rng, n=4, m=6)
        q = QProblem(H, f, A, b)
        cold = ActiveSetQP().solve(q)
        warm = ActiveSetQP().solve(q, warm_start=cold.x, working_set=cold.active)
        assert warm.iterations == 1
        np.testing.assert_allclose(warm.x, cold.x, atol=1e-12)

    @given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
    def test_scaling_invariance(self, seed, t):
        rng = np.random.default_rng(seed)
        H, f, A, b = random_qp(rng)
        x1 = solve_qp(H, f, A, b).x
        x2 = solve_qp(t * H, t * f, A, b).x
        np.testing.assert_allclose(x1, x2, atol=1e-8 * max(1.0, np.abs(x1).max()))

    def test_kkt_residual_zero_at_known_optimum(self):
        q = QProblem(2 * np.eye(2), [-4.0, -4.0], [[1.0, 1.0]], [2.0])
        assert kkt_residual(q, np.array([1.0, 1.0]), np.array([2.0])) == pytest.approx(0.0, abs=1e-15)
        assert kkt_residual(q, np.array([1.0, 1.0]), np.array([0.0])) == pytest.approx(2.0)


class TestFailures:
    def test_infeasible(self):
        A = np.array([[1.0], [-1.0]])
        b = np.array([-1.0, -1.0])  # x <= -1 and x >= 1
        with pytest.raises(QPInfeasible):
            solve_qp([[1.0]], [0.0], A, b)

    def test_infeasible_without_raising(self):
        res = solve_qp([[1.0]], [0.0], [[1.0], [-1.0]], [-1.0, -1.0], raise_on_failure=False)
        assert res.status is QPStatus.INFEASIBLE
        assert np.isnan(res.x).all()

    def test_iteration_limit(self, monkeypatch):
        # the unconstrained optimum (100, ..) lies beyond four bounds, so one
        # iteration cannot reach it
        q = QProblem(np.eye(4), -100 * np.ones(4), np.eye(4), np.zeros(4))
        res = ActiveSetQP(max_iter=1).solve(q, warm_start=-np.ones(4))
        assert res.status is QPStatus.MAX_ITERATIONS
        monkeypatch.setattr(qpsolver, "ActiveSetQP", lambda: ActiveSetQP(max_iter=1))
        with pytest.raises(QPMaxIterations):
            qpsolver.solve_qp(q.H, q.f, q.A, q.b, warm_start=-np.ones(4))

    def test_not_positive_definite(self):
        with pytest.raises(ValueError):
            solve_qp(np.diag([1.0, 0.0]), [0.0, 0.0])

    def test_asymmetric(self):
        with pytest.raises(ValueError):
            QProblem(np.array([[1.0, 1.0], [0.0, 1.0]]), [0.0, 0.0])
