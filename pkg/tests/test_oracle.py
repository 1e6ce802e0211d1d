import math

import numpy as np
import pytest

from cvqp import (
    CvarSpec,
    CvqpProblem,
    cvar,
    lift_cvar_objective,
    project_sum_k_largest,
    sum_k_largest,
)
from cvqp.oracle import (
    check_projection_kkt,
    expand_cvqp,
    pinball_loss,
    project_reference,
    solve_cvar_objective_reference,
    solve_cvqp_reference,
    solve_expanded,
)
from conftest import rng_for


def tiny_problem(kappa=0.3):
    P = np.array([[2.0, 0.0], [0.0, 1.0]])
    q = np.array([-1.0, 0.5])
    A = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    B = np.array([[1.0, 1.0]])
    l = np.array([-5.0])
    u = np.array([5.0])
    return CvqpProblem(P, q, A, B, l, u, beta=0.5, kappa=kappa)


class TestExpansion:
    def test_block_shapes_and_rows(self):
        problem = tiny_problem()
        qp = expand_cvqp(problem)
        n, m = 2, 3
        assert qp.H.shape == (n + m + 1, n + m + 1)
        assert qp.g.tolist() == [-1.0, 0.5, 0.0, 0.0, 0.0, 0.0]
        # m epigraph rows, m sign rows, one tail-average row
        assert qp.G.shape == (2 * m + 1, n + m + 1)
        assert qp.h[: 2 * m].tolist() == [0.0] * (2 * m)
        spec_k = 2  # ceil(0.5 * 3)
        assert qp.h[-1] == pytest.approx(problem.kappa * spec_k / spec_k)
        assert qp.box.shape == (1, n + m + 1)
        H = qp.H.toarray()
        assert np.array_equal(H[:n, :n], problem.P)
        assert np.all(H[n:, :] == 0.0) and np.all(H[:, n:] == 0.0)
        G = qp.G.toarray()
        assert np.array_equal(G[:m, :n], problem.A)
        assert np.array_equal(G[:m, n : n + m], -np.eye(m))
        assert np.all(G[:m, -1] == -1.0)
        assert np.array_equal(G[m : 2 * m, n : n + m], -np.eye(m))
        assert np.allclose(G[-1], [0.0, 0.0, 0.5, 0.5, 0.5, 1.0])

    def test_infinite_cap_drops_tail_row(self):
        qp = expand_cvqp(tiny_problem(kappa=math.inf))
        assert qp.G.shape == (6, 6)
        assert qp.h.shape == (6,)

    def test_infinite_cap_reduces_to_box_qp(self):
        rng = rng_for(1)
        n = 4
        G = rng.normal(size=(n, n))
        P = G @ G.T + np.eye(n)
        q = rng.normal(size=n)
        A = rng.normal(size=(6, n))
        problem = CvqpProblem(
            P,
            q,
            A,
            np.eye(n),
            np.full(n, -10.0),
            np.full(n, 10.0),
            beta=0.5,
            kappa=math.inf,
        )
        x, value = solve_cvqp_reference(problem)
        x_star = np.linalg.solve(P, -q)  # box is loose at this scale
        assert np.linalg.norm(x - x_star, ord=np.inf) <= 1e-6
        assert value == pytest.approx(problem.objective(x_star), abs=1e-8)

    def test_pinned_box_forces_value(self):
        problem = tiny_problem(kappa=10.0)
        pinned = CvqpProblem(
            problem.P,
            problem.q,
            problem.A,
            np.eye(2),
            np.array([0.25, -0.5]),
            np.array([0.25, -0.5]),
            beta=0.5,
            kappa=10.0,
        )
        x, value = solve_cvqp_reference(pinned)
        assert np.allclose(x, [0.25, -0.5], atol=1e-7)
        assert value == pytest.approx(pinned.objective(np.array([0.25, -0.5])), abs=1e-7)

    def test_solution_is_cvar_feasible(self):
        rng = rng_for(2)
        n, m = 5, 100
        A = rng.normal(size=(m, n))
        problem = CvqpProblem(
            np.ones(n),
            rng.normal(size=n),
            A,
            np.zeros((0, n)),
            np.zeros(0),
            np.zeros(0),
            beta=0.9,
            kappa=0.5,
        )
        x, value = solve_cvqp_reference(problem)
        assert cvar(A @ x, 0.9) <= 0.5 + 1e-6
        assert value <= 0.0 + 1e-9  # x = 0 is feasible with objective 0


class TestProjectReference:
    def test_agrees_with_closed_form(self):
        rng = rng_for(3)
        for m, k in [(10, 2), (25, 5), (40, 1)]:
            v = rng.random(m)
            spec = CvarSpec(k=k, d=0.5 * sum_k_largest(v, k))
            z_fast = project_sum_k_largest(v, spec)
            z_ref = project_reference(v, spec)
            assert np.linalg.norm(z_fast - z_ref, ord=np.inf) <= 1e-6

    def test_polish_lands_on_the_boundary(self):
        # The raw interior-point solve stops strictly inside the feasible
        # set at roughly sqrt(gap) accuracy; the polished solution must sit
        # on the constraint boundary to machine precision and never be
        # farther from v.
        rng = rng_for(4)
        for m, k in [(150, 30), (400, 20), (500, 250)]:
            v = rng.random(m)
            spec = CvarSpec(k=k, d=0.9 * sum_k_largest(v, k))
            z = project_reference(v, spec)
            boundary_gap = sum_k_largest(z, k) - spec.d
            assert abs(boundary_gap) <= 1e-10 * max(1.0, abs(spec.d))
            z_raw = project_reference(v, spec, polish=False)
            assert np.sum((z - v) ** 2) <= np.sum((z_raw - v) ** 2) + 1e-12

    def test_polish_tightens_large_instances(self):
        # At m in the hundreds the raw solve is only ~1e-5 accurate in
        # solution space, which is exactly what the polish step exists for.
        rng = rng_for(5)
        v = rng.random(409)
        spec = CvarSpec(k=21, d=0.9 * sum_k_largest(v, 21))
        z_fast = project_sum_k_largest(v, spec)
        z_ref = project_reference(v, spec)
        assert np.linalg.norm(z_fast - z_ref, ord=np.inf) <= 1e-12

    def test_feasible_input_returned_exactly(self):
        v = np.array([3.0, -1.0, 0.5])
        spec = CvarSpec(k=2, d=4.0)
        assert np.array_equal(project_reference(v, spec), v)


class TestKktChecker:
    def test_feasible_point_passes_unmoved(self):
        v = np.array([0.1, 0.2, 0.3])
        spec = CvarSpec(k=1, d=1.0)
        report = check_projection_kkt(v, v, spec)
        assert report.passed
        assert report.feasibility_gap <= 0
        assert report.slack_gap == 0.0

    def test_projection_outputs_pass(self):
        rng = rng_for(4)
        for _ in range(80):
            m = int(rng.integers(2, 100))
            v = rng.random(m)
            k = int(rng.integers(1, m + 1))
            spec = CvarSpec(k=k, d=float(rng.choice([0.3, 0.6, 0.9])) * sum_k_largest(v, k))
            z = project_sum_k_largest(v, spec)
            report = check_projection_kkt(v, z, spec, seed=int(rng.integers(1 << 16)))
            assert report.passed, report

    def test_infeasible_claim_fails(self):
        v = np.full(6, 1.0)
        spec = CvarSpec(k=2, d=1.0)
        z = project_sum_k_largest(v, spec)
        report = check_projection_kkt(v, z + 1e-3, spec)
        assert not report.passed
        assert report.feasibility_gap > 0

    def test_overshoot_fails_slackness(self):
        v = np.full(6, 1.0)
        spec = CvarSpec(k=2, d=1.0)
        z = project_sum_k_largest(v, spec)
        report = check_projection_kkt(v, z - 0.1, spec)
        assert not report.passed
        assert report.slack_gap > 1e-3

    def test_moving_off_support_fails(self):
        v = np.array([5.0, 4.0, 3.0, 0.5, 0.2])
        spec = CvarSpec(k=2, d=4.0)
        z = project_sum_k_largest(v, spec)
        bad = z.copy()
        bad[-1] -= 0.05  # entry far below the active block must not move
        report = check_projection_kkt(v, bad, spec)
        assert not report.passed
        assert report.support_leak >= 0.05 - 1e-12


class TestPenalizedForm:
    def test_lift_matches_direct_variational_solve(self):
        rng = rng_for(5)
        n, m = 3, 40
        G = rng.normal(size=(n, n))
        P = G @ G.T + 0.5 * np.eye(n)
        q = rng.normal(size=n)
        A = rng.normal(size=(m, n))
        B = np.eye(n)
        l = np.full(n, -2.0)
        u = np.full(n, 2.0)
        beta = 0.8

        lifted = lift_cvar_objective(P, q, A, B, l, u, beta)
        x_lift, value_lift = solve_cvqp_reference(lifted)
        x_ref, value_ref = solve_cvar_objective_reference(P, q, A, B, l, u, beta)
        assert value_lift == pytest.approx(value_ref, abs=1e-6)
        assert np.linalg.norm(x_lift[:n] - x_ref, ord=np.inf) <= 1e-4


class TestPinball:
    def test_hand_value(self):
        assert pinball_loss(np.array([1.0, -1.0]), 0.9) == pytest.approx(0.5)

    def test_zero_residuals(self):
        assert pinball_loss(np.zeros(4), 0.3) == 0.0

    def test_expanded_solver_roundtrip(self):
        # Feed solve_expanded a trivial one-variable expansion and make
        # sure the plumbing returns the QP minimizer.
        problem = CvqpProblem(
            np.array([1.0]),
            np.array([-2.0]),
            np.array([[1.0]]),
            np.zeros((0, 1)),
            np.zeros(0),
            np.zeros(0),
            beta=0.5,
            kappa=100.0,
        )
        qp = expand_cvqp(problem)
        w, value = solve_expanded(qp)
        assert w[0] == pytest.approx(2.0, abs=1e-6)
        assert value == pytest.approx(-2.0, abs=1e-6)
