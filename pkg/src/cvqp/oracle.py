"""Reference solves and optimality checks, off the hot path.

The CVaR constraint cvar_beta(Ax) <= kappa expands, via the tail
average's variational form, into linear rows over (x, y, alpha):

    Ax - y - alpha * 1 <= 0
    -y <= 0
    alpha + (1/k) * 1'y <= kappa

Solving the expanded QP with an interior-point solver gives an
independent answer to compare the operator-splitting solver and the
closed-form projection against.  Everything here is test-grade: sparse
assembly so desk-scale instances fit in memory, tight tolerances, no
attention paid to speed.

cvxpy is imported lazily so the solver package itself has no hard
dependency on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import CvarSpec, CvqpProblem, sum_k_largest, tail_count, validate

__all__ = [
    "ExpandedQp",
    "expand_cvqp",
    "solve_expanded",
    "solve_cvqp_reference",
    "solve_cvar_objective_reference",
    "project_reference",
    "KktReport",
    "check_projection_kkt",
    "pinball_loss",
    "solve_quantile_direct",
]

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class ExpandedQp:
    """Linear-inequality form of a CVQP over the stacked variable w = (x, y, alpha).

    Minimize (1/2) w'Hw + g'w subject to Gw <= h and l <= box @ w <= u.
    Only the x block carries curvature and cost, so the optimal value
    equals the CVQP objective at w[:n].
    """

    H: sp.csc_matrix
    g: np.ndarray
    G: sp.csc_matrix
    h: np.ndarray
    box: sp.csc_matrix
    l: np.ndarray
    u: np.ndarray
    n: int
    m: int
    k: int


def _expand(P, q, A, B, l, u, k: int, d: float) -> ExpandedQp:
    n = q.shape[0]
    m = A.shape[0]
    p = B.shape[0]

    if P.ndim == 1:
        Hx = sp.diags(P)
    else:
        Hx = sp.csc_matrix(P)
    H = sp.block_diag([Hx, sp.csc_matrix((m + 1, m + 1))], format="csc")
    g = np.concatenate([q, np.zeros(m + 1)])

    eye_m = sp.eye(m, format="csc")
    ones_col = np.ones((m, 1))
    zeros_nm = sp.csc_matrix((m, n))
    rows = [
        sp.hstack([sp.csc_matrix(A), -eye_m, -ones_col]),
        sp.hstack([zeros_nm, -eye_m, sp.csc_matrix((m, 1))]),
    ]
    h = np.zeros(2 * m)
    if math.isfinite(d):
        rows.append(sp.csc_matrix(
            np.concatenate([np.zeros(n), np.full(m, 1.0 / k), [1.0]])[None, :]
        ))
        h = np.concatenate([h, [d / k]])
    # d = +inf makes the tail bound vacuous; the row is dropped rather
    # than handing the QP solver an infinite right-hand side.
    G = sp.vstack(rows, format="csc")

    box = sp.hstack([sp.csc_matrix(B), sp.csc_matrix((p, m + 1))], format="csc")
    return ExpandedQp(H=H, g=g, G=G, h=h, box=box, l=l, u=u, n=n, m=m, k=k)


def expand_cvqp(problem: CvqpProblem) -> ExpandedQp:
    """Expanded linear-inequality form of a validated CVQP."""
    spec = validate(problem)
    return _expand(
        problem.P, problem.q, problem.A, problem.B, problem.l, problem.u,
        spec.k, spec.d,
    )


def solve_expanded(qp: ExpandedQp, tol: float = DEFAULT_TOL) -> tuple[np.ndarray, float]:
    """Interior-point solve of an ExpandedQp; returns (w, optimal value)."""
    import cvxpy as cp

    w = cp.Variable(qp.H.shape[0])
    objective = 0.5 * cp.quad_form(w, qp.H, assume_PSD=True) + qp.g @ w
    constraints = [qp.G @ w <= qp.h]
    if qp.box.shape[0]:
        rows = qp.box @ w
        eq = np.isfinite(qp.l) & (qp.l == qp.u)
        lo = np.isfinite(qp.l) & ~eq
        hi = np.isfinite(qp.u) & ~eq
        if eq.any():
            constraints.append(rows[eq] == qp.l[eq])
        if lo.any():
            constraints.append(rows[lo] >= qp.l[lo])
        if hi.any():
            constraints.append(rows[hi] <= qp.u[hi])
    prob = cp.Problem(cp.Minimize(objective), constraints)
    prob.solve(
        solver=cp.CLARABEL,
        tol_gap_abs=tol,
        tol_gap_rel=tol,
        tol_feas=tol,
    )
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise RuntimeError(f"reference solve failed with status {prob.status}")
    return np.asarray(w.value), float(prob.value)


def solve_cvqp_reference(
    problem: CvqpProblem, tol: float = DEFAULT_TOL
) -> tuple[np.ndarray, float]:
    """Independent CVQP solve through the expanded QP; returns (x, objective)."""
    qp = expand_cvqp(problem)
    w, value = solve_expanded(qp, tol=tol)
    return w[: qp.n], value


def solve_cvar_objective_reference(
    P, q, A, B, l, u, beta: float, tol: float = DEFAULT_TOL
) -> tuple[np.ndarray, float]:
    """Reference for the penalized form: minimize (1/2)x'Px + q'x + cvar_beta(Ax).

    Models the CVaR term directly in its variational form, without going
    through the epigraph rewrite, so it can cross-check lift_cvar_objective.
    """
    import cvxpy as cp

    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    l = np.asarray(l, dtype=float)
    u = np.asarray(u, dtype=float)
    n = q.shape[0]
    m = A.shape[0]
    k = tail_count(beta, m)

    x = cp.Variable(n)
    y = cp.Variable(m, nonneg=True)
    alpha = cp.Variable()
    if P.ndim == 1:
        quad = 0.5 * cp.sum(cp.multiply(P, cp.square(x)))
    else:
        quad = 0.5 * cp.quad_form(x, P, assume_PSD=True)
    objective = quad + q @ x + alpha + cp.sum(y) / k
    constraints = [A @ x - alpha - y <= 0]
    rows = B @ x
    lo = np.isfinite(l)
    hi = np.isfinite(u)
    if lo.any():
        constraints.append(rows[lo] >= l[lo])
    if hi.any():
        constraints.append(rows[hi] <= u[hi])
    prob = cp.Problem(cp.Minimize(objective), constraints)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=tol, tol_gap_rel=tol, tol_feas=tol)
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise RuntimeError(f"reference solve failed with status {prob.status}")
    return np.asarray(x.value), float(prob.value)


def _polish_projection(v, k, d, x_approx, t_approx):
    """Refine an interior-point projection of v onto {f_k <= d} to the ulp.

    The approximate solve only has to identify the optimal partition of v:
    entries strictly above the common threshold t (each reduced by the same
    amount eta), entries pinned at t, and entries left alone below it.  On
    a fixed partition, stationarity of the expanded QP plus the active tail
    row collapse to a 2x2 linear system in (eta, t); re-partitioning v
    against the exact solution and repeating reaches a fixed point whose
    partition is self-consistent, which is a complete KKT certificate for
    this convex QP.  Returns None when no certified fixed point is found,
    in which case the caller keeps the unpolished solution.
    """
    m = v.size
    scale = max(1.0, float(np.abs(v).max(initial=0.0)))
    eta = max(float(np.max(v - x_approx, initial=0.0)), 0.0)
    t = float(t_approx)
    last = None
    for _ in range(100):
        upper = v > t + eta
        tied = ~upper & (v >= t)
        n_u = int(upper.sum())
        n_t = int(tied.sum())
        if not n_u <= k <= n_u + n_t:
            # The tail row cannot be active on this partition.
            return None
        key = (upper.tobytes(), tied.tobytes())
        if key == last:
            break
        last = key
        sum_u = float(v[upper].sum())
        sum_t = float(v[tied].sum())
        if n_t == 0:
            # No tied block (so n_u == k): eta is pinned by the tail row
            # alone and the threshold may sit anywhere strictly between
            # the lowered top block and the untouched entries.
            eta = (sum_u - d) / k
            hi = float(np.min(v[upper])) - eta
            lo = float(np.max(v[~upper])) if n_u < m else hi - 1.0
            if lo >= hi:
                return None
            t = 0.5 * (lo + hi)
        else:
            # [ -n_u   k-n_u ] [eta]   [ d - sum_u ]
            # [ k-n_u   n_t  ] [ t ] = [   sum_t   ]
            det = -(n_u * n_t) - (k - n_u) ** 2
            eta = (n_t * (d - sum_u) - (k - n_u) * sum_t) / det
            t = ((k - n_u) * (d - sum_u) + n_u * sum_t) / -det
    else:
        return None
    if eta < -1e-12 * scale:
        return None
    z = v.copy()
    z[upper] -= eta
    z[tied] = t
    if float(np.sort(z)[m - k :].sum()) - d > 1e-9 * max(1.0, abs(d)):
        return None
    return z


def project_reference(
    v, spec: CvarSpec, tol: float = 1e-10, polish: bool = True
) -> np.ndarray:
    """Projection onto {z : f_k(z) <= d} via the expanded QP.

    The interior-point solve alone is accurate to roughly the square root
    of its gap tolerance in solution space; with polish=True the active-set
    refinement sharpens a certified solution to machine precision, falling
    back to the raw solve when certification fails.
    """
    v = np.asarray(v, dtype=float)
    m = v.size
    if polish and sum_k_largest(v, spec.k) <= spec.d:
        return v.copy()
    qp = _expand(
        P=np.full(m, 2.0),
        q=-2.0 * v,
        A=np.eye(m),
        B=np.zeros((0, m)),
        l=np.zeros(0),
        u=np.zeros(0),
        k=spec.k,
        d=spec.d,
    )
    w, _ = solve_expanded(qp, tol=tol)
    if polish:
        z = _polish_projection(v, spec.k, spec.d, w[:m], w[-1])
        if z is not None:
            return z
    return w[:m]


@dataclass(frozen=True)
class KktReport:
    """Optimality evidence for a claimed projection z of v.

    feasibility_gap: f_k(z) - d (signed).
    min_decrease: min(v - z); projection never raises an entry.
    support_leak: largest |v - z| among entries strictly below the k-th
        largest of z, which optimality forces to zero.
    slack_gap: |f_k(z) - d| when z != v (an interior move is never optimal).
    worst_vi_margin: max over probe points w of <v - z, w - z>, normalized
        by ||v - z|| ||w - z||; nonpositive up to tolerance iff z is the
        closest point tried.
    """

    passed: bool
    feasibility_gap: float
    min_decrease: float
    support_leak: float
    slack_gap: float
    worst_vi_margin: float


def check_projection_kkt(
    v,
    z,
    spec: CvarSpec,
    n_points: int = 50,
    tol: float | None = None,
    seed: int = 0,
) -> KktReport:
    """First-order optimality checks for z = proj(v), without a QP solve.

    Checks feasibility, the no-increase property, zero movement off the
    active top block, complementary slackness, and the variational
    inequality against n_points random feasible probes (half drawn near z,
    half spread over the feasible set at the data's scale).
    """
    v = np.asarray(v, dtype=float)
    z = np.asarray(z, dtype=float)
    m = v.size
    k, d = spec.k, spec.d
    if tol is None:
        tol = 1e-8 * max(1.0, abs(d), float(np.abs(v).max(initial=0.0)))
    vi_tol = 1e-8

    fkz = sum_k_largest(z, k)
    feasibility_gap = fkz - d

    delta = v - z
    min_decrease = float(delta.min())

    z_kth = float(np.partition(z, m - k)[m - k])
    outside = z < z_kth - tol
    support_leak = float(np.abs(delta[outside]).max()) if outside.any() else 0.0

    moved = float(np.abs(delta).max()) > tol
    slack_gap = abs(fkz - d) if moved else 0.0

    dist = float(np.linalg.norm(delta))
    worst = -math.inf
    rng = np.random.Generator(np.random.Philox(key=seed))
    scale = max(1.0, float(np.abs(v).max(initial=0.0)))
    for i in range(n_points):
        if i % 2 == 0:
            w = rng.normal(size=m) * scale
            # Shift every entry down until the top-k sum meets the bound.
            gap = sum_k_largest(w, k) - d
            if gap > 0:
                w -= gap / k
        else:
            # Entrywise decreases keep f_k below the bound.
            w = z - np.abs(rng.normal(size=m)) * (0.01 * scale)
        step = float(np.linalg.norm(w - z))
        if dist == 0.0 or step <= 1e-9 * scale:
            # A probe this close to z carries no directional signal: the
            # margin would be roundoff from the feasibility restoration.
            continue
        worst = max(worst, float(delta @ (w - z)) / (dist * step))
    worst_vi_margin = 0.0 if worst == -math.inf else worst

    passed = (
        feasibility_gap <= tol
        and min_decrease >= -tol
        and support_leak <= tol
        and slack_gap <= tol
        and worst_vi_margin <= vi_tol
    )
    return KktReport(
        passed=passed,
        feasibility_gap=feasibility_gap,
        min_decrease=min_decrease,
        support_leak=support_leak,
        slack_gap=slack_gap,
        worst_vi_margin=worst_vi_margin,
    )


def pinball_loss(residuals, tau: float) -> float:
    """Mean pinball (quantile) loss of residuals at level tau."""
    r = np.asarray(residuals, dtype=float)
    return float(np.mean(np.maximum(tau * r, (tau - 1.0) * r)))


def solve_quantile_direct(
    U, y, tau: float, tol: float = DEFAULT_TOL
) -> tuple[np.ndarray, float, float]:
    """LP solve of quantile regression in its native pinball form.

    Returns (slope, intercept, optimal mean pinball loss).
    """
    import cvxpy as cp

    U = np.asarray(U, dtype=float)
    y = np.asarray(y, dtype=float)
    m, n = U.shape
    x = cp.Variable(n)
    x0 = cp.Variable()
    r = y - U @ x - x0
    loss = cp.sum(cp.maximum(tau * r, (tau - 1.0) * r)) / m
    prob = cp.Problem(cp.Minimize(loss))
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=tol, tol_gap_rel=tol, tol_feas=tol)
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise RuntimeError(f"reference solve failed with status {prob.status}")
    return np.asarray(x.value), float(x0.value), float(prob.value)
