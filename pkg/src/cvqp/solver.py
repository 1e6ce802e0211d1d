"""Operator-splitting solver for CVaR-constrained QPs.

Splits the problem by introducing copies z = Ax and zt = Bx:

    minimize (1/2) x'Px + q'x + I[f_k(z) <= d] + I[l <= zt <= u]

and runs ADMM in scaled form with over-relaxation.  Each sweep is

    x   <- argmin of the quadratic plus the two augmented terms
           (a cached Cholesky solve; the normal matrix P + rho (A'A + B'B)
           changes only when rho does)
    z   <- exact projection of the relaxed point plus dual onto the
           sum-of-k-largest set
    zt  <- clip of its relaxed point plus dual onto the box
    u, ut <- running scaled duals

The penalty adapts by the usual residual-balancing rule: every
rho_update_interval sweeps, rho is scaled up when the primal residual
dominates, down when the dual one does, with the duals rescaled and the
normal matrix refactorized on every change.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import (
    CvarSpec,
    CvqpError,
    CvqpProblem,
    ResidualRecord,
    SolverResult,
    SolverSettings,
    Status,
    Timings,
    validate,
)
from .projection import project_sum_k_largest

__all__ = [
    "NotPositiveDefinite",
    "Workspace",
    "Residuals",
    "factorize",
    "x_update",
    "clip_box",
    "iterate",
    "update_rho",
    "solve",
]


class NotPositiveDefinite(CvqpError):
    """The normal matrix P + rho (A'A + B'B) has no Cholesky factor."""


@dataclass(frozen=True)
class Residuals:
    """Primal/dual residual norms and their tolerances for one sweep."""

    r_norm: float
    s_norm: float
    eps_pri: float
    eps_dual: float


@dataclass
class Workspace:
    """Mutable iteration state.

    C caches A'A + B'B so penalty changes only re-add the diagonal of P
    and refactorize.  Timing counters accumulate across the solve.
    """

    problem: CvqpProblem
    rho: float
    C: np.ndarray
    M_factor: tuple
    x: np.ndarray
    z: np.ndarray
    zt: np.ndarray
    u: np.ndarray
    ut: np.ndarray
    z_half: np.ndarray | None = None
    zt_half: np.ndarray | None = None
    factor_seconds: float = 0.0
    projection_seconds: float = 0.0


def _normal_matrix(P: np.ndarray, C: np.ndarray, rho: float) -> np.ndarray:
    M = rho * C
    if P.ndim == 1:
        M[np.diag_indices_from(M)] += P
    else:
        M += P
    return M


def factorize(P, A, B, rho: float, C: np.ndarray | None = None):
    """Cholesky factor of P + rho (A'A + B'B), reusing C when provided."""
    P = np.asarray(P, dtype=float)
    if C is None:
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        C = A.T @ A + B.T @ B
    M = _normal_matrix(P, C, rho)
    try:
        return scipy.linalg.cho_factor(M, lower=True, overwrite_a=True,
                                       check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(
            "normal matrix is not positive definite; P must be positive "
            "semidefinite and finite"
        ) from exc


def x_update(workspace: Workspace, q: np.ndarray) -> np.ndarray:
    """Minimize the augmented quadratic in x with z, zt, duals fixed."""
    prob = workspace.problem
    rho = workspace.rho
    rhs = rho * (prob.A.T @ (workspace.z - workspace.u))
    rhs += rho * (prob.B.T @ (workspace.zt - workspace.ut))
    rhs -= q
    x = scipy.linalg.cho_solve(workspace.M_factor, rhs, check_finite=False)
    workspace.x = x
    return x


def clip_box(v: np.ndarray, l: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Projection onto {z : l <= z <= u}; infinite bounds drop out."""
    return np.clip(v, l, u)


def iterate(
    workspace: Workspace,
    problem: CvqpProblem,
    spec: CvarSpec,
    settings: SolverSettings,
) -> Residuals:
    """One over-relaxed ADMM sweep; updates the workspace in place."""
    A, B = problem.A, problem.B
    alpha = settings.alpha
    rho = workspace.rho

    x = x_update(workspace, problem.q)
    Ax = A @ x
    Bx = B @ x

    z_half = alpha * Ax + (1.0 - alpha) * workspace.z
    zt_half = alpha * Bx + (1.0 - alpha) * workspace.zt
    workspace.z_half = z_half
    workspace.zt_half = zt_half

    t0 = time.perf_counter()
    z_new = project_sum_k_largest(z_half + workspace.u, spec)
    workspace.projection_seconds += time.perf_counter() - t0
    zt_new = clip_box(zt_half + workspace.ut, problem.l, problem.u)

    workspace.u = workspace.u + z_half - z_new
    workspace.ut = workspace.ut + zt_half - zt_new

    z_prev, zt_prev = workspace.z, workspace.zt
    workspace.z, workspace.zt = z_new, zt_new

    r_norm = math.hypot(
        float(np.linalg.norm(Ax - z_new)), float(np.linalg.norm(Bx - zt_new))
    )
    s_vec = A.T @ (z_prev - z_new) + B.T @ (zt_prev - zt_new)
    s_norm = rho * float(np.linalg.norm(s_vec))

    m, p, n = problem.m, problem.p, problem.n
    ax_scale = math.hypot(float(np.linalg.norm(Ax)), float(np.linalg.norm(Bx)))
    z_scale = math.hypot(float(np.linalg.norm(z_new)), float(np.linalg.norm(zt_new)))
    eps_pri = math.sqrt(m + p) * settings.eps_abs + settings.eps_rel * max(
        ax_scale, z_scale
    )
    dual_vec = A.T @ workspace.u + B.T @ workspace.ut
    eps_dual = math.sqrt(n) * settings.eps_abs + settings.eps_rel * rho * float(
        np.linalg.norm(dual_vec)
    )
    return Residuals(r_norm=r_norm, s_norm=s_norm, eps_pri=eps_pri, eps_dual=eps_dual)


def update_rho(
    workspace: Workspace, residuals: Residuals, settings: SolverSettings
) -> bool:
    """Residual-balancing penalty update; returns True when rho changed.

    On a change the scaled duals are rescaled by rho_old / rho_new (they
    estimate dual variables divided by rho) and the normal matrix is
    refactorized.  At the clamp boundary nothing happens.
    """
    rho = workspace.rho
    if residuals.r_norm > settings.mu * residuals.s_norm:
        new_rho = min(rho * settings.rho_scale, settings.rho_max)
    elif residuals.s_norm > settings.mu * residuals.r_norm:
        new_rho = max(rho / settings.rho_scale, settings.rho_min)
    else:
        new_rho = rho
    if new_rho == rho:
        return False

    scale = rho / new_rho
    workspace.u = workspace.u * scale
    workspace.ut = workspace.ut * scale
    workspace.rho = new_rho

    prob = workspace.problem
    t0 = time.perf_counter()
    workspace.M_factor = factorize(prob.P, prob.A, prob.B, new_rho, C=workspace.C)
    workspace.factor_seconds += time.perf_counter() - t0
    return True


def solve(problem: CvqpProblem, settings: SolverSettings | None = None) -> SolverResult:
    """Solve a CVQP; returns the result with residual history and timings.

    Raises a CvqpError subclass on inconsistent problem data.  A normal
    matrix with no Cholesky factor (indefinite or non-finite P) yields
    status InfeasibleInput instead of an exception.
    """
    if settings is None:
        settings = SolverSettings()
    spec = validate(problem)
    n, m, p = problem.n, problem.m, problem.p

    t_start = time.perf_counter()
    A, B = problem.A, problem.B
    C = A.T @ A + B.T @ B
    try:
        t0 = time.perf_counter()
        M_factor = factorize(problem.P, A, B, settings.rho0, C=C)
        factor_seconds = time.perf_counter() - t0
    except NotPositiveDefinite:
        total = time.perf_counter() - t_start
        return SolverResult(
            x=np.zeros(n),
            status=Status.INFEASIBLE_INPUT,
            objective=math.nan,
            iterations=0,
            history=[],
            timings=Timings(0.0, 0.0, total),
        )

    workspace = Workspace(
        problem=problem,
        rho=settings.rho0,
        C=C,
        M_factor=M_factor,
        x=np.zeros(n),
        z=np.zeros(m),
        zt=np.zeros(p),
        u=np.zeros(m),
        ut=np.zeros(p),
        factor_seconds=factor_seconds,
    )

    history: list[ResidualRecord] = []
    status = Status.MAX_ITERATIONS
    iteration = 0
    residuals = None
    logged_at = -1
    for iteration in range(1, settings.max_iter + 1):
        residuals = iterate(workspace, problem, spec, settings)
        if iteration % 25 == 0 or iteration == 1:
            history.append(_record(iteration, residuals, workspace.rho))
            logged_at = iteration
        if (
            residuals.r_norm <= residuals.eps_pri
            and residuals.s_norm <= residuals.eps_dual
        ):
            status = Status.OPTIMAL
            break
        if (
            settings.time_limit is not None
            and time.perf_counter() - t_start > settings.time_limit
        ):
            status = Status.TIME_LIMIT
            break
        if settings.adaptive_rho and iteration % settings.rho_update_interval == 0:
            update_rho(workspace, residuals, settings)

    if residuals is not None and logged_at != iteration:
        history.append(_record(iteration, residuals, workspace.rho))

    total = time.perf_counter() - t_start
    return SolverResult(
        x=workspace.x.copy(),
        status=status,
        objective=problem.objective(workspace.x),
        iterations=iteration,
        history=history,
        timings=Timings(
            factorization_s=workspace.factor_seconds,
            projection_s=workspace.projection_seconds,
            total_s=total,
        ),
    )


def _record(iteration: int, residuals: Residuals, rho: float) -> ResidualRecord:
    return ResidualRecord(
        iteration=iteration,
        r_norm=residuals.r_norm,
        s_norm=residuals.s_norm,
        eps_pri=residuals.eps_pri,
        eps_dual=residuals.eps_dual,
        rho=rho,
    )
