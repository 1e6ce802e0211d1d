"""Problem data, solver configuration, and CVaR arithmetic.

A CVQP instance is

    minimize    (1/2) x'Px + q'x
    subject to  cvar_beta(Ax) <= kappa
                l <= Bx <= u

where cvar_beta(z) is the average of the largest ceil((1-beta)*m) entries
of z (the empirical conditional value at risk at level beta).  Internally
the CVaR constraint is carried around in sum-of-k-largest form,

    f_k(Ax) <= d,    k = ceil((1-beta)*m),    d = kappa * k,

captured by a ``CvarSpec``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CvqpError",
    "DimensionMismatch",
    "BadBounds",
    "BadBeta",
    "AsymmetricP",
    "CvqpProblem",
    "CvarSpec",
    "SolverSettings",
    "Status",
    "ResidualRecord",
    "Timings",
    "SolverResult",
    "tail_count",
    "validate",
    "sum_k_largest",
    "cvar",
    "lift_cvar_objective",
]

# Relative tolerance for the P symmetry check in validate().
SYMMETRY_TOL = 1e-10


class CvqpError(ValueError):
    """Base class for problem construction and validation errors."""


class DimensionMismatch(CvqpError):
    """Array shapes are inconsistent with each other."""


class BadBounds(CvqpError):
    """Some lower bound exceeds its upper bound."""


class BadBeta(CvqpError):
    """Probability level outside (0, 1), or a tail count outside [1, m]."""


class AsymmetricP(CvqpError):
    """Quadratic cost matrix is not symmetric."""


def tail_count(beta: float, m: int) -> int:
    """Number of scenarios in the worst (1 - beta) tail, k = ceil((1-beta)*m).

    The product (1-beta)*m is formed in floating point, so values that are
    integers in exact arithmetic can land one ulp high (0.05 * 100 gives
    5.000000000000004).  A literal ceiling would then overcount the tail by
    one; shrinking by a relative epsilon before rounding up restores the
    intended integer while leaving genuinely fractional products alone.
    """
    t = (1.0 - beta) * m
    return math.ceil(t * (1.0 - 1e-12))


def _as_float_array(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class CvqpProblem:
    """Immutable CVQP instance.

    P may be given as a dense (n, n) array or as a 1-D length-n array
    holding the diagonal of a diagonal quadratic cost.  B is (p, n) with
    p >= 0; elementwise bounds l, u may contain -inf / +inf for one-sided
    or absent rows.
    """

    P: np.ndarray
    q: np.ndarray
    A: np.ndarray
    B: np.ndarray
    l: np.ndarray
    u: np.ndarray
    beta: float
    kappa: float

    def __post_init__(self):
        for name in ("P", "q", "A", "B", "l", "u"):
            object.__setattr__(self, name, _as_float_array(getattr(self, name)))

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[0]

    def objective(self, x: np.ndarray) -> float:
        """Evaluate (1/2) x'Px + q'x."""
        x = _as_float_array(x)
        Px = self.P * x if self.P.ndim == 1 else self.P @ x
        return float(0.5 * (x @ Px) + self.q @ x)


@dataclass(frozen=True)
class CvarSpec:
    """Sum-of-k-largest form of a CVaR constraint: f_k(z) <= d."""

    k: int
    d: float


def validate(problem: CvqpProblem) -> CvarSpec:
    """Check problem consistency and return the derived CvarSpec.

    Raises the error for the first violated requirement: shapes first,
    then symmetry of P, then bound ordering, then the probability level.
    """
    P, q, A, B = problem.P, problem.q, problem.A, problem.B
    l, u = problem.l, problem.u

    if q.ndim != 1:
        raise DimensionMismatch(f"q must be 1-D, got shape {q.shape}")
    n = q.shape[0]
    if P.ndim == 1:
        if P.shape[0] != n:
            raise DimensionMismatch(f"diagonal P has length {P.shape[0]}, expected {n}")
    elif P.ndim == 2:
        if P.shape != (n, n):
            raise DimensionMismatch(f"P has shape {P.shape}, expected ({n}, {n})")
    else:
        raise DimensionMismatch(f"P must be 1-D or 2-D, got ndim {P.ndim}")
    if A.ndim != 2 or A.shape[1] != n:
        raise DimensionMismatch(f"A has shape {A.shape}, expected (m, {n})")
    m = A.shape[0]
    if m < 1:
        raise DimensionMismatch("A must have at least one row")
    if B.ndim != 2 or B.shape[1] != n:
        raise DimensionMismatch(f"B has shape {B.shape}, expected (p, {n})")
    p = B.shape[0]
    if l.shape != (p,) or u.shape != (p,):
        raise DimensionMismatch(
            f"bounds have shapes {l.shape} and {u.shape}, expected ({p},)"
        )

    if P.ndim == 2 and P.size:
        scale = max(1.0, float(np.abs(P).max()))
        if float(np.abs(P - P.T).max()) > SYMMETRY_TOL * scale:
            raise AsymmetricP("P must be symmetric")

    if np.any(l > u):
        bad = int(np.argmax(l > u))
        raise BadBounds(f"l[{bad}] = {l[bad]} exceeds u[{bad}] = {u[bad]}")

    if not (0.0 < problem.beta < 1.0):
        raise BadBeta(f"beta must lie in (0, 1), got {problem.beta}")
    k = tail_count(problem.beta, m)
    if not 1 <= k <= m:
        raise BadBeta(f"tail count k = {k} outside [1, {m}]")

    return CvarSpec(k=k, d=problem.kappa * k)


def sum_k_largest(z, k: int) -> float:
    """Sum of the k largest entries of z, f_k(z)."""
    z = _as_float_array(z)
    m = z.size
    if not 1 <= k <= m:
        raise ValueError(f"k = {k} outside [1, {m}]")
    if k == m:
        return float(z.sum())
    return float(np.partition(z, m - k)[m - k :].sum())


def cvar(z, beta: float) -> float:
    """Empirical CVaR at level beta: mean of the worst (1-beta) tail of z."""
    z = _as_float_array(z)
    if z.size == 0:
        raise DimensionMismatch("cvar of an empty sample is undefined")
    if not (0.0 < beta < 1.0):
        raise BadBeta(f"beta must lie in (0, 1), got {beta}")
    k = tail_count(beta, z.size)
    return sum_k_largest(z, k) / k


def lift_cvar_objective(P, q, A, B, l, u, beta: float) -> CvqpProblem:
    """Rewrite a CVaR-penalized objective as a constrained CVQP.

    The problem  minimize (1/2) x'Px + q'x + cvar_beta(Ax)  over the box
    l <= Bx <= u is equivalent, through the epigraph variable t, to a CVQP
    in (x, t) with objective (1/2) x'Px + q'x + t and the CVaR of the
    shifted rows Ax - t*1 constrained to be <= 0.
    """
    P = _as_float_array(P)
    q = _as_float_array(q)
    A = _as_float_array(A)
    B = _as_float_array(B)
    l = _as_float_array(l)
    u = _as_float_array(u)
    if q.ndim != 1:
        raise DimensionMismatch(f"q must be 1-D, got shape {q.shape}")
    n = q.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise DimensionMismatch(f"A has shape {A.shape}, expected (m, {n})")
    if B.ndim != 2 or B.shape[1] != n:
        raise DimensionMismatch(f"B has shape {B.shape}, expected (p, {n})")
    m, p = A.shape[0], B.shape[0]

    if P.ndim == 1:
        P_new = np.concatenate([P, [0.0]])
    else:
        P_new = np.zeros((n + 1, n + 1))
        P_new[:n, :n] = P
    q_new = np.concatenate([q, [1.0]])
    A_new = np.hstack([A, -np.ones((m, 1))])
    B_new = np.hstack([B, np.zeros((p, 1))])
    return CvqpProblem(P_new, q_new, A_new, B_new, l, u, beta=beta, kappa=0.0)


@dataclass(frozen=True)
class SolverSettings:
    """ADMM configuration.

    rho_update_interval is the adaptation period T: the penalty is
    reconsidered every T iterations while adaptive_rho is on.  time_limit
    is in wall-clock seconds; None means no limit.
    """

    rho0: float = 1e-2
    alpha: float = 1.7
    eps_abs: float = 1e-4
    eps_rel: float = 1e-3
    mu: float = 10.0
    rho_scale: float = 2.0
    rho_update_interval: int = 50
    max_iter: int = 100_000
    time_limit: float | None = None
    adaptive_rho: bool = True
    rho_min: float = 1e-6
    rho_max: float = 1e6

    def __post_init__(self):
        if not self.rho0 > 0:
            raise ValueError("rho0 must be positive")
        if not 0.0 < self.alpha < 2.0:
            raise ValueError("alpha must lie in (0, 2)")
        if not self.eps_abs > 0:
            raise ValueError("eps_abs must be positive")
        if not self.eps_rel > 0:
            raise ValueError("eps_rel must be positive")
        if not self.mu > 1:
            raise ValueError("mu must exceed 1")
        if not self.rho_scale > 1:
            raise ValueError("rho_scale must exceed 1")
        if self.rho_update_interval < 1:
            raise ValueError("rho_update_interval must be at least 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.time_limit is not None and not self.time_limit > 0:
            raise ValueError("time_limit must be positive or None")
        if not self.rho_min > 0:
            raise ValueError("rho_min must be positive")
        if not self.rho_max >= self.rho_min:
            raise ValueError("rho_max must be at least rho_min")


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    MAX_ITERATIONS = "MaxIterations"
    TIME_LIMIT = "TimeLimit"
    INFEASIBLE_INPUT = "InfeasibleInput"


@dataclass(frozen=True)
class ResidualRecord:
    """Residuals and tolerances logged at one iteration."""

    iteration: int
    r_norm: float
    s_norm: float
    eps_pri: float
    eps_dual: float
    rho: float


@dataclass(frozen=True)
class Timings:
    factorization_s: float
    projection_s: float
    total_s: float


@dataclass(frozen=True)
class SolverResult:
    x: np.ndarray
    status: Status
    objective: float
    iterations: int
    history: list[ResidualRecord] = field(default_factory=list)
    timings: Timings = Timings(0.0, 0.0, 0.0)
