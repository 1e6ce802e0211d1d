"""CVaR-constrained quadratic programming.

An ADMM solver built around an exact O(m log m) Euclidean projection
onto sum-of-k-largest (equivalently, CVaR) constraint sets, plus seeded
instance generators, reference oracles, and a benchmark CLI.
"""

from .core import (
    AsymmetricP,
    BadBeta,
    BadBounds,
    CvarSpec,
    CvqpError,
    CvqpProblem,
    DimensionMismatch,
    ResidualRecord,
    SolverResult,
    SolverSettings,
    Status,
    Timings,
    cvar,
    lift_cvar_objective,
    sum_k_largest,
    tail_count,
    validate,
)
from .generators import (
    PortfolioConfig,
    ProjectionConfig,
    QuantileConfig,
    gen_portfolio,
    gen_projection,
    gen_quantile,
)
from .io import dump_problem, load_problem, problem_from_dict, problem_to_dict
from .projection import (
    ProjectionInfo,
    ProjectionState,
    decrease_step,
    project_cvar,
    project_sum_k_largest,
    sort_permutation,
)
from .solver import NotPositiveDefinite, solve

__all__ = [
    "AsymmetricP",
    "BadBeta",
    "BadBounds",
    "CvarSpec",
    "CvqpError",
    "CvqpProblem",
    "DimensionMismatch",
    "NotPositiveDefinite",
    "PortfolioConfig",
    "ProjectionConfig",
    "ProjectionInfo",
    "ProjectionState",
    "QuantileConfig",
    "ResidualRecord",
    "SolverResult",
    "SolverSettings",
    "Status",
    "Timings",
    "cvar",
    "decrease_step",
    "dump_problem",
    "gen_portfolio",
    "gen_projection",
    "gen_quantile",
    "lift_cvar_objective",
    "load_problem",
    "problem_from_dict",
    "problem_to_dict",
    "project_cvar",
    "project_sum_k_largest",
    "solve",
    "sort_permutation",
    "sum_k_largest",
    "tail_count",
    "validate",
]

__version__ = "0.1.0"
