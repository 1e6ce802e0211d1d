"""Exact Euclidean projection onto sum-of-k-largest constraint sets.

Projects v onto C = {z : f_k(z) <= d}, where f_k sums the k largest
entries.  Working in nonincreasing sorted order, the projection moves
along a piecewise-linear path: the k-th largest entries above the
emerging tie value drop at a common rate while a growing "tied block"
of equal entries absorbs neighbors from both sides.  Between events the
path is linear, so each segment is traversed in O(1) from a small state
and the whole projection costs one sort plus at most m+1 constant-time
steps.

The state tracks the sorted working vector implicitly:

    entries [0, n_untied)               original values minus untied_drop
    entries [n_untied, n_untied+n_tied) all equal to tied_value
    entries [n_untied+n_tied, m)        untouched original values

``decrease_step`` advances the state by one segment; ``project_sum_k_largest``
runs it to termination and undoes the sort.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import BadBeta, CvarSpec, sum_k_largest, tail_count

__all__ = [
    "ProjectionState",
    "ProjectionInfo",
    "sort_permutation",
    "decrease_step",
    "project_sum_k_largest",
    "project_cvar",
]

_INF = math.inf

# If the top-k sum exceeds the bound by less than this relative slack the
# input is treated as already feasible and returned unchanged.  Guards
# idempotence: re-projecting an output whose active sum sits a few ulps
# above d must not trigger a second, vanishing move.
FEASIBLE_RTOL = 1e-12


@dataclass(frozen=True)
class ProjectionState:
    """Constant-size description of the partially projected sorted vector.

    steps counts decrease segments taken so far.  tied_value is -inf and
    n_tied is 0 until the first tie forms.  last_untied is the current
    working value of the deepest untied entry (undefined when n_untied is
    0), next_unaltered the first original value past the tied block
    (undefined when the block reaches the end).  top_sum is f_k of the
    working vector, kept incrementally.
    """

    steps: int
    n_untied: int
    n_tied: int
    untied_drop: float
    top_sum: float
    tied_value: float
    last_untied: float
    next_unaltered: float
    v_sorted: np.ndarray
    perm: np.ndarray

    @classmethod
    def initial(cls, v_sorted: np.ndarray, perm: np.ndarray, k: int) -> "ProjectionState":
        m = v_sorted.shape[0]
        return cls(
            steps=0,
            n_untied=k,
            n_tied=0,
            untied_drop=0.0,
            top_sum=float(v_sorted[:k].sum()),
            tied_value=-_INF,
            last_untied=float(v_sorted[k - 1]),
            next_unaltered=float(v_sorted[k]) if k < m else math.nan,
            v_sorted=v_sorted,
            perm=perm,
        )

    def working_vector(self) -> np.ndarray:
        """Materialize the sorted working vector (test and debug helper)."""
        head = self.v_sorted[: self.n_untied] - self.untied_drop
        mid = np.full(self.n_tied, self.tied_value)
        tail = self.v_sorted[self.n_untied + self.n_tied :]
        return np.concatenate([head, mid, tail])


@dataclass(frozen=True)
class ProjectionInfo:
    """Diagnostics from one projection call."""

    steps: int
    n_untied: int
    n_tied: int
    untied_drop: float
    tied_value: float


def sort_permutation(v: np.ndarray) -> np.ndarray:
    """Indices putting v in nonincreasing order; ties keep input order."""
    v = np.asarray(v, dtype=float)
    if np.isnan(v).any():
        raise ValueError("input contains NaN")
    return np.argsort(-v, kind="stable")


def _advance(vs, m, k, d, n_untied, n_tied, untied_drop, top_sum,
             tied_value, last_untied, next_unaltered):
    """Advance the decrease path by one segment.

    vs is the sorted vector (any indexable of floats), remaining arguments
    are the scalar state.  Returns the updated scalars plus a termination
    flag.  On the terminating segment only the value fields move; the
    block structure is frozen where it stands.
    """
    first = n_tied == 0
    if first:
        # Before any tie forms all k top entries drop at unit rate.
        rate = 1.0
        weight = float(k)
    else:
        # Untied entries drop n_tied / (k - n_untied) times faster than
        # the tied block so that f_k keeps its maximal decrease rate.
        rate = n_tied / (k - n_untied)
        weight = n_untied * rate + (k - n_untied)

    # Segment lengths (in tied-block travel) to the next structural event:
    # the deepest untied entry reaching the tied value, the tied value (or
    # the untied block, before any tie) reaching the next unaltered entry,
    # and f_k reaching the bound d.  Clamp at zero so stacked ties at the
    # same height are absorbed by zero-length segments.
    if n_untied == 0 or n_tied == 0:
        s_merge = _INF
    else:
        s_merge = max((last_untied - tied_value) / (rate - 1.0), 0.0)
    if n_untied + n_tied == m:
        s_grow = _INF
    else:
        edge = last_untied if first else tied_value
        s_grow = max(edge - next_unaltered, 0.0)
    s_done = (top_sum - d) / weight

    if s_done <= s_merge and s_done <= s_grow:
        untied_drop += s_done * rate
        top_sum = d
        if tied_value > -_INF:
            tied_value -= s_done
        if n_untied > 0:
            last_untied -= s_done * rate
        return (n_untied, n_tied, untied_drop, top_sum, tied_value,
                last_untied, next_unaltered, True)

    s = min(s_merge, s_grow)
    untied_drop += s * rate
    top_sum -= s * weight
    if first:
        # First event: entries k and k+1 (1-based) meet and start the
        # tied block; entry k leaves the untied prefix.
        n_untied = k - 1
        n_tied = 2
        tied_value = float(vs[k])
    else:
        if s_merge <= s_grow:
            n_untied -= 1
        n_tied += 1
        tied_value -= s
    if n_untied > 0:
        last_untied = float(vs[n_untied - 1]) - untied_drop
    if n_untied + n_tied < m:
        next_unaltered = float(vs[n_untied + n_tied])
    return (n_untied, n_tied, untied_drop, top_sum, tied_value,
            last_untied, next_unaltered, False)


def decrease_step(state: ProjectionState, spec: CvarSpec) -> tuple[ProjectionState, bool]:
    """One segment of the decrease path; caller guarantees top_sum > d.

    Returns the advanced state and True when the bound was reached, in
    which case the state describes the projection.
    """
    m = state.v_sorted.shape[0]
    (n_untied, n_tied, untied_drop, top_sum, tied_value, last_untied,
     next_unaltered, done) = _advance(
        state.v_sorted, m, spec.k, spec.d,
        state.n_untied, state.n_tied, state.untied_drop, state.top_sum,
        state.tied_value, state.last_untied, state.next_unaltered,
    )
    new_state = replace(
        state,
        steps=state.steps + 1,
        n_untied=n_untied,
        n_tied=n_tied,
        untied_drop=untied_drop,
        top_sum=top_sum,
        tied_value=tied_value,
        last_untied=last_untied,
        next_unaltered=next_unaltered,
    )
    return new_state, done


def project_sum_k_largest(v, spec: CvarSpec, *, return_info: bool = False):
    """Euclidean projection of v onto {z : sum of k largest of z <= d}.

    Returns the projection, or (projection, ProjectionInfo) when
    return_info is set.  Already feasible inputs come back as an
    unmodified copy.  Cost is O(m log m) for the sort plus at most m+1
    constant-time steps.
    """
    v = np.asarray(v, dtype=float)
    m = v.size
    k, d = spec.k, spec.d
    if not 1 <= k <= m:
        raise ValueError(f"k = {k} outside [1, {m}]")
    if not np.isfinite(v).all():
        raise ValueError("input entries must be finite")
    if math.isnan(d) or d == -_INF:
        raise ValueError(f"bound d must exceed -inf, got {d}")

    top_sum = sum_k_largest(v, k)
    if top_sum <= d + FEASIBLE_RTOL * max(1.0, abs(d)):
        out = v.copy()
        if return_info:
            return out, ProjectionInfo(0, k, 0, 0.0, -_INF)
        return out

    perm = sort_permutation(v)
    v_sorted = v[perm]
    vs = v_sorted.tolist()
    # Re-derive the running top-k sum from the sorted order so the summation
    # order (hence every subsequent float) is independent of the input
    # permutation; the partition-based gate above is order-sensitive at ulp
    # level.
    top_sum = float(v_sorted[:k].sum())

    n_untied = k
    n_tied = 0
    untied_drop = 0.0
    tied_value = -_INF
    last_untied = vs[k - 1]
    next_unaltered = vs[k] if k < m else math.nan
    steps = 0
    done = False
    while not done:
        (n_untied, n_tied, untied_drop, top_sum, tied_value, last_untied,
         next_unaltered, done) = _advance(
            vs, m, k, d, n_untied, n_tied, untied_drop, top_sum,
            tied_value, last_untied, next_unaltered,
        )
        steps += 1

    z_sorted = np.concatenate([
        v_sorted[:n_untied] - untied_drop,
        np.full(n_tied, tied_value),
        v_sorted[n_untied + n_tied :],
    ])
    out = np.empty(m)
    out[perm] = z_sorted
    if return_info:
        return out, ProjectionInfo(steps, n_untied, n_tied, untied_drop, tied_value)
    return out


def project_cvar(v, beta: float, kappa: float, *, return_info: bool = False):
    """Project v onto {z : cvar_beta(z) <= kappa}."""
    v = np.asarray(v, dtype=float)
    if not (0.0 < beta < 1.0):
        raise BadBeta(f"beta must lie in (0, 1), got {beta}")
    k = tail_count(beta, v.size)
    return project_sum_k_largest(
        v, CvarSpec(k=k, d=kappa * k), return_info=return_info
    )
