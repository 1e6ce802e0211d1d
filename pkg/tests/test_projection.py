import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvqp import (
    BadBeta,
    CvarSpec,
    ProjectionState,
    decrease_step,
    project_cvar,
    project_sum_k_largest,
    sort_permutation,
    sum_k_largest,
    tail_count,
)
from conftest import rng_for


def random_instance(rng, max_m=120, active=True):
    m = int(rng.integers(1, max_m + 1))
    v = rng.normal(size=m) * float(rng.choice([0.3, 1.0, 4.0]))
    k = int(rng.integers(1, m + 1))
    top = sum_k_largest(v, k)
    if active:
        d = top - abs(rng.normal()) - 0.1
    else:
        d = top + abs(rng.normal()) + 0.1
    return v, CvarSpec(k=k, d=d)


class TestSortPermutation:
    def test_example(self):
        assert sort_permutation(np.array([0.0, 4.0, 1.0, 3.0])).tolist() == [1, 3, 2, 0]

    def test_ties_keep_input_order(self):
        assert sort_permutation(np.array([1.0, 1.0, 0.0])).tolist() == [0, 1, 2]
        assert sort_permutation(np.array([2.0, 2.0, 2.0])).tolist() == [0, 1, 2]

    def test_result_is_nonincreasing(self):
        rng = rng_for(0)
        for _ in range(50):
            v = rng.normal(size=30)
            s = v[sort_permutation(v)]
            assert np.all(np.diff(s) <= 0)

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            sort_permutation(np.array([1.0, math.nan]))


class TestDecreaseStep:
    def test_single_step_trace(self):
        # v = (4,3,1,0), k=2, d=5: the first segment exhausts the budget.
        v = np.array([4.0, 3.0, 1.0, 0.0])
        perm = sort_permutation(v)
        state = ProjectionState.initial(v[perm], perm, k=2)
        assert state.top_sum == 7.0
        assert state.last_untied == 3.0
        assert state.next_unaltered == 1.0
        out, done = decrease_step(state, CvarSpec(2, 5.0))
        assert done
        assert out.steps == 1
        assert out.untied_drop == 1.0
        assert out.top_sum == 5.0
        assert (out.n_untied, out.n_tied) == (2, 0)
        assert out.working_vector().tolist() == [3.0, 2.0, 1.0, 0.0]

    def test_two_step_trace(self):
        # Same vector with d=0: a tie forms at the first event, then every
        # entry collapses to zero on the terminating segment.
        v = np.array([4.0, 3.0, 1.0, 0.0])
        perm = sort_permutation(v)
        state = ProjectionState.initial(v[perm], perm, k=2)
        spec = CvarSpec(2, 0.0)
        mid, done = decrease_step(state, spec)
        assert not done
        assert mid.untied_drop == 2.0
        assert mid.top_sum == 3.0
        assert (mid.n_untied, mid.n_tied) == (1, 2)
        assert mid.tied_value == 1.0
        assert mid.last_untied == 2.0
        assert mid.next_unaltered == 0.0
        end, done = decrease_step(mid, spec)
        assert done
        assert end.steps == 2
        assert end.top_sum == 0.0
        assert end.working_vector().tolist() == [0.0, 0.0, 0.0, 0.0]

    def test_full_block_terminates_in_one_step(self):
        # k = m: no tie events are reachable, the budget segment fires first.
        v = np.array([3.0, 1.0])
        perm = sort_permutation(v)
        state = ProjectionState.initial(v[perm], perm, k=2)
        out, done = decrease_step(state, CvarSpec(2, 2.0))
        assert done
        assert out.working_vector().tolist() == [2.0, 0.0]

    def test_matches_projection_loop(self):
        rng = rng_for(42)
        for _ in range(200):
            v, spec = random_instance(rng)
            z, info = project_sum_k_largest(v, spec, return_info=True)
            perm = sort_permutation(v)
            state = ProjectionState.initial(v[perm], perm, spec.k)
            done = False
            while not done:
                state, done = decrease_step(state, spec)
            assert state.steps == info.steps
            assert state.n_untied == info.n_untied
            assert state.n_tied == info.n_tied
            assert state.untied_drop == info.untied_drop
            recovered = np.empty(v.size)
            recovered[perm] = state.working_vector()
            assert np.array_equal(recovered, z)


class TestProjectSumKLargest:
    def test_feasible_input_returned_unchanged(self):
        v = np.array([1.0, 1.0])
        out = project_sum_k_largest(v, CvarSpec(1, 5.0))
        assert np.array_equal(out, v)
        out[0] = 99.0
        assert v[0] == 1.0  # a copy, not a view

    def test_hand_examples(self):
        assert project_sum_k_largest(
            np.array([2.0, 0.0]), CvarSpec(1, 1.0)
        ).tolist() == [1.0, 0.0]
        assert project_sum_k_largest(
            np.array([4.0, 3.0, 1.0, 0.0]), CvarSpec(2, 5.0)
        ).tolist() == [3.0, 2.0, 1.0, 0.0]
        assert project_sum_k_largest(
            np.array([4.0, 3.0, 1.0, 0.0]), CvarSpec(2, 0.0)
        ).tolist() == [0.0, 0.0, 0.0, 0.0]
        assert project_sum_k_largest(
            np.array([0.0, 4.0, 1.0, 3.0]), CvarSpec(2, 5.0)
        ).tolist() == [0.0, 3.0, 1.0, 2.0]
        assert project_sum_k_largest(
            np.array([3.0, 1.0]), CvarSpec(1, 2.0)
        ).tolist() == [2.0, 1.0]

    def test_info_on_feasible_input(self):
        _, info = project_sum_k_largest(
            np.array([1.0, 0.0]), CvarSpec(1, 2.0), return_info=True
        )
        assert info.steps == 0

    def test_step_budget(self):
        rng = rng_for(9)
        for _ in range(300):
            v, spec = random_instance(rng)
            _, info = project_sum_k_largest(v, spec, return_info=True)
            assert info.steps <= v.size + 1

    def test_errors(self):
        with pytest.raises(ValueError):
            project_sum_k_largest(np.array([1.0, math.nan]), CvarSpec(1, 0.0))
        with pytest.raises(ValueError):
            project_sum_k_largest(np.array([1.0, math.inf]), CvarSpec(1, 0.0))
        with pytest.raises(ValueError):
            project_sum_k_largest(np.array([1.0]), CvarSpec(0, 0.0))
        with pytest.raises(ValueError):
            project_sum_k_largest(np.array([1.0]), CvarSpec(2, 0.0))
        with pytest.raises(ValueError):
            project_sum_k_largest(np.array([1.0]), CvarSpec(1, -math.inf))
        with pytest.raises(ValueError):
            project_sum_k_largest(np.array([1.0]), CvarSpec(1, math.nan))

    def test_vacuous_bound(self):
        v = np.array([5.0, -2.0])
        assert np.array_equal(
            project_sum_k_largest(v, CvarSpec(1, math.inf)), v
        )


class TestProjectCvar:
    def test_equivalent_to_sum_form(self):
        rng = rng_for(21)
        for _ in range(50):
            m = int(rng.integers(2, 80))
            v = rng.normal(size=m)
            beta = float(rng.choice([0.5, 0.9, 0.95]))
            kappa = float(rng.normal() * 0.3)
            k = tail_count(beta, m)
            direct = project_sum_k_largest(v, CvarSpec(k, kappa * k))
            assert np.array_equal(project_cvar(v, beta, kappa), direct)

    def test_hand_example(self):
        assert project_cvar(np.array([2.0, 0.0]), 0.5, 1.0).tolist() == [1.0, 0.0]

    def test_bad_beta(self):
        with pytest.raises(BadBeta):
            project_cvar(np.array([1.0]), 1.0, 0.0)


# Property tests.  Instances are kept small so hypothesis can explore; the
# acceptance suite re-runs these families at 1000 trials each.

finite_vectors = st.lists(
    st.floats(-100, 100, allow_nan=False, allow_infinity=False),
    min_size=1,
    max_size=40,
).map(lambda xs: np.asarray(xs))


@st.composite
def instances(draw):
    v = draw(finite_vectors)
    k = draw(st.integers(1, v.size))
    eta = draw(st.sampled_from([0.1, 0.5, 0.9, 1.5]))
    top = sum_k_largest(v, k)
    d = eta * top - (1.0 - eta) * 0.5
    return v, CvarSpec(k=k, d=float(d))


@given(instances())
@settings(max_examples=300, deadline=None)
def test_output_feasible_and_idempotent(inst):
    v, spec = inst
    z = project_sum_k_largest(v, spec)
    scale = max(1.0, abs(spec.d))
    assert sum_k_largest(z, spec.k) <= spec.d + 1e-9 * scale
    assert np.array_equal(project_sum_k_largest(z, spec), z)


@given(instances())
@settings(max_examples=300, deadline=None)
def test_never_increases_entries(inst):
    v, spec = inst
    z = project_sum_k_largest(v, spec)
    assert np.all(v - z >= -1e-12 * max(1.0, float(np.abs(v).max())))


@given(instances(), st.randoms(use_true_random=False))
@settings(max_examples=200, deadline=None)
def test_permutation_equivariance_bitwise(inst, pyrandom):
    v, spec = inst
    order = list(range(v.size))
    pyrandom.shuffle(order)
    perm = np.asarray(order)
    z = project_sum_k_largest(v, spec)
    z_perm = project_sum_k_largest(v[perm], spec)
    assert np.array_equal(z_perm, z[perm])


@given(instances(), st.floats(-5, 5, allow_nan=False))
@settings(max_examples=200, deadline=None)
def test_translation_identity(inst, c):
    v, spec = inst
    shifted = CvarSpec(spec.k, spec.d + c * spec.k)
    z = project_sum_k_largest(v, spec)
    z_shifted = project_sum_k_largest(v + c, shifted)
    assert np.allclose(z_shifted, z + c, atol=1e-9)


@given(instances())
@settings(max_examples=200, deadline=None)
def test_nonexpansive(inst):
    v, spec = inst
    rng = rng_for(17)
    w = v + rng.normal(size=v.size)
    pv = project_sum_k_largest(v, spec)
    pw = project_sum_k_largest(w, spec)
    assert np.linalg.norm(pv - pw) <= np.linalg.norm(v - w) + 1e-9


@given(instances())
@settings(max_examples=200, deadline=None)
def test_variational_inequality(inst):
    v, spec = inst
    z = project_sum_k_largest(v, spec)
    delta = v - z
    dist = float(np.linalg.norm(delta))
    rng = rng_for(23)
    for _ in range(5):
        w = rng.normal(size=v.size) * 2.0
        gap = sum_k_largest(w, spec.k) - spec.d
        if gap > 0:
            w -= gap / spec.k
        step = float(np.linalg.norm(w - z))
        if step <= 1e-9 * max(1.0, float(np.linalg.norm(z))):
            continue  # probe coincides with z, margin is pure roundoff
        denom = dist * step
        if denom > 0:
            assert float(delta @ (w - z)) <= 1e-8 * denom
