import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_embed, dense_shift, zero_ensemble
from reservoir_lab import bounds
from reservoir_lab.ensemble import sample_ensemble, uniform
from reservoir_lab.reservoir import (
    InputSequence,
    ShiftReservoir,
    StateVector,
    dual_trajectory_gap,
    embed_apply,
    run_trajectory,
    shift_apply,
    state_update,
    sup_operator_norm,
    zero_state,
)


# ---------------------------------------------------------------------------
# shift / embed


def test_shift_example_m2_d1():
    np.testing.assert_array_equal(shift_apply(np.array([3.0, 5.0]), 2, 1), [5.0, 0.0])


def test_shift_zero_is_zero():
    np.testing.assert_array_equal(shift_apply(np.zeros(12), 4, 3), np.zeros(12))


def test_shift_matches_dense_oracle_m3_d2():
    r = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    expected = dense_shift(3, 2) @ r
    np.testing.assert_array_equal(shift_apply(r, 3, 2), expected)
    np.testing.assert_array_equal(shift_apply(r, 3, 2), [3, 4, 5, 6, 0, 0])


def test_shift_length_mismatch():
    with pytest.raises(ValueError):
        shift_apply(np.zeros(5), 2, 2)


def test_embed_example_m3():
    np.testing.assert_array_equal(embed_apply(np.array([7.0]), 3), [0.0, 0.0, 7.0])


def test_embed_m1_identity():
    u = np.array([0.3, -0.7])
    np.testing.assert_array_equal(embed_apply(u, 1), u)


def test_embed_matches_dense_oracle_m2_d2():
    u = np.array([1.0, -1.0])
    np.testing.assert_array_equal(embed_apply(u, 2), dense_embed(2, 2) @ u)


@settings(deadline=None, max_examples=50)
@given(st.integers(1, 5), st.integers(1, 3), st.integers(0, 10**6))
def test_shift_nilpotent_and_linear(m, d, seed):
    rng = np.random.default_rng(seed)
    r = rng.normal(size=m * d)
    out = r.copy()
    for _ in range(m):
        out = shift_apply(out, m, d)
    np.testing.assert_array_equal(out, np.zeros(m * d))
    # linearity against the dense oracle
    np.testing.assert_allclose(shift_apply(r, m, d), dense_shift(m, d) @ r, atol=0)


# ---------------------------------------------------------------------------
# state update


def test_reservoir_scale_invariant(dist):
    res = ShiftReservoir(sample_ensemble(dist, 50, 2, 1, seed=0))
    assert abs(res.c_over_n * res.n * dist.second_moment / 2.0 - 1.0) < 1e-12


def test_update_zero_weights_gives_zero_state():
    res = ShiftReservoir(zero_ensemble(10, 2, 1))
    s = state_update(res, StateVector(np.full(10, 0.7), 0), np.array([0.9]))
    np.testing.assert_array_equal(s.s, np.zeros(10))
    assert s.t == 1


def test_update_m1_ignores_previous_state(dist):
    res = ShiftReservoir(sample_ensemble(dist, 40, 1, 1, seed=3))
    u = np.array([0.4])
    s_a = state_update(res, StateVector(np.zeros(40), 0), u)
    s_b = state_update(res, StateVector(np.linspace(0, 1, 40), 0), u)
    np.testing.assert_array_equal(s_a.s, s_b.s)


def test_update_matches_dense_oracle_small(dist):
    ens = sample_ensemble(dist, 2, 2, 1, seed=11)
    res = ShiftReservoir(ens)
    s_prev = np.array([0.2, 1.4])
    u = np.array([-0.6])
    got = state_update(res, StateVector(s_prev, 5), u)
    P, Q = dense_shift(2, 1), dense_embed(2, 1)
    want = np.maximum(
        ens.W @ (res.c_over_n * (P @ (ens.W.T @ s_prev)) + Q @ u) + ens.b, 0.0
    )
    np.testing.assert_allclose(got.s, want, atol=1e-12)
    assert got.t == 6


def test_dense_oracle_equivalence_batch(dist):
    rng = np.random.default_rng(99)
    for trial in range(25):
        n = int(rng.integers(2, 65))
        m = int(rng.integers(1, 5))
        d = int(rng.integers(1, 4))
        ens = sample_ensemble(dist, n, m, d, seed=trial)
        res = ShiftReservoir(ens)
        s_prev = rng.uniform(0.0, 1.0, n)
        u = rng.uniform(-1.0, 1.0, d)
        got = state_update(res, StateVector(s_prev, 0), u).s
        P, Q = dense_shift(m, d), dense_embed(m, d)
        want = np.maximum(
            ens.W @ (res.c_over_n * (P @ (ens.W.T @ s_prev)) + Q @ u) + ens.b, 0.0
        )
        assert np.abs(got - want).max() < 1e-12


def test_update_rejects_bad_inputs(dist):
    res = ShiftReservoir(sample_ensemble(dist, 10, 2, 1, seed=0))
    with pytest.raises(ValueError):
        state_update(res, StateVector(np.zeros(9), 0), np.array([0.1]))
    with pytest.raises(ValueError):
        state_update(res, StateVector(np.zeros(10), 0), np.array([np.nan]))
    with pytest.raises(ValueError):
        state_update(res, StateVector(np.full(10, np.inf), 0), np.array([0.1]))


def test_states_nonnegative(dist):
    res = ShiftReservoir(sample_ensemble(dist, 30, 3, 1, seed=8))
    u = InputSequence(np.random.default_rng(1).uniform(-1, 1, (40, 1)))
    for s in run_trajectory(res, u):
        assert s.s.min() >= 0.0


# ---------------------------------------------------------------------------
# trajectories


def test_trajectory_empty(dist):
    res = ShiftReservoir(sample_ensemble(dist, 10, 2, 1, seed=0))
    assert run_trajectory(res, InputSequence(np.zeros((0, 1)))) == []


def test_trajectory_zero_weights():
    res = ShiftReservoir(zero_ensemble(6, 2, 1))
    states = run_trajectory(res, InputSequence(np.zeros((5, 1))))
    for s in states:
        np.testing.assert_array_equal(s.s, np.zeros(6))


def test_trajectory_equals_manual_fold(dist):
    res = ShiftReservoir(sample_ensemble(dist, 25, 2, 2, seed=21))
    u = InputSequence(np.random.default_rng(2).uniform(-1, 1, (15, 2)))
    states = run_trajectory(res, u)
    s = zero_state(res, 0)
    for k, row in enumerate(u.u):
        s = state_update(res, s, row)
        np.testing.assert_array_equal(states[k].s, s.s)
        assert states[k].t == s.t == k + 1


def test_input_sequence_box_validation():
    with pytest.raises(ValueError):
        InputSequence(np.array([[1.5]]))
    with pytest.raises(ValueError):
        InputSequence(np.array([[np.nan]]))


# ---------------------------------------------------------------------------
# dual-trajectory forgetting diagnostic


def test_gap_identical_starts(dist):
    res = ShiftReservoir(sample_ensemble(dist, 20, 2, 1, seed=5))
    u = InputSequence(np.random.default_rng(0).uniform(-1, 1, (10, 1)))
    s0 = StateVector(np.random.default_rng(1).uniform(0, 1, 20), 0)
    gaps = dual_trajectory_gap(res, u, s0, s0)
    np.testing.assert_array_equal(gaps, np.zeros(10))


def test_gap_zero_weights_forgets_immediately():
    res = ShiftReservoir(zero_ensemble(12, 2, 1))
    u = InputSequence(np.random.default_rng(3).uniform(-1, 1, (6, 1)))
    gaps = dual_trajectory_gap(
        res,
        u,
        StateVector(np.random.default_rng(4).uniform(0, 1, 12), 0),
        StateVector(np.random.default_rng(5).uniform(0, 1, 12), 0),
    )
    np.testing.assert_array_equal(gaps, np.zeros(6))


@pytest.mark.slow
def test_gap_bounded_by_weak_esp_bound(dist):
    # m=3, d=1, n=2000: gap at t = 3m below 2 |W|_inf E2 m with the formula E2
    n, m = 2000, 3
    res = ShiftReservoir(sample_ensemble(dist, n, m, 1, seed=13))
    rng = np.random.default_rng(7)
    u = InputSequence(rng.uniform(-1, 1, (3 * m + 5, 1)))
    s0 = StateVector(rng.uniform(0, 1, n), 0)
    s0_alt = StateVector(rng.uniform(0, 1, n), 0)
    gaps = dual_trajectory_gap(res, u, s0, s0_alt)
    e2 = bounds.e2_bound(m, 1, n, 0.05).value
    limit = 2.0 * sup_operator_norm(res.ensemble.W) * e2 * m
    assert gaps[3 * m - 1] <= limit
    # and the transient is actually forgotten to far below the bound
    assert gaps[3 * m - 1] < 0.1 * limit
