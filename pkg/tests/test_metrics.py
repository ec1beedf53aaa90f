import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curriculab.environments import Level, PointMassConfig, PointMassEnv
from curriculab.learner import init_policy
from curriculab.metrics import (
    EpisodeMetrics,
    aggregate_seeds,
    classify_success,
    epte_sp,
    evaluate_policy,
    tracking_error,
)
from curriculab.presets import pm_flat8
from curriculab.seeding import Streams
from curriculab.task_space import velocity8_space


# --- tracking error ------------------------------------------------------

def test_tracking_error_example():
    assert tracking_error([1.0, 1.0], [0.9, 1.1], 2) == pytest.approx(0.1)


def test_tracking_error_small_command_uses_reference():
    # |0 - 0.05| / max(0, 0.1) = 0.5
    assert tracking_error([0.0], [0.05], 1) == pytest.approx(0.5)


def test_tracking_error_clipped_to_one():
    assert tracking_error([1.0, 1.0], [5.0, -3.0], 2) == 1.0


def test_tracking_error_only_counts_steps_before_fall():
    assert tracking_error([1.0, 1.0, 1.0], [1.0, 0.0, 0.0], 1) == 0.0


def test_tracking_error_no_steps():
    assert tracking_error([], [], 0) == 0.0


def test_tracking_error_validation():
    with pytest.raises(ValueError):
        tracking_error([1.0], [1.0], -1)
    with pytest.raises(ValueError):
        tracking_error([1.0], [1.0], 2)


# --- EPTE-SP --------------------------------------------------------------

@pytest.mark.parametrize("eps,k_f,K,want", [
    (0.1, 1000, 1000, 0.1),
    (0.1, 500, 1000, 0.55),
    (0.5, 0, 1000, 1.0),
    (0.0, 900, 1000, 0.1),
])
def test_epte_sp_examples(eps, k_f, K, want):
    assert epte_sp(eps, k_f, K) == pytest.approx(want)


def accumulate_epte(eps, k_f, K):
    """Per-step accumulation: eps while upright, 1 after the fall."""
    return sum(eps if t < k_f else 1.0 for t in range(K)) / K


def test_epte_sp_against_accumulator():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        K = int(rng.integers(1, 60))
        k_f = int(rng.integers(0, K + 1))
        eps = float(rng.random())
        assert epte_sp(eps, k_f, K) == pytest.approx(accumulate_epte(eps, k_f, K), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.integers(1, 2000), st.data())
def test_epte_sp_bounds_and_monotonicity(eps, K, data):
    k_f = data.draw(st.integers(0, K))
    v = epte_sp(eps, k_f, K)
    assert eps - 1e-12 <= v <= 1.0 + 1e-12
    if k_f < K:
        # surviving longer never hurts
        assert epte_sp(eps, k_f + 1, K) <= v + 1e-12
    eps2 = data.draw(st.floats(eps, 1))
    assert epte_sp(eps2, k_f, K) >= v - 1e-12


@pytest.mark.parametrize("args", [(0.1, 5, 0), (0.1, 11, 10), (0.1, -1, 10), (1.5, 5, 10), (-0.1, 5, 10)])
def test_epte_sp_validation(args):
    with pytest.raises(ValueError):
        epte_sp(*args)


# --- success ---------------------------------------------------------------

def m(eps, k_f, K=1000):
    return EpisodeMetrics(K, k_f, eps, epte_sp(eps, k_f, K))


@pytest.mark.parametrize("metrics,want", [
    (m(0.29, 1000), True),
    (m(0.30, 1000), False),
    (m(0.1, 900), True),    # alive exactly 90%, epte 0.19
    (m(0.1, 899), False),
    (m(0.25, 950), True),   # 0.25 * 0.95 + 0.05 = 0.2875
    (m(0.27, 950), False),  # 0.3065
])
def test_classify_success_boundaries(metrics, want):
    assert classify_success(metrics) is want


def test_classify_success_every_channel():
    assert classify_success([m(0.1, 1000), m(0.2, 1000)])
    assert not classify_success([m(0.1, 1000), m(0.31, 1000)])


# --- evaluation ------------------------------------------------------------

def test_always_falling_policy_scores_zero():
    bundle = pm_flat8()
    cfg = PointMassConfig(dt=0.05, horizon=200, levels={"flat": Level(a_max=100.0, drag=0.0)}, v_fail=0.01)
    env = PointMassEnv(cfg)
    pol = init_policy(3, 1, "gaussian", np.random.default_rng(0), hidden=4)
    pol.params["pi.W2"][:] = 0.0
    pol.params["pi.b2"][:] = 100.0  # one step to 5 m/s, far past the bound
    rep = evaluate_policy(pol, bundle.space, env, 3, Streams(0))
    assert rep.success_rate == 0.0
    assert rep.mastered == frozenset()
    assert rep.unmastered == frozenset(range(8))


def p_controller(gain=8.0, hidden=4):
    """A tanh network that outputs approximately a = gain * (v* - v) + drag * v*."""
    pol = init_policy(3, 1, "gaussian", np.random.default_rng(0), hidden=hidden)
    p = pol.params
    p["pi.W1"][:] = 0.0
    p["pi.b1"][:] = 0.0
    p["pi.W2"][:] = 0.0
    small = 0.01  # tanh is linear to ~1e-5 relative here
    # unit 0 carries v, unit 1 carries v*
    p["pi.W1"][0, 0] = small
    p["pi.W1"][1, 1] = small
    p["pi.W2"][0, 0] = -gain / small
    p["pi.W2"][1, 0] = (gain + 0.5) / small
    return pol


def test_oracle_controller_masters_easy_bins():
    bundle = pm_flat8()
    no_hazard = PointMassConfig(dt=0.05, horizon=200, levels={"flat": Level(a_max=1.75, drag=0.5)},
                                v_fail=6.0)
    rep = evaluate_policy(p_controller(), bundle.space, PointMassEnv(no_hazard), 3, Streams(0))
    # a_max 1.75 with drag 0.5 sustains |v| up to 3.5
    assert rep.success[:7].all()
    assert rep.mean_epte_sp[0] < 0.3


def test_evaluation_is_deterministic_and_partitions_tasks():
    bundle = pm_flat8()
    pol = p_controller()
    a = evaluate_policy(pol, bundle.space, bundle.env, 3, Streams(4))
    b = evaluate_policy(pol, bundle.space, bundle.env, 3, Streams(4), batch_size=5)
    assert np.array_equal(a.success, b.success)
    assert np.array_equal(a.mean_reward, b.mean_reward)
    assert a.mastered | a.unmastered == frozenset(range(8))
    assert a.mastered & a.unmastered == frozenset()
    assert a.size == velocity8_space().size


def test_mean_reward_on_subset():
    bundle = pm_flat8()
    rep = evaluate_policy(p_controller(), bundle.space, bundle.env, 1, Streams(0))
    assert rep.mean_reward_on([0, 2]) == pytest.approx((rep.mean_reward[0] + rep.mean_reward[2]) / 2)
    assert np.isnan(rep.mean_reward_on([]))


# --- aggregation -------------------------------------------------------------

def test_aggregate_seeds_example():
    mean, lo, hi = aggregate_seeds([[0.0, 1.0], [1.0, 3.0], [2.0, 2.0]])
    np.testing.assert_allclose(mean, [1.0, 2.0])
    np.testing.assert_allclose(lo, [0.0, 1.0])
    np.testing.assert_allclose(hi, [2.0, 3.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 20), st.integers(0, 2**31))
def test_aggregate_seeds_brute_force(n_seeds, length, seed):
    rng = np.random.default_rng(seed)
    series = rng.normal(size=(n_seeds, length)).tolist()
    mean, lo, hi = aggregate_seeds(series)
    for t in range(length):
        col = [s[t] for s in series]
        assert mean[t] == pytest.approx(sum(col) / len(col))
        assert lo[t] == min(col) and hi[t] == max(col)


def test_aggregate_seeds_rejects_ragged():
    with pytest.raises(ValueError):
        aggregate_seeds([[1.0, 2.0], [1.0]])
    with pytest.raises(ValueError):
        aggregate_seeds([])
