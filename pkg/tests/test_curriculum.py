import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from curriculab.curriculum import (
    EpisodeRecord,
    SamplingDistribution,
    Scheduler,
    SchedulerConfig,
    SchedulerKind,
    SCParams,
    init_scheduler,
    inverse_cdf,
    sc_vmax,
    softmax,
)
from curriculab.task_space import Dimension, build_space, scaled600_space, velocity8_space

KINDS = list(SchedulerKind)


def rec(i, r, gae=0.0):
    return EpisodeRecord(task_index=i, episodic_reward=r, length=1, fall_step=1, tracking_error=0.0,
                         value_error_score=gae)


def cat_space(n):
    return build_space([Dimension.categorical("t", [str(i) for i in range(n)])])


# --- init ----------------------------------------------------------------

def test_initial_distribution_uniform():
    s = init_scheduler(velocity8_space())
    assert np.array_equal(s.probs, np.full(8, 0.125))
    s600 = init_scheduler(scaled600_space())
    assert np.max(np.abs(s600.probs - 1 / 600)) < 1e-12


@pytest.mark.parametrize("kind", KINDS)
def test_initial_state_any_kind(kind):
    s = Scheduler(velocity8_space(), SchedulerConfig(kind=kind))
    assert s.stage == 0
    assert np.all(s.lp == 0)
    assert abs(s.probs.sum() - 1) < 1e-12


def test_sc_without_continuous_dimension_rejected():
    with pytest.raises(ValueError):
        Scheduler(cat_space(3), SchedulerConfig(kind="SC"))


@pytest.mark.parametrize("bad", [dict(beta=0), dict(beta=-1), dict(floor_mix=1.0), dict(stage_len=0),
                                 dict(ema_alpha=0), dict(stale_decay=1.5), dict(kind="NOPE")])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        SchedulerConfig(**bad)


def test_distribution_is_read_only():
    d = SamplingDistribution(np.array([0.5, 0.5]), 0)
    with pytest.raises(ValueError):
        d.probs[0] = 1.0


def test_episode_record_validation():
    with pytest.raises(ValueError):
        EpisodeRecord(0, 1.0, length=10, fall_step=11, tracking_error=0.0)
    with pytest.raises(ValueError):
        EpisodeRecord(0, 1.0, length=10, fall_step=10, tracking_error=1.5)


# --- record_episode --------------------------------------------------------

def test_ema_alpha_one_keeps_last():
    s = Scheduler(cat_space(2), SchedulerConfig(ema_alpha=1.0))
    s.record_episode(rec(0, 1.0))
    s.record_episode(rec(0, 0.0))
    assert s.reward_current[0] == 0.0


def test_ema_alpha_half():
    s = Scheduler(cat_space(2), SchedulerConfig(ema_alpha=0.5))
    s.record_episode(rec(0, 1.0))
    s.record_episode(rec(0, 0.0))
    assert s.reward_current[0] == 0.5
    assert s.episode_count_stage[0] == 2


def test_empty_stage_carries_estimate():
    s = Scheduler(cat_space(2), SchedulerConfig(stale_decay=0.5))
    s.record_episode(rec(0, 3.0))
    s.advance_stage()
    assert s.lp[0] == 3.0
    s.advance_stage()
    assert s.reward_current[0] == 3.0
    assert s.reward_prev_stage[0] == 3.0
    assert s.lp[0] == 1.5
    assert s.staleness[0] == 1
    assert np.all(s.episode_count_stage == 0)


def test_record_rejects_bad_index():
    s = Scheduler(cat_space(2))
    with pytest.raises(IndexError):
        s.record_episode(rec(2, 0.0))


def test_plr_score_is_ema_of_gae():
    s = Scheduler(cat_space(1), SchedulerConfig(ema_alpha=0.25))
    for g in (4.0, 0.0, 8.0):
        s.record_episode(rec(0, 0.0, gae=g))
    assert s.plr_score[0] == pytest.approx((4.0 * 0.75) * 0.75 + 0.25 * 8.0)


# --- advance_stage ---------------------------------------------------------

def test_two_task_hand_evaluation():
    s = Scheduler(cat_space(2), SchedulerConfig(beta=0.1, floor_mix=0.0, normalize_lp=False))
    s.record_episode(rec(0, 0.2))
    s.record_episode(rec(1, 0.1))
    p = s.advance_stage().probs
    e = np.exp([2.0, 1.0])
    assert np.allclose(p, e / e.sum(), atol=1e-12)
    assert np.allclose(p, [0.7311, 0.2689], atol=1e-4)


def test_equal_scores_give_uniform():
    for rho in (0.0, 0.3):
        s = Scheduler(cat_space(5), SchedulerConfig(floor_mix=rho))
        for i in range(5):
            s.record_episode(rec(i, 2.0))
        assert np.allclose(s.advance_stage().probs, 0.2, atol=1e-15)


def test_improving_task_gets_largest_probability():
    s = Scheduler(cat_space(6))
    for i in range(6):
        s.record_episode(rec(i, 0.0))
    s.advance_stage()
    for i in range(6):
        s.record_episode(rec(i, 1.0 if i == 4 else 0.0))
    p = s.advance_stage().probs
    assert int(np.argmax(p)) == 4
    assert p[4] > p[np.arange(6) != 4].max()


def test_score_selection_by_kind():
    rewards0 = np.array([1.0, 2.0, 3.0])
    rewards1 = np.array([2.0, 1.0, 3.0])
    got = {}
    for kind in KINDS:
        s = Scheduler(build_space([Dimension.continuous("v", 0, 3, 3)]),
                      SchedulerConfig(kind=kind, normalize_lp=False))
        for r in (rewards0, rewards1):
            for i in range(3):
                s.record_episode(rec(i, r[i], gae=r[i] * 10))
            s.advance_stage()
        got[kind] = s.scores.copy()
    assert np.array_equal(got[SchedulerKind.LP_ACRL], [1.0, -1.0, 0.0])
    assert np.array_equal(got[SchedulerKind.ALP], [1.0, 1.0, 0.0])
    assert np.array_equal(got[SchedulerKind.LRPC], -rewards1)
    assert np.allclose(got[SchedulerKind.PLR], 10 * (rewards0 + 0.2 * (rewards1 - rewards0)))
    assert np.array_equal(got[SchedulerKind.UNIFORM], np.zeros(3))


def test_normalization_divides_by_max_abs():
    s = Scheduler(cat_space(3), SchedulerConfig(normalize_lp=True))
    for i, r in enumerate((4.0, -2.0, 1.0)):
        s.record_episode(rec(i, r))
    s.advance_stage()
    assert np.array_equal(s.scores, [1.0, -0.5, 0.25])


def test_floor_mix_formula():
    cfg = SchedulerConfig(beta=0.5, floor_mix=0.2, normalize_lp=False)
    s = Scheduler(cat_space(3), cfg)
    for i, r in enumerate((0.3, 0.0, -0.1)):
        s.record_episode(rec(i, r))
    p = s.advance_stage().probs
    sm = np.exp(np.array([0.3, 0.0, -0.1]) / 0.5)
    sm /= sm.sum()
    assert np.allclose(p, 0.8 * sm + 0.2 / 3, atol=1e-15)


def test_uniform_is_exact_every_stage():
    s = Scheduler(cat_space(7), SchedulerConfig(kind="UNIFORM"))
    rng = np.random.default_rng(0)
    for _ in range(5):
        for _ in range(20):
            s.record_episode(rec(int(rng.integers(7)), float(rng.normal())))
        assert np.all(s.advance_stage().probs == 1 / 7)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(KINDS), st.integers(1, 12), st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=80),
       st.floats(1e-3, 1e3), st.floats(0, 0.99))
def test_distribution_validity(kind, n, rewards, beta, rho):
    s = Scheduler(build_space([Dimension.continuous("v", 0, 4, n)]),
                  SchedulerConfig(kind=kind, beta=beta, floor_mix=rho, stage_len=3))
    for k, r in enumerate(rewards):
        s.record_episode(rec(k % n, r, gae=abs(r)))
        if k % 7 == 6:
            d = s.advance_stage()
            assert np.all(d.probs >= 0)
            assert abs(d.probs.sum() - 1) < 1e-9
            sampled = s.staleness == 0
            assert np.array_equal(s.alp[sampled], np.abs(s.lp[sampled]))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-20, 20), min_size=1, max_size=30), st.sampled_from([1e-3, 1e-2, 0.1, 1, 10, 100, 1e3]))
def test_argmax_invariance(ints, beta):
    lp = np.array(ints) / 10
    s = Scheduler(cat_space(len(lp)), SchedulerConfig(beta=beta, floor_mix=0.0))
    for i, v in enumerate(lp):
        s.record_episode(rec(i, float(v)))
    p = s.advance_stage().probs
    assert int(np.argmax(p)) == int(np.argmax(lp))


def test_oscillating_task_alp_over_lp():
    def steady_prob(kind):
        s = Scheduler(cat_space(2), SchedulerConfig(kind=kind))
        hist = []
        for j in range(60):
            s.record_episode(rec(0, 1.0 if j % 2 else -1.0))
            s.record_episode(rec(1, 0.5))
            hist.append(s.advance_stage().probs[0])
        return np.mean(hist[-20:])

    assert steady_prob("ALP") > steady_prob("LP_ACRL")


# --- softmax -------------------------------------------------------------

def test_softmax_examples():
    assert np.array_equal(softmax(np.zeros(4), 0.3), np.full(4, 0.25))
    assert np.allclose(softmax([1.0, 0.0], 1.0), [math.e / (math.e + 1), 1 / (math.e + 1)], atol=1e-15)


def test_softmax_rejects_nan_and_bad_beta():
    with pytest.raises(ValueError):
        softmax([0.0, float("nan")], 1.0)
    with pytest.raises(ValueError):
        softmax([0.0, float("inf")], 1.0)
    with pytest.raises(ValueError):
        softmax([0.0], 0.0)


def test_softmax_large_scores_do_not_overflow():
    p = softmax([1e308, 1e308 - 1e292, -1e308], 1e-3)
    assert np.isfinite(p).all() and abs(p.sum() - 1) < 1e-12


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50), st.floats(1e-3, 1e3), st.floats(-1e3, 1e3))
def test_softmax_normalized_and_shift_invariant(scores, beta, c):
    p = softmax(scores, beta)
    assert abs(p.sum() - 1) < 1e-9
    q = softmax(np.asarray(scores) + c, beta)
    assert np.max(np.abs(p - q)) < 1e-12 or np.allclose(p, q, rtol=0, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=50))
def test_softmax_high_temperature(scores):
    p = softmax(scores, 1e6)
    assert np.max(np.abs(p - 1 / len(scores))) < 1e-3


# --- SC schedule -----------------------------------------------------------

def test_sc_vmax_values():
    sc = SCParams()
    assert sc_vmax(1000, sc) == 2.5
    assert abs(sc_vmax(0, sc) - (1 + 3 / (1 + math.exp(2)))) < 1e-9
    assert sc_vmax(0, sc) == pytest.approx(1.3577, abs=1e-4)
    assert sc_vmax(1e9, sc) == 4.0
    assert sc_vmax(-1e9, sc) == 1.0


def test_sc_monotone_and_active_bins():
    s = Scheduler(velocity8_space(), SchedulerConfig(kind="SC"))
    ks = np.arange(0, 5001, 5)
    v = [sc_vmax(k, SCParams()) for k in ks]
    assert all(b >= a for a, b in zip(v, v[1:]))
    counts = [int(s.active_mask(k).sum()) for k in ks]
    assert all(b >= a for a, b in zip(counts, counts[1:]))
    assert counts[0] == 3 and counts[-1] == 8


def test_sc_distribution_uniform_over_active_cells():
    space = build_space([Dimension.continuous("v", 0.0, 4.0, 8), Dimension.categorical("t", ["a", "b"])])
    s = Scheduler(space, SchedulerConfig(kind="SC"))
    d = s.sc_distribution(1000)  # v_max = 2.5 admits bins starting at 0 .. 2.0
    expected = np.repeat((np.arange(8) * 0.5 < 2.5).astype(float), 2)
    assert np.allclose(d.probs, expected / expected.sum())
    assert np.array_equal(s.probs, s.sc_probs(0))


def test_sc_advance_uses_iteration():
    s = Scheduler(velocity8_space(), SchedulerConfig(kind="SC", stage_len=100))
    p = s.advance_stage(iteration=1000).probs
    assert np.count_nonzero(p) == 5
    s2 = Scheduler(velocity8_space(), SchedulerConfig(kind="SC", stage_len=1000))
    assert np.array_equal(s2.advance_stage().probs, p)


def test_sc_distribution_needs_continuous_dimension():
    s = Scheduler(cat_space(3))
    with pytest.raises(ValueError):
        s.sc_distribution(0)


# --- sampling ------------------------------------------------------------

def test_degenerate_distribution_always_zero():
    s = Scheduler(cat_space(8), SchedulerConfig(beta=1e-3, floor_mix=0.0, normalize_lp=False))
    s.record_episode(rec(0, 100.0))
    s.advance_stage()
    assert s.probs[0] == 1.0
    rng = np.random.default_rng(0)
    assert all(s.sample_index(rng) == 0 for _ in range(1000))
    assert s.sample_task(rng).index == 0


def test_uniform_sampling_chi_square():
    s = Scheduler(cat_space(8))
    rng = np.random.default_rng(3)
    counts = np.bincount([s.sample_index(rng) for _ in range(100_000)], minlength=8)
    assert stats.chisquare(counts).pvalue > 1e-6


def test_floor_guarantee():
    n = 10
    s = Scheduler(cat_space(n), SchedulerConfig(beta=1e-3, floor_mix=0.05, normalize_lp=False))
    s.record_episode(rec(0, 1.0))
    s.advance_stage()
    rng = np.random.default_rng(4)
    draws = 100_000
    counts = np.bincount([s.sample_index(rng) for _ in range(draws)], minlength=n)
    p = 0.05 / n
    sigma = math.sqrt(p * (1 - p) / draws)
    assert np.all(counts / draws >= p - 3 * sigma)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=20).filter(lambda x: sum(x) > 0), st.floats(0, 1))
def test_inverse_cdf_against_scan(weights, u):
    p = np.asarray(weights) / sum(weights)
    i = inverse_cdf(p, u)
    assert p[i] > 0
    cdf = np.cumsum(p)
    target = u * cdf[-1]
    # brute force: first index whose cumulative mass exceeds target, skipping zero-mass cells
    expected = next((k for k in range(len(p)) if cdf[k] > target and p[k] > 0), None)
    if expected is None:
        expected = max(k for k in range(len(p)) if p[k] > 0)
    assert i == expected


def test_snapshot_rows():
    s = Scheduler(cat_space(3))
    s.record_episode(rec(1, 2.0))
    s.advance_stage()
    rows = list(s.snapshot())
    assert [r["task_index"] for r in rows] == [0, 1, 2]
    assert all(r["stage"] == 1 for r in rows)
    assert rows[1]["reward_est"] == 2.0 and rows[1]["lp"] == 2.0
    assert abs(sum(r["prob"] for r in rows) - 1) < 1e-12
