import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import binomtest, chisquare, norm

from ipdsim.observer import (StaircaseConfig, ThresholdEstimate, TrackAborted, TrackState,
                             child_seed, draw_target, run_condition, run_staircase,
                             run_track, run_tracks, run_trial, staircase_update,
                             track_seeds, write_trial_log)

CFG = StaircaseConfig()


def feed(responses, config=CFG):
    state = TrackState.start(config)
    for r in responses:
        state = staircase_update(state, r, config)
        if isinstance(state, ThresholdEstimate):
            break
    return state


class TestConfig:
    def test_defaults(self):
        assert CFG.start_level_db == 65 and CFG.initial_step_db == 4
        assert CFG.step_schedule == ((2, 2.0), (4, 1.0))
        assert (CFG.total_reversals, CFG.reversals_averaged) == (10, 6)
        assert (CFG.down_count, CFG.up_count, CFG.max_trials) == (2, 1, 400)

    def test_step_for(self):
        assert [CFG.step_for(k) for k in range(7)] == [4, 4, 2, 2, 1, 1, 1]

    @pytest.mark.parametrize("kw", [
        dict(reversals_averaged=11), dict(reversals_averaged=0),
        dict(step_schedule=((2, 4.0),)), dict(initial_step_db=-1.0),
        dict(step_schedule=((4, 2.0), (2, 1.0))), dict(down_count=0),
        dict(max_trials=0)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            StaircaseConfig(**kw)


class TestStaircaseUpdate:
    def test_two_down(self):
        s = feed([True])
        assert s.current_level_db == 65
        assert feed([True, True]).current_level_db == 61

    def test_one_up(self):
        assert feed([False]).current_level_db == 69

    def test_input_not_mutated(self):
        s0 = TrackState.start(CFG)
        staircase_update(s0, False, CFG)
        assert s0.current_level_db == 65 and s0.trial_log == []

    def test_scripted_run(self):
        c, i = True, False
        script = [c, c, c, c, i, c, c, i, c, c, i, c, c, i, c, c, i, c, c]
        est = feed(script)
        assert isinstance(est, ThresholdEstimate)
        assert est.reversal_levels == (57, 61, 59, 61, 60, 61, 60, 61, 60, 61)
        assert est.threshold_db == 60.5
        assert est.n_trials == len(script)
        # the second reversal is reached with a 4 dB step, the next move uses 2
        steps = [t.step_db for t in est.trial_log]
        assert steps[:8] == [0, 4, 0, 4, 4, 0, 2, 2]

    def test_threshold_mean_of_last_six(self):
        script = [True, True, False] + [True, True, True, True, False, False] * 3
        est = feed(script + [True, True, False] * 20)
        assert est.threshold_db == pytest.approx(np.mean(est.reversal_levels[-6:]))

    def test_tail_example(self):
        levels = [61, 63, 61, 62, 60, 62]
        assert np.mean(levels) == 61.5

    def test_update_after_termination(self):
        est = feed([True, True, False] * 20)
        state = TrackState(est.trial_log[-1].level_db, reversal_levels=list(est.reversal_levels))
        with pytest.raises(RuntimeError):
            staircase_update(state, True, CFG)

    @settings(max_examples=300)
    @given(st.lists(st.booleans(), min_size=1, max_size=120))
    def test_trajectory_invariants(self, responses):
        state = TrackState.start(CFG)
        prev_rev = 0
        for r in responses:
            before = state.current_level_db
            state = staircase_update(state, r, CFG)
            if isinstance(state, ThresholdEstimate):
                assert state.threshold_db == pytest.approx(
                    np.mean(state.reversal_levels[-6:]))
                assert len(state.reversal_levels) == 10
                return
            assert state.n_reversals >= prev_rev
            assert state.n_reversals <= CFG.total_reversals
            delta = abs(state.current_level_db - before)
            assert delta in (0.0, CFG.step_for(state.n_reversals))
            prev_rev = state.n_reversals


def levitt_point(mu, slope):
    # P = 1/3 + 2/3 * Phi((L - mu)/slope); solve P = 1/sqrt(2)
    return mu + slope * norm.ppf((2 ** -0.5 - 1 / 3) * 1.5)


class TestBernoulliOracle:
    def test_converges_to_70_7_percent(self):
        mu, slope = 50.0, 1.5
        rng = np.random.default_rng(77)

        def respond(level):
            p = 1 / 3 + 2 / 3 * norm.cdf((level - mu) / slope)
            return bool(rng.random() < p)

        th = [run_staircase(respond).threshold_db for _ in range(200)]
        assert np.mean(th) == pytest.approx(levitt_point(mu, slope), abs=1.0)

    def test_always_correct_aborts(self):
        with pytest.raises(TrackAborted, match="400 trials"):
            run_staircase(lambda level: True)


class TestModelObserver:
    def test_chance_without_tone(self, short_condition):
        hits = sum(run_trial(short_condition, -math.inf, seed=k) for k in range(600))
        assert binomtest(hits, 600, 1 / 3).pvalue > 1e-3

    def test_near_perfect_far_above_threshold(self, short_condition):
        hits = sum(run_trial(short_condition, 78.0, seed=k) for k in range(150))
        assert hits / 150 > 0.95

    def test_target_position_uniform(self):
        rng = np.random.default_rng(5)
        counts = np.bincount([draw_target(rng) for _ in range(30000)], minlength=3)
        assert chisquare(counts).pvalue > 1e-3

    def test_track_deterministic(self, short_condition):
        a = run_track(short_condition, seed=3)
        b = run_track(short_condition, seed=3)
        assert a == b

    def test_batching_does_not_change_results(self, short_condition):
        seeds = track_seeds(11, 4)
        a = run_tracks(short_condition, seeds=seeds, batch_size=1)
        b = run_tracks(short_condition, seeds=seeds, batch_size=64)
        assert a == b

    def test_single_run_condition(self, short_condition):
        res = run_condition(short_condition, n_runs=1, seed=8)
        single = run_track(short_condition, seed=child_seed(8, 0))
        assert res.thresholds_db == (single.threshold_db,)
        assert res.mean == res.median == single.threshold_db
        assert res.sd == 0 and res.sem == 0

    def test_rejects_zero_runs(self, short_condition):
        with pytest.raises(ValueError):
            run_condition(short_condition, n_runs=0)

    def test_trial_cap_raises(self, short_condition):
        cfg = StaircaseConfig(max_trials=5)
        with pytest.raises(TrackAborted):
            run_track(short_condition, config=cfg, seed=0)

    def test_disjoint_seed_sets_agree(self, short_condition):
        a = run_condition(short_condition, n_runs=30, seed=100)
        b = run_condition(short_condition, n_runs=30, seed=200)
        pooled = math.hypot(a.sem, b.sem)
        assert abs(a.mean - b.mean) < 3 * 2 * pooled
        assert len(set(a.thresholds_db) & set(b.thresholds_db)) < 30

    def test_trial_log_csv(self, short_condition, tmp_path):
        est = run_track(short_condition, seed=1)
        path = tmp_path / "log.csv"
        write_trial_log(path, est)
        rows = list(csv.DictReader(open(path)))
        assert list(rows[0]) == ["trial_index", "level_db", "correct", "reversal_flag",
                                 "step_db"]
        assert len(rows) == est.n_trials
        assert sum(int(r["reversal_flag"]) for r in rows) == 10
        assert float(rows[0]["level_db"]) == 65


def test_track_seeds_are_counter_based():
    a = track_seeds(42, 5)
    b = track_seeds(42, 3)
    for x, y in zip(a, b):
        assert x.generate_state(4).tolist() == y.generate_state(4).tolist()
    assert a[0].generate_state(4).tolist() != a[1].generate_state(4).tolist()
