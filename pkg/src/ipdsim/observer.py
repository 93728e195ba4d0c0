"""Artificial 3-AFC observer driven by a transformed up-down staircase.

Each trial presents three intervals (one carrying the tone) and the
observer picks the interval with the smallest decision variable.  The
staircase is a 2-down/1-up track with step sizes 4, 2 and 1 dB; a run stops
after 10 reversals and the threshold is the mean of the last 6.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .binaural import ModelParams, decision_variables
from .stimgen import Condition, as_generator, make_interval

N_INTERVALS = 3
UP, DOWN = 1, -1


class TrackAborted(RuntimeError):
    """A track hit the trial cap before reaching its last reversal."""


@dataclass(frozen=True)
class StaircaseConfig:
    start_level_db: float = 65.0
    initial_step_db: float = 4.0
    step_schedule: Tuple[Tuple[int, float], ...] = ((2, 2.0), (4, 1.0))
    total_reversals: int = 10
    reversals_averaged: int = 6
    down_count: int = 2
    up_count: int = 1
    max_trials: int = 400

    def __post_init__(self):
        object.__setattr__(self, "step_schedule",
                           tuple((int(k), float(s)) for k, s in self.step_schedule))
        if not 1 <= self.reversals_averaged <= self.total_reversals:
            raise ValueError("need 1 <= reversals_averaged <= total_reversals")
        steps = [self.initial_step_db] + [s for _, s in self.step_schedule]
        if any(s <= 0 for s in steps) or any(
                b >= a for a, b in zip(steps, steps[1:])):
            raise ValueError("step sizes must be positive and strictly decreasing")
        after = [k for k, _ in self.step_schedule]
        if after != sorted(after) or len(set(after)) != len(after):
            raise ValueError("step schedule must be ordered by reversal index")
        if self.down_count < 1 or self.up_count < 1:
            raise ValueError("down_count and up_count must be >= 1")
        if self.max_trials < 1:
            raise ValueError("max_trials must be >= 1")

    def step_for(self, n_reversals):
        step = self.initial_step_db
        for after, s in self.step_schedule:
            if n_reversals >= after:
                step = s
        return step


@dataclass(frozen=True)
class Trial:
    level_db: float
    correct: bool
    reversal: bool
    step_db: float


@dataclass
class TrackState:
    current_level_db: float
    consecutive_correct: int = 0
    consecutive_incorrect: int = 0
    last_direction: int = 0
    reversal_levels: List[float] = field(default_factory=list)
    trial_log: List[Trial] = field(default_factory=list)

    @classmethod
    def start(cls, config: StaircaseConfig):
        return cls(current_level_db=config.start_level_db)

    @property
    def n_reversals(self):
        return len(self.reversal_levels)


@dataclass(frozen=True)
class ThresholdEstimate:
    threshold_db: float
    reversal_levels: Tuple[float, ...]
    n_trials: int
    trial_log: Tuple[Trial, ...] = ()


def staircase_update(state: TrackState, correct: bool, config: StaircaseConfig):
    """Advance the track by one response.

    Returns the next :class:`TrackState`, or a :class:`ThresholdEstimate`
    once the final reversal has been logged.  The input state is not
    modified.
    """
    if state.n_reversals >= config.total_reversals:
        raise RuntimeError("staircase already terminated")
    level = state.current_level_db
    n_correct = state.consecutive_correct + 1 if correct else 0
    n_incorrect = 0 if correct else state.consecutive_incorrect + 1
    direction = 0
    if n_correct >= config.down_count:
        direction, n_correct = DOWN, 0
    elif n_incorrect >= config.up_count:
        direction, n_incorrect = UP, 0

    reversals = list(state.reversal_levels)
    is_reversal = direction != 0 and state.last_direction not in (0, direction)
    if is_reversal:
        reversals.append(level)
    # schedule switches right after a reversal is logged
    step = config.step_for(len(reversals))
    log = state.trial_log + [Trial(level, bool(correct), is_reversal,
                                   step if direction else 0.0)]

    if len(reversals) >= config.total_reversals:
        last = reversals[-config.reversals_averaged:]
        return ThresholdEstimate(float(np.mean(last)), tuple(reversals),
                                 len(log), tuple(log))
    return TrackState(
        current_level_db=level + direction * step,
        consecutive_correct=n_correct,
        consecutive_incorrect=n_incorrect,
        last_direction=direction or state.last_direction,
        reversal_levels=reversals,
        trial_log=log,
    )


def _abort_message(state, config):
    return (f"track did not terminate within {config.max_trials} trials "
            f"({state.n_reversals} reversals, last level "
            f"{state.current_level_db:.1f} dB)")


def run_staircase(respond: Callable[[float], bool],
                  config: StaircaseConfig = StaircaseConfig()) -> ThresholdEstimate:
    """Drive a staircase with any ``respond(level_db) -> correct`` callable."""
    state = TrackState.start(config)
    for _ in range(config.max_trials):
        state = staircase_update(state, respond(state.current_level_db), config)
        if isinstance(state, ThresholdEstimate):
            return state
    raise TrackAborted(_abort_message(state, config))


# ---------------------------------------------------------------------------
# Model observer
# ---------------------------------------------------------------------------


def draw_target(rng) -> int:
    """Target interval index, uniform over the three intervals."""
    return int(rng.integers(N_INTERVALS))


def _draw_trial(condition: Condition, level_db, model: ModelParams, rng):
    """Random material for one 3-AFC trial, in a fixed draw order."""
    fs = model.sample_rate
    target = draw_target(rng)
    left, right, jitter, detector = [], [], [], []
    for i in range(N_INTERVALS):
        tone = condition.tone(level_db) if i == target else None
        stim = make_interval(condition.noise, tone, rng, fs)
        left.append(stim.left)
        right.append(stim.right)
        jitter.append(rng.standard_normal(len(stim)))
        detector.append(rng.standard_normal())
    return target, left, right, jitter, detector


def _evaluate(draws, model):
    left = np.array([x for d in draws for x in d[1]])
    right = np.array([x for d in draws for x in d[2]])
    jitter = np.array([x for d in draws for x in d[3]])
    detector = np.array([x for d in draws for x in d[4]])
    dvals = decision_variables(left, right, jitter, detector, model)
    picks = np.argmin(dvals.reshape(len(draws), N_INTERVALS), axis=1)
    return [int(p) == d[0] for p, d in zip(picks, draws)]


def run_trial(condition: Condition, tone_level_db, model: ModelParams = ModelParams(),
              seed=None) -> bool:
    """One 3-AFC trial; True if the smallest-D interval held the tone."""
    rng = as_generator(seed)
    return _evaluate([_draw_trial(condition, tone_level_db, model, rng)], model)[0]


def run_tracks(condition: Condition, model: ModelParams = ModelParams(),
               config: StaircaseConfig = StaircaseConfig(),
               seeds: Sequence = (0,), batch_size: int = 64) -> List[ThresholdEstimate]:
    """Run independent tracks in lockstep so their intervals are filtered together.

    Every track owns its random stream, so the result of a track does not
    depend on which other tracks share its batch.
    """
    rngs = [as_generator(s) for s in seeds]
    results: List[Optional[ThresholdEstimate]] = [None] * len(rngs)
    states = {i: TrackState.start(config) for i in range(len(rngs))}
    n_trials = 0
    while states:
        if n_trials >= config.max_trials:
            i, state = next(iter(states.items()))
            raise TrackAborted(f"track {i}: " + _abort_message(state, config))
        active = sorted(states)
        outcomes = []
        for lo in range(0, len(active), batch_size):
            chunk = active[lo:lo + batch_size]
            draws = [_draw_trial(condition, states[i].current_level_db, model, rngs[i])
                     for i in chunk]
            outcomes.extend(_evaluate(draws, model))
        for i, correct in zip(active, outcomes):
            new = staircase_update(states[i], correct, config)
            if isinstance(new, ThresholdEstimate):
                results[i] = new
                del states[i]
            else:
                states[i] = new
        n_trials += 1
    return results


def run_track(condition: Condition, model: ModelParams = ModelParams(),
              config: StaircaseConfig = StaircaseConfig(), seed=0) -> ThresholdEstimate:
    return run_tracks(condition, model, config, [seed])[0]


@dataclass(frozen=True)
class ConditionResult:
    condition: Condition
    thresholds_db: Tuple[float, ...]
    estimates: Tuple[ThresholdEstimate, ...] = ()

    @property
    def n_runs(self):
        return len(self.thresholds_db)

    @property
    def mean(self):
        return float(np.mean(self.thresholds_db))

    @property
    def median(self):
        return float(np.median(self.thresholds_db))

    @property
    def sd(self):
        if self.n_runs < 2:
            return 0.0
        return float(np.std(self.thresholds_db, ddof=1))

    @property
    def sem(self):
        return self.sd / math.sqrt(self.n_runs)

    @property
    def iqr(self):
        q1, q3 = np.percentile(self.thresholds_db, [25, 75])
        return float(q3 - q1)


def child_seed(seed, *keys) -> np.random.SeedSequence:
    """Counter-based child of ``seed``: same entropy, spawn key extended by ``keys``."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key + keys)
    return np.random.SeedSequence(seed, spawn_key=keys)


def track_seeds(seed, n_runs):
    """Per-track seed sequences derived from ``seed`` by spawn counter."""
    return [child_seed(seed, k) for k in range(n_runs)]


def run_condition(condition: Condition, model: ModelParams = ModelParams(),
                  config: StaircaseConfig = StaircaseConfig(), n_runs: int = 100,
                  seed=0) -> ConditionResult:
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    estimates = run_tracks(condition, model, config, track_seeds(seed, n_runs))
    return ConditionResult(condition, tuple(e.threshold_db for e in estimates),
                           tuple(estimates))


def write_trial_log(path, estimate: ThresholdEstimate):
    """CSV trial log: trial_index, level_db, correct, reversal_flag, step_db."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial_index", "level_db", "correct", "reversal_flag",
                         "step_db"])
        for k, t in enumerate(estimate.trial_log):
            writer.writerow([k, f"{t.level_db:g}", int(t.correct),
                             int(t.reversal), f"{t.step_db:g}"])
