"""Binaural decision stage: instantaneous IPD, phase jitter, and the decision variable.

The decision variable of one observation interval is

    D = arctanh(cos(mean(|IPD + jitter|))) + detector_noise

so that lower values mean stronger interaural fluctuation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .periphery import (AnalyticChannel, PeripheryParams, fused_mean_abs_ipd,
                        periphery_process)
from .stimgen import DEFAULT_FS, StereoSignal, as_generator


@dataclass(frozen=True)
class BinauralParams:
    sigma_ipd: float = 0.3
    sigma_d: float = 0.4
    clamp_epsilon: float = 1e-6

    def __post_init__(self):
        if self.sigma_ipd < 0:
            raise ValueError("sigma_ipd must be non-negative")
        if self.sigma_d < 0:
            raise ValueError("sigma_d must be non-negative")
        if not 0 < self.clamp_epsilon < 1:
            raise ValueError("clamp_epsilon must lie in (0, 1)")


@dataclass(frozen=True)
class ModelParams:
    """Everything the artificial observer needs besides the stimulus."""

    periphery: PeripheryParams = field(default_factory=PeripheryParams)
    binaural: BinauralParams = field(default_factory=BinauralParams)
    sample_rate: float = DEFAULT_FS


@dataclass(frozen=True)
class IpdTrace:
    values: np.ndarray
    sample_rate: float = DEFAULT_FS

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.size and (values.max() > np.pi or values.min() <= -np.pi):
            raise ValueError("IPD values must lie in (-pi, pi]")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size


def wrap_phase(phi):
    """Map angles to (-pi, pi]."""
    out = np.pi - np.mod(np.pi - np.asarray(phi, dtype=float), 2 * np.pi)
    # mod can round up to exactly 2*pi for inputs a hair above pi
    return np.where(out <= -np.pi, np.pi, out)


def _ipd(g_left, g_right):
    xl, yl = g_left.real, g_left.imag
    xr, yr = g_right.real, g_right.imag
    # spelled out so that identical channels give an imaginary part of exactly 0
    re = xl * xr + yl * yr
    im = yl * xr - xl * yr
    ipd = np.arctan2(im, re)
    # arctan2 yields -pi for a negative-zero imaginary part
    ipd[ipd <= -np.pi] = np.pi
    # silence has no phase; signed zeros would otherwise give +-pi
    ipd[(re == 0) & (im == 0)] = 0.0
    return ipd


def extract_ipd(g_left: AnalyticChannel, g_right: AnalyticChannel) -> IpdTrace:
    if len(g_left) != len(g_right):
        raise ValueError("channel length mismatch")
    return IpdTrace(_ipd(g_left.samples, g_right.samples), g_left.sample_rate)


def add_phase_jitter(trace: IpdTrace, sigma_ipd, seed=None) -> IpdTrace:
    """Add i.i.d. Gaussian jitter to every IPD sample and re-wrap."""
    if sigma_ipd < 0:
        raise ValueError("sigma_ipd must be non-negative")
    rng = as_generator(seed)
    noise = rng.standard_normal(len(trace))
    if sigma_ipd == 0:
        return IpdTrace(trace.values.copy(), trace.sample_rate)
    return IpdTrace(wrap_phase(trace.values + sigma_ipd * noise),
                    trace.sample_rate)


def mean_abs_ipd(trace: IpdTrace) -> float:
    if len(trace) == 0:
        raise ValueError("empty IPD trace")
    return float(np.mean(np.abs(trace.values)))


def fisher_z(mean_abs, clamp_epsilon=1e-6):
    """arctanh of cos(mean |IPD|), clamped away from +-1."""
    c = np.clip(np.cos(mean_abs), -1.0 + clamp_epsilon, 1.0 - clamp_epsilon)
    return np.arctanh(c)


def decision_variable(m, sigma_d=0.4, clamp_epsilon=1e-6, seed=None) -> float:
    if not 0 <= m <= np.pi:
        raise ValueError(f"mean |IPD| {m} outside [0, pi]")
    rng = as_generator(seed)
    return float(fisher_z(m, clamp_epsilon) + sigma_d * rng.standard_normal())


def process_interval(stereo: StereoSignal,
                     periphery: PeripheryParams = PeripheryParams(),
                     binaural: BinauralParams = BinauralParams(),
                     seed=None) -> float:
    """Decision variable D for one stereo observation interval."""
    rng = as_generator(seed)
    g_left, g_right = periphery_process(stereo, periphery)
    trace = add_phase_jitter(extract_ipd(g_left, g_right), binaural.sigma_ipd, rng)
    return decision_variable(mean_abs_ipd(trace), binaural.sigma_d,
                             binaural.clamp_epsilon, rng)


def decision_variables(left, right, jitter, detector, model: ModelParams):
    """Batched D for stacked intervals.

    ``left``/``right`` and ``jitter`` (standard-normal draws) have shape
    ``(n_intervals, n_samples)``; ``detector`` holds one standard-normal
    draw per interval.  Equivalent, row by row, to :func:`process_interval`
    fed with the same random draws.
    """
    bp = model.binaural
    m = fused_mean_abs_ipd(left, right, jitter, bp.sigma_ipd, model.periphery,
                           model.sample_rate)
    return fisher_z(m, bp.clamp_epsilon) + bp.sigma_d * np.asarray(detector)
