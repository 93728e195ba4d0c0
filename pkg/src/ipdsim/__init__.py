"""Simulation of tone-in-noise detection with an IPD-fluctuation binaural model."""

__version__ = "0.1.0"

from .binaural import BinauralParams, ModelParams, process_interval
from .observer import StaircaseConfig, run_condition, run_track
from .periphery import PeripheryParams
from .stimgen import (Condition, Correlated, Delayed, NoiseSpec, StereoSignal,
                      TonePhase, ToneSpec, Uncorrelated)

__all__ = [
    "BinauralParams", "Condition", "Correlated", "Delayed", "ModelParams",
    "NoiseSpec", "PeripheryParams", "StaircaseConfig", "StereoSignal",
    "TonePhase", "ToneSpec", "Uncorrelated", "process_interval",
    "run_condition", "run_track",
]
