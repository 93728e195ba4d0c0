"""Monaural front end: gammatone band-pass, haircell, and the complex TFS filter.

The gammatone filters follow the all-pole complex design of Hohmann (2002):
a cascade of ``order`` identical complex one-pole sections whose output is
an analytic band-pass signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from scipy.signal import butter, sosfilt

from .stimgen import DEFAULT_FS, StereoSignal


@dataclass(frozen=True)
class PeripheryParams:
    gt_order: int = 4
    gt_center: float = 500.0
    gt_erb: float = 79.0
    compression_exponent: float = 0.4
    lp_order: int = 5
    lp_cutoff: float = 770.0
    tfs_order: int = 2
    tfs_bandwidth: float = 167.0
    tfs_center: float = 500.0

    def __post_init__(self):
        for name in ("gt_erb", "lp_cutoff", "tfs_bandwidth", "gt_center",
                     "tfs_center", "compression_exponent"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("gt_order", "lp_order", "tfs_order"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")


@dataclass(frozen=True)
class AnalyticChannel:
    samples: np.ndarray
    sample_rate: float = DEFAULT_FS

    def __len__(self):
        return self.samples.size


def erb_factor(order):
    """ERB of a gammatone divided by its bandwidth parameter.

    For the envelope ``t**(n-1) * exp(-2*pi*b*t)`` the equivalent
    rectangular bandwidth is ``b * pi * (2n-2)! * 2**-(2n-2) / ((n-1)!)**2``.
    """
    n = order
    return (math.pi * math.factorial(2 * n - 2) * 2.0 ** (-(2 * n - 2))
            / math.factorial(n - 1) ** 2)


@dataclass(frozen=True)
class GammatoneFilter:
    """Cascade of ``order`` complex one-pole sections sharing ``pole``."""

    order: int
    pole: complex
    gain: float
    sample_rate: float

    def response(self, freqs):
        """Complex frequency response at ``freqs`` (Hz)."""
        z_inv = np.exp(-2j * np.pi * np.asarray(freqs, dtype=float)
                       / self.sample_rate)
        return self.gain / (1.0 - self.pole * z_inv) ** self.order


@lru_cache(maxsize=64)
def design_gammatone(order, center, erb, fs=DEFAULT_FS) -> GammatoneFilter:
    """Gammatone with the requested ERB, unit gain at ``center``."""
    if not 0 < center < fs / 2:
        raise ValueError(f"center {center} Hz outside (0, fs/2)")
    if not erb > 0:
        raise ValueError("erb must be positive")
    if order < 1:
        raise ValueError("order must be at least 1")
    decay = erb / erb_factor(order)
    radius = math.exp(-2 * math.pi * decay / fs)
    pole = radius * complex(math.cos(2 * math.pi * center / fs),
                            math.sin(2 * math.pi * center / fs))
    return GammatoneFilter(order, pole, (1.0 - radius) ** order, fs)


@numba.njit(cache=True)
def _onepole_cascade(x, pole, order, gain):
    # sections run one after another per sample; x is (rows, n)
    rows, n = x.shape
    y = np.empty((rows, n), dtype=np.complex128)
    state = np.zeros(order, dtype=np.complex128)
    for r in range(rows):
        state[:] = 0
        for k in range(n):
            v = complex(x[r, k])
            for s in range(order):
                v = v + pole * state[s]
                state[s] = v
            y[r, k] = gain * v
    return y


def gammatone_filter(x, filt: GammatoneFilter):
    """Causal complex gammatone filtering along the last axis.

    Each one-pole section is its own recursion; expanding the cascade into
    one high-order polynomial loses accuracy for poles this close to the
    unit circle.
    """
    x = np.asarray(x)
    flat = np.ascontiguousarray(x.reshape(-1, x.shape[-1]) if x.ndim else x.reshape(1, 1))
    if not np.iscomplexobj(flat):
        flat = flat.astype(np.float64)
    y = _onepole_cascade(flat, complex(filt.pole), filt.order, float(filt.gain))
    return y.reshape(x.shape)


@lru_cache(maxsize=16)
def _lowpass(order, cutoff, fs):
    return butter(order, cutoff, btype="low", fs=fs, output="sos")


def haircell(x, params: PeripheryParams = PeripheryParams(), fs=DEFAULT_FS):
    """Half-wave rectification, power-law compression and a causal low-pass."""
    x = np.asarray(x, dtype=float)
    rect = np.maximum(x, 0.0) ** params.compression_exponent
    return sosfilt(_lowpass(params.lp_order, params.lp_cutoff, fs), rect, axis=-1)


def periphery_array(x, params: PeripheryParams = PeripheryParams(), fs=DEFAULT_FS):
    """Run the monaural chain on real samples along the last axis.

    Returns the complex TFS-filter output with the same shape as ``x``.
    """
    gt = design_gammatone(params.gt_order, params.gt_center, params.gt_erb, fs)
    tfs = design_gammatone(params.tfs_order, params.tfs_center,
                           params.tfs_bandwidth, fs)
    bm = 2.0 * gammatone_filter(x, gt).real
    return gammatone_filter(haircell(bm, params, fs), tfs)


def chain_coefficients(params: PeripheryParams = PeripheryParams(), fs=DEFAULT_FS):
    """Filters of the monaural chain as plain values for :func:`fused_mean_abs_ipd`."""
    gt = design_gammatone(params.gt_order, params.gt_center, params.gt_erb, fs)
    tfs = design_gammatone(params.tfs_order, params.tfs_center, params.tfs_bandwidth, fs)
    return (gt.pole, gt.order, gt.gain, float(params.compression_exponent),
            _lowpass(params.lp_order, params.lp_cutoff, fs), tfs.pole, tfs.order, tfs.gain)


@numba.njit(cache=True)
def _fused_rows(left, right, jitter, sigma, gt_pole, gt_order, gt_gain, exponent,
                sos, tfs_pole, tfs_order, tfs_gain):
    rows, n = left.shape
    n_sec = sos.shape[0]
    out = np.empty(rows)
    gt_state = np.zeros((2, gt_order), dtype=np.complex128)
    lp_state = np.zeros((2, n_sec, 2))
    tfs_state = np.zeros((2, tfs_order), dtype=np.complex128)
    g = np.empty(2, dtype=np.complex128)
    two_pi = 2.0 * np.pi
    for r in range(rows):
        gt_state[:] = 0
        lp_state[:] = 0
        tfs_state[:] = 0
        acc = 0.0
        for k in range(n):
            for ch in range(2):
                v = complex(left[r, k] if ch == 0 else right[r, k])
                for s in range(gt_order):
                    v = v + gt_pole * gt_state[ch, s]
                    gt_state[ch, s] = v
                x = 2.0 * (gt_gain * v).real
                x = x ** exponent if x > 0.0 else 0.0
                for s in range(n_sec):
                    y = sos[s, 0] * x + lp_state[ch, s, 0]
                    lp_state[ch, s, 0] = sos[s, 1] * x - sos[s, 4] * y + lp_state[ch, s, 1]
                    lp_state[ch, s, 1] = sos[s, 2] * x - sos[s, 5] * y
                    x = y
                w = complex(x)
                for s in range(tfs_order):
                    w = w + tfs_pole * tfs_state[ch, s]
                    tfs_state[ch, s] = w
                g[ch] = tfs_gain * w
            xl, yl = g[0].real, g[0].imag
            xr, yr = g[1].real, g[1].imag
            re = xl * xr + yl * yr
            im = yl * xr - xl * yr
            if re == 0.0 and im == 0.0:
                phi = 0.0
            else:
                phi = np.arctan2(im, re)
                if phi <= -np.pi:
                    phi = np.pi
            if sigma != 0.0:
                phi += sigma * jitter[r, k]
                # wrap to (-pi, pi]; jittered values rarely need more than one turn
                while phi > np.pi:
                    phi -= two_pi
                while phi <= -np.pi:
                    phi += two_pi
            acc += abs(phi)
        out[r] = acc / n
    return out


def fused_mean_abs_ipd(left, right, jitter, sigma_ipd,
                       params: PeripheryParams = PeripheryParams(), fs=DEFAULT_FS):
    """Mean |IPD| per row straight from the ear signals, in a single pass.

    Same arithmetic as running :func:`periphery_array` on both ears, taking
    the IPD, adding ``sigma_ipd * jitter`` and averaging the modulus, but
    without materializing the intermediate signals.
    """
    left = np.ascontiguousarray(left, dtype=float)
    right = np.ascontiguousarray(right, dtype=float)
    jitter = np.ascontiguousarray(jitter, dtype=float)
    if left.ndim != 2 or left.shape != right.shape or jitter.shape != left.shape:
        raise ValueError("left, right and jitter must share a 2-D shape")
    gt_pole, gt_order, gt_gain, exponent, sos, tfs_pole, tfs_order, tfs_gain = \
        chain_coefficients(params, fs)
    return _fused_rows(left, right, jitter, float(sigma_ipd), complex(gt_pole), gt_order,
                       float(gt_gain), exponent, np.ascontiguousarray(sos),
                       complex(tfs_pole), tfs_order, float(tfs_gain))


def periphery_process(stereo: StereoSignal, params: PeripheryParams = PeripheryParams()):
    """Complex TFS outputs ``(g_left, g_right)`` for a stereo signal."""
    fs = stereo.sample_rate
    out = periphery_array(stereo.as_array(), params, fs)
    return AnalyticChannel(out[0], fs), AnalyticChannel(out[1], fs)
