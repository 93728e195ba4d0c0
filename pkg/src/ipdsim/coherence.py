"""Temporal coherence of band-limited noise.

The complex coherence of an analytic noise signal is the normalized
inverse Fourier transform of its (positive-frequency) power spectral
density.  For a rectangular band of width ``B`` around ``fc``::

    gamma(tau) = sinc(B * tau) * exp(2j * pi * fc * tau)

These routines give the closed form, a quadrature version for arbitrary
spectra (including the spectrum seen behind the peripheral filter), and an
empirical estimate from stereo signals.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import hilbert

from .periphery import PeripheryParams, design_gammatone
from .stimgen import DEFAULT_FS, NoiseSpec, StereoSignal

DEFAULT_DF = 0.5


@dataclass(frozen=True)
class CoherenceFunction:
    lags: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lags", np.atleast_1d(np.asarray(self.lags, dtype=float)))
        object.__setattr__(self, "values",
                           np.atleast_1d(np.asarray(self.values, dtype=complex)))
        if self.lags.shape != self.values.shape:
            raise ValueError("lags and values must have the same shape")

    @property
    def magnitude(self):
        return np.abs(self.values)

    def at(self, lag):
        idx = np.flatnonzero(np.isclose(self.lags, lag, rtol=0, atol=1e-12))
        if idx.size == 0:
            raise KeyError(f"lag {lag} not tabulated")
        return self.values[idx[0]]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lag_s", "re", "im", "abs"])
            for lag, v in zip(self.lags, self.values):
                writer.writerow([f"{lag:.9g}", f"{v.real:.12g}", f"{v.imag:.12g}",
                                 f"{abs(v):.12g}"])


def rect_gamma(bandwidth, center, lags):
    """Closed-form coherence of a rectangular band (``np.sinc`` is normalized)."""
    lags = np.asarray(lags, dtype=float)
    return CoherenceFunction(lags, np.sinc(bandwidth * lags)
                             * np.exp(2j * np.pi * center * lags))


def gamma_from_psd(freqs, psd, lags):
    """Normalized inverse Fourier transform of a PSD sampled on ``freqs`` (Hz).

    Trapezoid quadrature; the zero-lag value is exactly 1.
    """
    freqs = np.asarray(freqs, dtype=float)
    psd = np.asarray(psd, dtype=float)
    lags = np.atleast_1d(np.asarray(lags, dtype=float))
    if freqs.shape != psd.shape or freqs.ndim != 1 or freqs.size < 2:
        raise ValueError("freqs and psd must be matching 1-D grids")
    if np.any(psd < 0):
        raise ValueError("psd must be non-negative")
    norm = np.trapezoid(psd, freqs)
    if not norm > 0:
        raise ValueError("psd has no power")
    kernel = np.exp(2j * np.pi * np.outer(lags, freqs))
    values = np.trapezoid(kernel * psd, freqs, axis=-1) / norm
    # complex quadrature can round the zero-lag ratio off 1 by an ulp
    values[lags == 0] = 1.0
    return CoherenceFunction(lags, values)


def band_grid(noise: NoiseSpec, df=DEFAULT_DF):
    """Uniform grid spanning the noise pass-band, edges included, spacing <= df."""
    lo, hi = noise.band_edges
    n = int(math.ceil((hi - lo) / df)) + 1
    return np.linspace(lo, hi, n)


def effective_gamma(noise: NoiseSpec, periphery: Optional[PeripheryParams] = PeripheryParams(),
                    lags=(0.0,), fs=DEFAULT_FS, df=DEFAULT_DF):
    """Coherence of the noise after the peripheral gammatone.

    ``periphery=None`` means an all-pass front end, i.e. the raw stimulus.
    """
    freqs = band_grid(noise, df)
    psd = np.ones_like(freqs)
    if periphery is not None:
        filt = design_gammatone(periphery.gt_order, periphery.gt_center,
                                periphery.gt_erb, fs)
        psd = np.abs(filt.response(freqs)) ** 2
    return gamma_from_psd(freqs, psd, lags)


def measure_coherence(stereo, lags=(0.0,)):
    """Empirical complex coherence between the analytic left and right channels.

    At lag ``tau`` this is ``<z_L(t + tau) conj(z_R(t))>`` normalized by the
    channel powers, averaged over the overlapping part.  ``stereo`` may also
    be a sequence of tokens, in which case cross products and powers are
    summed over all of them before normalizing.
    """
    tokens = [stereo] if isinstance(stereo, StereoSignal) else list(stereo)
    if not tokens:
        raise ValueError("no tokens given")
    lags = np.atleast_1d(np.asarray(lags, dtype=float))
    cross = np.zeros(lags.size, dtype=complex)
    counts = np.zeros(lags.size)
    p_left = p_right = 0.0
    for token in tokens:
        fs = token.sample_rate
        z_left = hilbert(token.left)
        z_right = hilbert(token.right)
        p_left += np.mean(np.abs(z_left) ** 2)
        p_right += np.mean(np.abs(z_right) ** 2)
        n = len(token)
        for j, lag in enumerate(lags):
            k = int(round(lag * fs))
            if abs(k) >= n:
                raise ValueError(f"lag {lag} s exceeds signal length")
            if k >= 0:
                prod = z_left[k:] * np.conj(z_right[:n - k])
            else:
                prod = z_left[:n + k] * np.conj(z_right[-k:])
            cross[j] += np.mean(prod)
            counts[j] += 1
    if p_left == 0 or p_right == 0:
        raise ValueError("channel without energy")
    scale = math.sqrt(p_left * p_right) / len(tokens)
    return CoherenceFunction(lags, cross / counts / scale)
