"""Stimulus synthesis: band-pass Gaussian noise maskers and S0/Spi target tones.

All generators are pure functions of their specification and a random
generator.  Levels follow a fixed digital calibration: an RMS of 1.0
corresponds to 100 dB SPL.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.io import wavfile

DEFAULT_FS = 48000
CALIBRATION_DB = 100.0
# mother noise always covers the token plus this much extra delay
MIN_DELAY_HEADROOM_S = 0.008


def db_to_rms(level_db):
    """RMS amplitude of a signal at ``level_db`` dB SPL."""
    return 10.0 ** ((np.asarray(level_db, dtype=float) - CALIBRATION_DB) / 20.0)


def rms_to_db(rms):
    return 20.0 * np.log10(rms) + CALIBRATION_DB


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class StereoSignal:
    """Left/right pressure waveforms sharing one sample rate."""

    left: np.ndarray
    right: np.ndarray
    sample_rate: float = DEFAULT_FS

    def __post_init__(self):
        left = np.asarray(self.left, dtype=float)
        right = np.asarray(self.right, dtype=float)
        if left.ndim != 1 or right.ndim != 1:
            raise ValueError("channels must be one-dimensional")
        if left.shape != right.shape:
            raise ValueError(
                f"channel length mismatch: {left.size} vs {right.size}")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    def __len__(self):
        return self.left.size

    @property
    def duration(self):
        return self.left.size / self.sample_rate

    def scaled(self, gain):
        return StereoSignal(gain * self.left, gain * self.right, self.sample_rate)

    def as_array(self):
        """Samples as a ``(2, n)`` array."""
        return np.vstack([self.left, self.right])


# ---------------------------------------------------------------------------
# Specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Delayed:
    """Identical noise in both ears, right ear lagging by ``tau`` seconds."""

    tau: float = 0.0


@dataclass(frozen=True)
class Uncorrelated:
    """Independent noise tokens in the two ears."""


@dataclass(frozen=True)
class Correlated:
    """Right = rho*left + sqrt(1-rho^2)*independent, then a pure group delay."""

    rho: float = 1.0
    group_delay_s: float = 0.0

    def __post_init__(self):
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")


InterauralMode = Union[Delayed, Uncorrelated, Correlated]


class TonePhase(str, enum.Enum):
    S0 = "S0"
    SPi = "SPi"


@dataclass(frozen=True)
class NoiseSpec:
    center_freq: float = 500.0
    bandwidth: float = 100.0
    spectrum_level_db: float = 45.5
    duration_s: float = 0.380
    ramp_s: float = 0.020
    interaural_mode: InterauralMode = field(default_factory=Delayed)

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.center_freq - self.bandwidth / 2 < 0:
            raise ValueError("pass-band extends below 0 Hz")
        if not self.duration_s > 2 * self.ramp_s:
            raise ValueError("duration must exceed both ramps")
        if self.ramp_s < 0:
            raise ValueError("ramp_s must be non-negative")

    @property
    def overall_level_db(self):
        return self.spectrum_level_db + 10 * math.log10(self.bandwidth)

    @property
    def band_edges(self):
        return (self.center_freq - self.bandwidth / 2,
                self.center_freq + self.bandwidth / 2)


@dataclass(frozen=True)
class ToneSpec:
    freq: float = 500.0
    level_db_spl: float = 65.0
    duration_s: float = 0.300
    ramp_s: float = 0.020
    phase_mode: TonePhase = TonePhase.SPi

    def __post_init__(self):
        object.__setattr__(self, "phase_mode", TonePhase(self.phase_mode))
        if not self.duration_s >= 2 * self.ramp_s:
            raise ValueError("tone shorter than its ramps")


@dataclass(frozen=True)
class Condition:
    """One experimental condition: a masker and the target tone phase."""

    noise: NoiseSpec
    tone_phase: TonePhase = TonePhase.SPi
    label: str = ""
    tone_freq: float = 500.0
    tone_duration_s: float = 0.300
    tone_ramp_s: float = 0.020

    def __post_init__(self):
        object.__setattr__(self, "tone_phase", TonePhase(self.tone_phase))
        if self.tone_duration_s > self.noise.duration_s:
            raise ValueError("tone longer than the masker")

    def tone(self, level_db):
        return ToneSpec(freq=self.tone_freq, level_db_spl=level_db,
                        duration_s=self.tone_duration_s,
                        ramp_s=self.tone_ramp_s, phase_mode=self.tone_phase)


# ---------------------------------------------------------------------------
# Synthesis
# ---------------------------------------------------------------------------


def raised_cosine_window(n_samples, n_ramp):
    """Unit gate with raised-cosine on- and offset ramps of ``n_ramp`` samples."""
    win = np.ones(n_samples)
    if n_ramp > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(n_ramp) / n_ramp)
        win[:n_ramp] = ramp
        win[n_samples - n_ramp:] = ramp[::-1]
    return win


def _delay_samples(tau, fs):
    exact = tau * fs
    d = int(round(exact))
    # a tie leaves the rounding direction undefined
    if abs(exact - d) >= 0.5 - 1e-9:
        raise ValueError(f"delay {tau} s is not representable at {fs} Hz")
    return d


def mother_length(spec: NoiseSpec, fs=DEFAULT_FS):
    mode = spec.interaural_mode
    extra = MIN_DELAY_HEADROOM_S
    if isinstance(mode, Delayed):
        extra = max(extra, abs(mode.tau))
    elif isinstance(mode, Correlated):
        extra = max(extra, abs(mode.group_delay_s))
    n_min = int(math.ceil((spec.duration_s + extra) * fs))
    return 1 << (n_min - 1).bit_length()


def band_bins(n_fft, fs, low, high):
    """Indices of rfft bins with ``low <= f <= high`` (edge bins kept).

    DC and Nyquist bins are never used.
    """
    freqs = np.arange(n_fft // 2 + 1) * (fs / n_fft)
    tol = 1e-9 * fs
    keep = (freqs >= low - tol) & (freqs <= high + tol)
    keep[0] = keep[-1] = False
    return np.flatnonzero(keep)


def group_delay_factor(freqs, group_delay_s, ref_freq):
    """Spectral factor for a pure group delay with zero phase at ``ref_freq``."""
    return np.exp(-2j * np.pi * (freqs - ref_freq) * group_delay_s)


def _bandlimited_spectrum(rng, n_fft, bins):
    spec = np.zeros(n_fft // 2 + 1, dtype=complex)
    draws = rng.standard_normal((2, bins.size))
    spec[bins] = draws[0] + 1j * draws[1]
    return spec


def mother_noise(spec: NoiseSpec, seed=None, fs=DEFAULT_FS) -> StereoSignal:
    """Ungated, circular stereo mother noise with a brick-wall spectrum.

    Synthesized in the frequency domain with independent Gaussian real and
    imaginary parts per retained bin.  The interaural relation of
    ``spec.interaural_mode`` is realized here; the expected RMS corresponds
    to ``spec.overall_level_db``.
    """
    rng = as_generator(seed)
    mode = spec.interaural_mode
    n_fft = mother_length(spec, fs)
    bins = band_bins(n_fft, fs, *spec.band_edges)
    if bins.size == 0:
        raise ValueError("pass-band narrower than the frequency resolution")
    # E[x^2] of irfft output with unit-variance re/im parts on K bins
    gain = float(db_to_rms(spec.overall_level_db)) * n_fft / math.sqrt(4.0 * bins.size)

    x_left = gain * _bandlimited_spectrum(rng, n_fft, bins)
    if isinstance(mode, Delayed):
        d = _delay_samples(mode.tau, fs)
        left = np.fft.irfft(x_left, n_fft)
        right = np.roll(left, d)
    elif isinstance(mode, Uncorrelated):
        x_right = gain * _bandlimited_spectrum(rng, n_fft, bins)
        left, right = np.fft.irfft(np.vstack([x_left, x_right]), n_fft)
    elif isinstance(mode, Correlated):
        x_indep = gain * _bandlimited_spectrum(rng, n_fft, bins)
        if mode.rho == 1.0:
            x_right = x_left.copy()
        else:
            x_right = mode.rho * x_left + math.sqrt(1 - mode.rho ** 2) * x_indep
        if mode.group_delay_s != 0.0:
            freqs = np.arange(x_right.size) * (fs / n_fft)
            x_right = x_right * group_delay_factor(
                freqs, mode.group_delay_s, spec.center_freq)
        left, right = np.fft.irfft(np.vstack([x_left, x_right]), n_fft)
    else:
        raise TypeError(f"unknown interaural mode {mode!r}")
    return StereoSignal(left, right, fs)


def gen_bandpass_noise(spec: NoiseSpec, seed=None, fs=DEFAULT_FS) -> StereoSignal:
    """Gated stereo noise token: the first ``duration_s`` of the mother noise, ramped."""
    mother = mother_noise(spec, seed, fs)
    n_out = int(round(spec.duration_s * fs))
    win = raised_cosine_window(n_out, int(round(spec.ramp_s * fs)))
    return StereoSignal(mother.left[:n_out] * win, mother.right[:n_out] * win, fs)


def apply_group_delay(channel, tau_g, f_c, fs=DEFAULT_FS):
    """Delay the envelope of ``channel`` by ``tau_g`` while keeping zero phase at ``f_c``.

    Applied circularly in the frequency domain, so edge effects wrap around.
    """
    channel = np.asarray(channel, dtype=float)
    if channel.size == 0:
        raise ValueError("empty channel")
    if tau_g == 0:
        return channel.copy()
    n = channel.size
    spec = np.fft.rfft(channel)
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    spec *= group_delay_factor(freqs, tau_g, f_c)
    spec[0] = spec[0].real
    if n % 2 == 0:
        spec[-1] = spec[-1].real
    return np.fft.irfft(spec, n)


def gen_tone(spec: ToneSpec, fs=DEFAULT_FS) -> StereoSignal:
    n = int(round(spec.duration_s * fs))
    t = np.arange(n) / fs
    amp = math.sqrt(2.0) * float(db_to_rms(spec.level_db_spl))
    left = amp * np.sin(2 * np.pi * spec.freq * t)
    left *= raised_cosine_window(n, int(round(spec.ramp_s * fs)))
    right = left.copy() if spec.phase_mode is TonePhase.S0 else -left
    return StereoSignal(left, right, fs)


def tone_onset(noise: NoiseSpec, tone: ToneSpec, fs=DEFAULT_FS):
    """Sample index at which a temporally centered tone starts."""
    return int(round((noise.duration_s - tone.duration_s) / 2 * fs))


def make_interval(noise: NoiseSpec, tone: Optional[ToneSpec] = None,
                  seed=None, fs=DEFAULT_FS) -> StereoSignal:
    """One observation interval: a fresh noise token, plus the centered tone if given."""
    if tone is not None and tone.duration_s > noise.duration_s:
        raise ValueError("tone longer than the masker")
    token = gen_bandpass_noise(noise, seed, fs)
    if tone is None:
        return token
    target = gen_tone(tone, fs)
    start = tone_onset(noise, tone, fs)
    left = token.left.copy()
    right = token.right.copy()
    left[start:start + len(target)] += target.left
    right[start:start + len(target)] += target.right
    return StereoSignal(left, right, fs)


def write_wav(path, signal: StereoSignal):
    """Write a stereo 32-bit float WAV file."""
    data = np.column_stack([signal.left, signal.right]).astype(np.float32)
    wavfile.write(path, int(signal.sample_rate), data)
