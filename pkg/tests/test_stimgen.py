import math

import numpy as np
import pytest
from scipy.io import wavfile
from scipy.signal import hilbert

from ipdsim.stimgen import (Correlated, Delayed, NoiseSpec, StereoSignal, TonePhase,
                            ToneSpec, Uncorrelated, apply_group_delay, band_bins,
                            db_to_rms, gen_bandpass_noise, gen_tone, make_interval,
                            mother_noise, raised_cosine_window, rms_to_db, tone_onset,
                            write_wav)

FS = 48000


def phase_at(left, right, freq, band):
    """Cross-spectrum phase at ``freq`` from a linear fit of the unwrapped in-band phase."""
    n = len(left)
    bins = band_bins(n, FS, *band)
    cross = np.fft.rfft(left)[bins] * np.conj(np.fft.rfft(right)[bins])
    phase = np.unwrap(np.angle(cross))
    slope, icept = np.polyfit(bins * FS / n, phase, 1)
    return float(np.angle(np.exp(1j * (slope * freq + icept))))


class TestTypes:
    def test_stereo_length_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            StereoSignal(np.zeros(3), np.zeros(4))

    def test_stereo_sample_rate(self):
        with pytest.raises(ValueError):
            StereoSignal(np.zeros(3), np.zeros(3), 0)

    @pytest.mark.parametrize("kw", [
        {"bandwidth": 0.0},
        {"bandwidth": 1200.0},
        {"duration_s": 0.03, "ramp_s": 0.02},
    ])
    def test_noise_spec_invariants(self, kw):
        with pytest.raises(ValueError):
            NoiseSpec(**kw)

    def test_broadband_grid_noise_reaches_zero_hz(self):
        assert NoiseSpec(bandwidth=1000.0).band_edges == (0.0, 1000.0)

    @pytest.mark.parametrize("rho", [-1.01, 1.5])
    def test_rho_range(self, rho):
        with pytest.raises(ValueError):
            Correlated(rho)

    def test_overall_level(self):
        assert NoiseSpec(bandwidth=100, spectrum_level_db=45.5).overall_level_db == \
            pytest.approx(65.5)

    def test_calibration_roundtrip(self):
        assert db_to_rms(100.0) == 1.0
        assert rms_to_db(db_to_rms(47.3)) == pytest.approx(47.3)


class TestBandpassNoise:
    def test_token_duration(self):
        s = gen_bandpass_noise(NoiseSpec(), 0)
        assert len(s) == 18240 and s.sample_rate == FS

    def test_zero_delay_is_diotic(self):
        s = gen_bandpass_noise(NoiseSpec(interaural_mode=Delayed(0.0)), 1)
        assert np.array_equal(s.left, s.right)

    def test_rho_one_is_diotic(self):
        s = gen_bandpass_noise(NoiseSpec(interaural_mode=Correlated(1.0, 0.0)), 2)
        assert np.array_equal(s.left, s.right)

    @pytest.mark.parametrize("tau_ms", [2.0, 4.0, 8.0, -4.0])
    def test_mother_crosscorrelation_peak(self, tau_ms):
        spec = NoiseSpec(bandwidth=1000.0, interaural_mode=Delayed(tau_ms * 1e-3))
        m = mother_noise(spec, 3)
        # circular cross-correlation via FFT, lag k means right[n] ~ left[n - k]
        xc = np.fft.irfft(np.fft.rfft(m.right) * np.conj(np.fft.rfft(m.left)), len(m))
        lag = int(np.argmax(xc))
        lag = lag - len(m) if lag > len(m) // 2 else lag
        assert lag == round(tau_ms * 1e-3 * FS)

    def test_delay_8ms_is_384_samples(self):
        m = mother_noise(NoiseSpec(interaural_mode=Delayed(0.008)), 4)
        assert np.array_equal(np.roll(m.left, 384), m.right)

    def test_half_sample_delay_rejected(self):
        with pytest.raises(ValueError):
            gen_bandpass_noise(NoiseSpec(interaural_mode=Delayed(0.5 / FS)), 0)

    def test_band_limiting_rejection(self):
        spec = NoiseSpec(bandwidth=100.0, interaural_mode=Uncorrelated())
        n = len(mother_noise(spec, 0))
        bins = band_bins(n, FS, *spec.band_edges)
        power = np.zeros(n // 2 + 1)
        for seed in range(20):
            m = mother_noise(spec, seed)
            power += np.abs(np.fft.rfft(m.left)) ** 2 + np.abs(np.fft.rfft(m.right)) ** 2
        inband = power[bins].mean()
        outside = max(power[bins[0] - 1], power[bins[-1] + 1])
        assert 10 * np.log10(inband / max(outside, 1e-300)) >= 60

    def test_boundary_bins_included(self):
        # 0.5-Hz grid: edges 450 and 550 Hz fall exactly on bins
        bins = band_bins(96000, FS, 450.0, 550.0)
        freqs = bins * FS / 96000
        assert freqs[0] == 450.0 and freqs[-1] == 550.0

    @pytest.mark.parametrize("bw", [25.0, 100.0, 1000.0])
    def test_level(self, bw):
        spec = NoiseSpec(bandwidth=bw, interaural_mode=Uncorrelated())
        powers = []
        for seed in range(100):
            s = gen_bandpass_noise(spec, seed)
            mid = slice(960, len(s) - 960)  # skip the ramps
            powers.append(np.mean(s.left[mid] ** 2))
            powers.append(np.mean(s.right[mid] ** 2))
        level = 10 * np.log10(np.mean(powers)) + 100
        assert abs(level - (45.5 + 10 * np.log10(bw))) <= 0.5

    @pytest.mark.parametrize("tau_ms", [0.0, 2.0, 4.0, 8.0])
    def test_zero_ipd_at_500hz(self, tau_ms):
        spec = NoiseSpec(bandwidth=100.0, interaural_mode=Delayed(tau_ms * 1e-3))
        m = mother_noise(spec, 7)
        assert abs(phase_at(m.left, m.right, 500.0, spec.band_edges)) < 1e-3

    @pytest.mark.parametrize("rho", [0.0, 0.5, 0.9, -0.6])
    def test_correlated_rho(self, rho):
        spec = NoiseSpec(bandwidth=1000.0, duration_s=5.0,
                         interaural_mode=Correlated(rho, 0.0))
        cs = [np.corrcoef(s.left, s.right)[0, 1]
              for s in (gen_bandpass_noise(spec, seed) for seed in range(4))]
        assert np.mean(cs) == pytest.approx(rho, abs=0.02)

    def test_uncorrelated_channels_differ(self):
        s = gen_bandpass_noise(NoiseSpec(interaural_mode=Uncorrelated()), 0)
        assert abs(np.corrcoef(s.left, s.right)[0, 1]) < 0.5

    def test_deterministic(self):
        spec = NoiseSpec(interaural_mode=Uncorrelated())
        a, b = gen_bandpass_noise(spec, 99), gen_bandpass_noise(spec, 99)
        assert np.array_equal(a.left, b.left) and np.array_equal(a.right, b.right)

    def test_ramps(self):
        s = gen_bandpass_noise(NoiseSpec(), 5)
        assert s.left[0] == 0.0
        win = raised_cosine_window(100, 10)
        assert win[0] == 0 and win[-1] == pytest.approx(0.0, abs=0.03)
        assert np.all(win[10:90] == 1)


class TestGroupDelay:
    def test_zero_is_identity(self, rng):
        x = rng.standard_normal(1000)
        assert np.array_equal(apply_group_delay(x, 0.0, 500.0), x)

    def test_tone_at_reference_frequency_unchanged(self):
        n = 96 * 200  # whole number of 500-Hz cycles
        x = np.sin(2 * np.pi * 500 * np.arange(n) / FS)
        for tau in (0.001, 0.004, 0.0078):
            assert np.allclose(apply_group_delay(x, tau, 500.0), x, atol=1e-9)

    def test_envelope_lag_and_carrier_phase(self):
        spec = NoiseSpec(bandwidth=50.0, interaural_mode=Delayed(0.0))
        x = mother_noise(spec, 11).left
        y = apply_group_delay(x, 0.004, 500.0)
        env_x = np.abs(hilbert(x)) - np.abs(hilbert(x)).mean()
        env_y = np.abs(hilbert(y)) - np.abs(hilbert(y)).mean()
        xc = np.fft.irfft(np.fft.rfft(env_y) * np.conj(np.fft.rfft(env_x)), len(x))
        lag = int(np.argmax(xc))
        lag = lag - len(x) if lag > len(x) // 2 else lag
        assert abs(lag / FS - 0.004) <= 0.0005
        assert abs(phase_at(x, y, 500.0, spec.band_edges)) < 1e-6

    def test_correlated_group_delay_mode(self):
        spec = NoiseSpec(bandwidth=50.0, interaural_mode=Correlated(1.0, 0.004))
        m = mother_noise(spec, 11)
        assert np.allclose(apply_group_delay(m.left, 0.004, 500.0), m.right, atol=1e-12)

    def test_empty(self):
        with pytest.raises(ValueError):
            apply_group_delay(np.array([]), 0.001, 500.0)


class TestTone:
    def test_s0(self):
        t = gen_tone(ToneSpec(phase_mode=TonePhase.S0))
        assert np.array_equal(t.left, t.right)

    def test_spi(self):
        t = gen_tone(ToneSpec(phase_mode="SPi"))
        assert np.array_equal(t.right, -t.left)

    def test_level(self):
        t = gen_tone(ToneSpec(level_db_spl=65.0))
        mid = t.left[960:-960]
        rms = math.sqrt(np.mean(mid ** 2))
        assert rms == pytest.approx(10 ** ((65.0 - 100.0) / 20), rel=1e-3)

    def test_duration(self):
        assert len(gen_tone(ToneSpec())) == 14400


class TestInterval:
    def test_noise_only(self):
        spec = NoiseSpec()
        a = make_interval(spec, None, 3)
        b = gen_bandpass_noise(spec, 3)
        assert np.array_equal(a.left, b.left)

    def test_tone_onset_and_content(self):
        spec = NoiseSpec()
        tone = ToneSpec(level_db_spl=60.0)
        assert tone_onset(spec, tone) == 1920
        diff = make_interval(spec, tone, 8).left - make_interval(spec, None, 8).left
        t = gen_tone(tone).left
        assert np.allclose(diff[1920:1920 + len(t)], t, atol=1e-12)
        assert np.all(diff[:1920] == 0) and np.all(diff[1920 + len(t):] == 0)

    def test_silent_tone(self):
        spec = NoiseSpec()
        a = make_interval(spec, ToneSpec(level_db_spl=-np.inf), 4)
        b = make_interval(spec, None, 4)
        assert np.array_equal(a.left, b.left) and np.array_equal(a.right, b.right)

    def test_tone_too_long(self):
        with pytest.raises(ValueError):
            make_interval(NoiseSpec(duration_s=0.2, ramp_s=0.02), ToneSpec(duration_s=0.3))


def test_wav_export(tmp_path):
    s = make_interval(NoiseSpec(), ToneSpec(), 0)
    path = tmp_path / "x.wav"
    write_wav(path, s)
    rate, data = wavfile.read(path)
    assert rate == 48000 and data.shape == (18240, 2) and data.dtype == np.float32
    assert np.allclose(data[:, 1], s.right.astype(np.float32))
