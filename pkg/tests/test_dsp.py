import numpy as np
import pytest

from rvk.dsp import (LOG_FLOOR, ComplexSpectrogram, StftConfig, Waveform,
                     hz_to_mel, istft, log_mel, mel_filterbank, mel_to_hz,
                     mel_from_magnitude, multi_res_stft_loss,
                     multi_res_stft_loss_grad, n_frames_for, stft, _window)
from rvk.errors import InvalidInput

SR = 24000
CFG = StftConfig(1024, 256, 1024)


def sine(freq, seconds=1.0, amp=1.0):
    t = np.arange(int(seconds * SR)) / SR
    return Waveform(amp * np.sin(2 * np.pi * freq * t), SR)


def noise(n, seed=0, amp=0.5):
    return Waveform(amp * np.random.default_rng(seed).standard_normal(n), SR)


class TestStft:
    def test_sine_peak_bin_matches_direct_dft(self):
        # oracle: one windowed frame through an explicit DFT matrix
        x = sine(440.0)
        spec = stft(x, CFG)
        frame = x.samples[10 * 256 - 512:10 * 256 + 512] * _window(CFG)
        k = np.arange(513)[:, None]
        n = np.arange(1024)[None, :]
        dft = np.exp(-2j * np.pi * k * n / 1024) @ frame
        assert np.argmax(np.abs(dft)) == 19
        for t in range(5, spec.n_frames - 5):
            assert np.argmax(np.abs(spec.data[t])) == 19

    def test_zero_input_gives_zero_spectrogram(self):
        spec = stft(Waveform(np.zeros(1024), SR), CFG)
        assert np.all(spec.data == 0)

    def test_parseval_per_frame(self):
        # windowed-frame energy must equal the full-spectrum energy / N
        x = noise(8192, seed=1)
        spec = stft(x, CFG)
        pad = np.pad(x.samples, 512, mode="reflect")
        win = _window(CFG)
        for t in range(3, spec.n_frames - 3):
            frame = pad[t * 256:t * 256 + 1024] * win
            one_sided = np.abs(spec.data[t]) ** 2
            full = one_sided[0] + 2 * one_sided[1:-1].sum() + one_sided[-1]
            time_energy = np.sum(frame * frame)
            assert abs(full / 1024 - time_energy) <= 1e-10 * time_energy

    def test_frame_count_formula(self):
        for n in (1024, 24000, 24001, 25600, 300):
            x = Waveform(np.ones(n) * 0.1, SR)
            assert stft(x, CFG).n_frames == n // 256 + 1 == n_frames_for(n, 256)

    def test_empty_input_rejected(self):
        with pytest.raises(InvalidInput):
            stft(Waveform(np.zeros(0), SR), CFG)

    def test_linearity(self):
        x, y = noise(4096, 2), noise(4096, 3)
        a, b = 1.7, -0.3
        combo = Waveform(a * x.samples + b * y.samples, SR)
        lhs = stft(combo, CFG).data
        rhs = a * stft(x, CFG).data + b * stft(y, CFG).data
        assert np.max(np.abs(lhs - rhs)) < 1e-9 * np.max(np.abs(rhs))


class TestIstft:
    def test_roundtrip_noise(self):
        x = noise(SR, seed=4)
        y = istft(stft(x, CFG), CFG, length=len(x))
        err = np.abs(y.samples[512:-512] - x.samples[512:-512])
        assert err.max() < 1e-6

    def test_zero_spectrogram(self):
        spec = ComplexSpectrogram(np.zeros((5, 513), complex), CFG, SR)
        assert np.all(istft(spec, CFG).samples == 0)

    def test_single_frame_sine_segment(self):
        x = sine(750.0, seconds=0.2)
        y = istft(stft(x, CFG), CFG, length=len(x))
        assert np.max(np.abs(y.samples[512:-512] - x.samples[512:-512])) < 1e-6

    def test_config_mismatch_rejected(self):
        spec = stft(noise(4096), CFG)
        with pytest.raises(InvalidInput):
            istft(spec, StftConfig(512, 128, 512))

    def test_roundtrip_many_lengths(self):
        for n in (4096, 5000, 4097):
            x = noise(n, seed=n)
            y = istft(stft(x, CFG), CFG, length=n)
            assert np.max(np.abs(y.samples[512:-512] - x.samples[512:-512])) < 1e-6

    def test_cola_violation_rejected(self):
        with pytest.raises(InvalidInput):
            StftConfig(1024, 1024, 1024)  # hann with no overlap


class TestMelFilterbank:
    def test_shape(self):
        fb = mel_filterbank(80, CFG, SR)
        assert fb.weights.shape == (80, 513)

    def test_single_band_peaks_at_mel_midpoint(self):
        fb = mel_filterbank(1, CFG, SR, 0.0, 12000.0)
        center_hz = mel_to_hz((hz_to_mel(0.0) + hz_to_mel(12000.0)) / 2)
        peak_bin = np.argmax(fb.weights[0])
        assert abs(peak_bin * SR / 1024 - center_hz) <= SR / 1024

    def test_rows_zero_outside_edges(self):
        fb = mel_filterbank(80, CFG, SR)
        edges = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(12000.0), 82))
        bin_freqs = np.arange(513) * SR / 1024
        for m in range(80):
            outside = (bin_freqs < edges[m]) | (bin_freqs > edges[m + 2])
            assert np.all(fb.weights[m][outside] == 0)
            assert fb.weights[m].max() > 0

    def test_degenerate_edges_rejected(self):
        with pytest.raises(InvalidInput):
            mel_filterbank(80, CFG, SR, 5000.0, 5000.0)
        with pytest.raises(InvalidInput):
            mel_filterbank(80, CFG, SR, 0.0, 20000.0)


class TestLogMel:
    def test_silence_is_log_floor(self):
        fb = mel_filterbank(80, CFG, SR)
        mel = log_mel(Waveform(np.zeros(4096), SR), CFG, fb)
        assert np.all(mel.data == np.log(LOG_FLOOR))

    def test_sine_argmax_band_nearest_center(self):
        fb = mel_filterbank(80, CFG, SR)
        mel = log_mel(sine(440.0), CFG, fb)
        expected = int(np.argmin(np.abs(fb.center_freqs - 440.0)))
        # the outermost frame at each end is centered on the reflect-padding
        # junction, whose corner splatters energy downward; every frame of
        # actual sine content must hit the nearest-center band
        assert np.all(np.argmax(mel.data[:, 1:-1], axis=0) == expected)

    def test_frame_count_24000_samples(self):
        fb = mel_filterbank(80, CFG, SR)
        assert log_mel(sine(100.0), CFG, fb).n_frames == 94

    def test_rate_mismatch_rejected(self):
        fb = mel_filterbank(80, CFG, SR)
        with pytest.raises(InvalidInput):
            log_mel(Waveform(np.zeros(4096), 16000), CFG, fb)

    def test_phase_invariance_at_spectrogram_level(self):
        fb = mel_filterbank(80, CFG, SR)
        spec = stft(noise(8192, seed=7), CFG)
        mag = np.abs(spec.data)
        phases = np.random.default_rng(8).uniform(0, 2 * np.pi, mag.shape)
        scrambled = np.abs(mag * np.exp(1j * phases))
        a = mel_from_magnitude(mag, fb)
        b = mel_from_magnitude(scrambled, fb)
        assert np.max(np.abs(a - b)) < 1e-6


class TestMultiResStftLoss:
    def test_identity_is_zero(self):
        x = noise(8192, seed=9)
        rep = multi_res_stft_loss(x, x)
        assert rep.total == 0.0

    def test_zero_estimate_gives_unit_spectral_convergence(self):
        x = sine(440.0, seconds=0.5)
        zero = Waveform(np.zeros(len(x)), SR)
        rep = multi_res_stft_loss(x, zero)
        assert rep.spectral_convergence == pytest.approx(1.0, abs=1e-12)
        for sc, _ in rep.per_resolution:
            assert sc == pytest.approx(1.0, abs=1e-12)

    def test_asymmetric_in_arguments(self):
        x = sine(300.0, seconds=0.4)
        y = noise(len(x), seed=10)
        assert multi_res_stft_loss(x, y).total != multi_res_stft_loss(y, x).total

    def test_nonnegative_and_zero_iff_equal_magnitudes(self):
        for seed in range(5):
            x = noise(4096, seed=seed)
            y = noise(4096, seed=seed + 100)
            assert multi_res_stft_loss(x, y).total > 0

    def test_length_mismatch_rejected(self):
        with pytest.raises(InvalidInput):
            multi_res_stft_loss(noise(4096), noise(4097))

    def test_gradient_matches_finite_differences(self):
        res = (StftConfig(64, 16, 64),)
        x = np.random.default_rng(11).standard_normal(256)
        y = np.random.default_rng(12).standard_normal(256)
        rep, grad = multi_res_stft_loss_grad(x, y, res)
        eps = 1e-6
        idx = np.random.default_rng(13).choice(256, 24, replace=False)
        for i in idx:
            y[i] += eps
            lp = multi_res_stft_loss_grad(x, y, res)[0].total
            y[i] -= 2 * eps
            lm = multi_res_stft_loss_grad(x, y, res)[0].total
            y[i] += eps
            num = (lp - lm) / (2 * eps)
            assert abs(num - grad[i]) < 1e-5 * max(1.0, abs(num))
