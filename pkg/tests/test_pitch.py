import numpy as np
import pytest

from rvk.dsp import StftConfig, Waveform, log_mel, mel_filterbank
from rvk.errors import InvalidInput
from rvk.pitch import F0Config, F0Contour, estimate_f0, f0_rmse, uv_mask
from rvk.toydata import harmonic_tone

SR = 24000


def sine(freq, seconds=1.0, amp=0.8):
    t = np.arange(int(seconds * SR)) / SR
    return Waveform(amp * np.sin(2 * np.pi * freq * t), SR)


class TestEstimateF0:
    def test_pure_sine(self):
        f0 = estimate_f0(sine(220.0), F0Config())
        voiced = f0.values[f0.values > 0]
        assert abs(np.median(voiced) - 220.0) <= 3.0
        assert np.mean(f0.values > 0) >= 0.95

    def test_white_noise_unvoiced(self):
        x = Waveform(0.5 * np.random.default_rng(0).standard_normal(SR), SR)
        f0 = estimate_f0(x, F0Config())
        assert np.mean(f0.values == 0) >= 0.95

    def test_silence_all_unvoiced(self):
        f0 = estimate_f0(Waveform(np.zeros(8192), SR), F0Config())
        assert np.all(f0.values == 0)

    def test_too_short_rejected(self):
        with pytest.raises(InvalidInput):
            estimate_f0(Waveform(np.zeros(512), SR), F0Config())

    def test_frame_grid_matches_log_mel(self):
        cfg = StftConfig(1024, 256, 1024)
        fb = mel_filterbank(80, cfg, SR)
        for n in (4096, 24000, 10_001):
            x = Waveform(0.3 * np.random.default_rng(n).standard_normal(n), SR)
            assert estimate_f0(x, F0Config()).n_frames == log_mel(x, cfg, fb).n_frames

    def test_octave_sanity_20_seeds(self):
        for i in range(20):
            rng = np.random.default_rng(500 + i)
            truth = rng.uniform(80.0, 400.0)
            x = harmonic_tone(truth, 1.0, n_harmonics=7, rng=rng)
            f0 = estimate_f0(x, F0Config())
            med = np.median(f0.values[f0.values > 0])
            assert abs(med - truth) / truth < 0.05

    def test_voiced_values_clamped_to_search_range(self):
        cfg = F0Config()
        f0 = estimate_f0(harmonic_tone(150.0, 0.5), cfg)
        voiced = f0.values[f0.values > 0]
        assert np.all((voiced >= cfg.f0_min) & (voiced <= cfg.f0_max))


class TestUvMask:
    def test_basic_pattern(self):
        c = F0Contour(np.array([0.0, 100.0, 0.0]), 256, SR)
        assert uv_mask(c).flags.tolist() == [False, True, False]

    def test_all_zero(self):
        c = F0Contour(np.zeros(5), 256, SR)
        assert not uv_mask(c).flags.any()

    def test_mixed(self):
        c = F0Contour(np.array([120.5, 121.0, 0.0, 130.0]), 256, SR)
        assert uv_mask(c).flags.tolist() == [True, True, False, True]

    def test_depends_only_on_zero_pattern(self):
        a = F0Contour(np.array([0.0, 100.0, 300.0, 0.0]), 256, SR)
        b = F0Contour(np.array([0.0, 555.0, 50.0, 0.0]), 256, SR)
        assert np.array_equal(uv_mask(a).flags, uv_mask(b).flags)


class TestF0Rmse:
    def c(self, values):
        return F0Contour(np.asarray(values, float), 256, SR)

    def test_identity_zero(self):
        c = self.c([200.0, 0.0, 150.0, 300.0])
        assert f0_rmse(c, c) == 0.0

    def test_constant_offset(self):
        ref = self.c([200.0] * 10)
        test = self.c([210.0] * 10)
        assert f0_rmse(ref, test) == pytest.approx(10.0)

    def test_only_commonly_voiced_frames_count(self):
        ref = self.c([200.0, 0.0, 300.0])
        test = self.c([210.0, 400.0, 0.0])
        rmse, count = f0_rmse(ref, test, return_count=True)
        assert rmse == pytest.approx(10.0)
        assert count == 1

    def test_no_common_voiced_returns_zero(self):
        rmse, count = f0_rmse(self.c([0.0, 100.0]), self.c([100.0, 0.0]),
                              return_count=True)
        assert rmse == 0.0 and count == 0

    def test_frame_count_mismatch_rejected(self):
        with pytest.raises(InvalidInput):
            f0_rmse(self.c([1.0]), self.c([1.0, 2.0]))
