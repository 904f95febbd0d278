import numpy as np
import pytest

from rvk import augment as aug
from rvk.dsp import Waveform, istft, multi_res_stft_loss, stft, _window
from rvk.pitch import F0Config, estimate_f0
from rvk.toydata import envelope_peaked_tone, harmonic_tone

SR = 24000


def sawtooth(f0=220.0, seconds=1.0, amp=0.8):
    t = np.arange(int(seconds * SR)) / SR
    return Waveform(amp * (2 * ((f0 * t) % 1.0) - 1.0), SR)


def noise(seconds=1.0, seed=0, amp=0.5):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(int(seconds * SR))
    return Waveform(amp * x / np.max(np.abs(x)), SR)


def normalized_power(x):
    samples = aug._normalize(x.samples)
    spec = stft(Waveform(samples, SR), aug.DEFAULT_STFT)
    wsum = np.sum(_window(aug.DEFAULT_STFT))
    return np.abs(spec.data / wsum) ** 2, samples


class TestAnalyzeHarmonics:
    def test_composition_identity(self):
        for x in (sawtooth(), noise(seed=1), harmonic_tone(160.0)):
            d = aug.analyze_harmonics(x)
            power, _ = normalized_power(x)
            recon = d.envelope * d.aperiodicity
            assert np.max(np.abs(recon - power)) <= 1e-12 * max(power.max(), 1e-12)

    def test_envelope_smoother_than_power(self):
        d = aug.analyze_harmonics(sawtooth())
        power, _ = normalized_power(sawtooth())
        tv_env = np.sum(np.abs(np.diff(d.envelope, axis=1)))
        tv_pow = np.sum(np.abs(np.diff(power, axis=1)))
        assert tv_env / tv_pow < 0.5

    def test_white_noise_ratio_unbiased(self):
        medians = []
        for seed in range(20):
            d = aug.analyze_harmonics(noise(0.25, seed=seed))
            medians.append(np.median(d.aperiodicity))
        assert all(0.2 <= m <= 5.0 for m in medians)

    def test_aperiodicity_clip_bound(self):
        d = aug.analyze_harmonics(sawtooth())
        assert d.aperiodicity.min() >= 0.0
        assert d.aperiodicity.max() <= 1e3


class TestSynthesizeHarmonics:
    def test_roundtrip(self):
        x = sawtooth()
        d = aug.analyze_harmonics(x)
        y = aug.synthesize_harmonics(d)
        ref = aug._normalize(x.samples)
        assert len(y) == len(x)
        assert np.max(np.abs(y.samples[512:-512] - ref[512:-512])) < 1e-5

    def test_zero_envelope_is_silence(self):
        from dataclasses import replace
        d = aug.analyze_harmonics(sawtooth(seconds=0.3))
        silent = replace(d, envelope=np.zeros_like(d.envelope))
        assert np.all(aug.synthesize_harmonics(silent).samples == 0)

    def test_doubled_envelope_scales_amplitude_sqrt2(self):
        from dataclasses import replace
        x = harmonic_tone(200.0, 0.5)
        d = aug.analyze_harmonics(x)
        y1 = aug.synthesize_harmonics(d)
        y2 = aug.synthesize_harmonics(replace(d, envelope=2.0 * d.envelope))
        r1 = np.sqrt(np.mean(y1.samples[512:-512] ** 2))
        r2 = np.sqrt(np.mean(y2.samples[512:-512] ** 2))
        assert abs(r2 / r1 - np.sqrt(2.0)) < 0.01 * np.sqrt(2.0)


class TestHarmonicNoise:
    def test_beta_zero_is_bitwise_plain_resynthesis(self):
        x = sawtooth()
        base = aug.synthesize_harmonics(aug.analyze_harmonics(x))
        out = aug.harmonic_noise(x, 1e-4, 0.0, np.random.default_rng(5))
        assert np.array_equal(out.samples, base.samples)

    def test_alpha_above_max_envelope_is_degenerate(self):
        x = sawtooth()
        base = aug.synthesize_harmonics(aug.analyze_harmonics(x))
        out = aug.harmonic_noise(x, np.inf, 8e-5, np.random.default_rng(6))
        assert np.array_equal(out.samples, base.samples)

    def test_modified_set_is_exactly_the_thresholded_cells(self):
        x = sawtooth()
        d = aug.analyze_harmonics(x)
        rng = np.random.default_rng(7)
        noise_draw = rng.random(d.envelope.shape)
        mask = d.envelope >= 1e-4
        perturbed = np.where(mask, d.envelope + 8e-5 * noise_draw, d.envelope)
        changed = perturbed != d.envelope
        assert mask.any() and not mask.all()
        assert np.array_equal(changed, mask)
        assert np.max(np.abs(perturbed - d.envelope)) <= 8e-5

    def test_threshold_monotonicity(self):
        d = aug.analyze_harmonics(sawtooth())
        loose = d.envelope >= 1e-4
        tight = d.envelope >= 1e-3
        assert np.all(loose[tight])  # tight set is a subset of loose

    def test_grid_case_changes_audio(self):
        x = sawtooth()
        base = aug.synthesize_harmonics(aug.analyze_harmonics(x))
        out = aug.harmonic_noise(x, 1e-4, 8e-5, np.random.default_rng(8))
        assert not np.array_equal(out.samples, base.samples)
        assert len(out) == len(x)


class TestPhaseNoise:
    def test_alpha_zero_is_bitwise_polar_roundtrip(self):
        x = sawtooth()
        out = aug.phase_noise(x, 0.0, np.random.default_rng(1))
        base = aug.polar_roundtrip(x)
        assert np.array_equal(out.samples, base.samples)

    def test_alpha_zero_matches_plain_istft(self):
        x = noise(0.5, seed=2)
        out = aug.phase_noise(x, 0.0, np.random.default_rng(1))
        plain = istft(stft(x, aug.DEFAULT_STFT), aug.DEFAULT_STFT, length=len(x))
        assert np.max(np.abs(out.samples - plain.samples)) < 1e-12

    def test_magnitudes_untouched_before_inversion(self):
        x = sawtooth()
        mag, phase = aug.phase_noise_spectrogram(x, 1.3, np.random.default_rng(3))
        spec = stft(Waveform(x.samples.astype(np.float64), SR), aug.DEFAULT_STFT)
        assert np.array_equal(mag, np.abs(spec.data))
        recombined = mag * (np.cos(phase) + 1j * np.sin(phase))
        assert np.allclose(np.abs(recombined), mag, rtol=1e-12, atol=0)

    def test_full_alpha_is_audible_in_the_loss(self):
        x = Waveform(0.8 * np.sin(2 * np.pi * 440 * np.arange(SR) / SR), SR)
        out = aug.phase_noise(x, 1.0, np.random.default_rng(4))
        assert len(out) == len(x)
        assert multi_res_stft_loss(x, out).total > 0


class TestHarmonicShift:
    def test_identity_parameters_preserve_f0(self):
        x = harmonic_tone(220.0, 1.0, n_harmonics=6)
        d = aug.analyze_harmonics(x)
        med = float(np.median(d.f0.values[d.f0.values > 0]))
        p = aug.HsParams(formant_ratio=1.0, pitch_median=med, pitch_range_factor=1.0)
        y = aug.harmonic_shift(x, p, np.random.default_rng(3))
        f0 = estimate_f0(y, F0Config())
        out_med = np.median(f0.values[f0.values > 0])
        assert abs(out_med - 220.0) / 220.0 < 0.05

    def test_pitch_median_remap(self):
        x = harmonic_tone(150.0, 1.0, n_harmonics=8)
        p = aug.HsParams(formant_ratio=1.0, pitch_median=300.0, pitch_range_factor=1.0)
        y = aug.harmonic_shift(x, p, np.random.default_rng(4))
        f0 = estimate_f0(y, F0Config())
        out_med = np.median(f0.values[f0.values > 0])
        assert abs(out_med - 300.0) / 300.0 < 0.05

    def test_formant_ratio_moves_envelope_peak(self):
        x = envelope_peaked_tone(150.0, 2000.0, 1.0)
        p = aug.HsParams(formant_ratio=1.1, pitch_median=150.0, pitch_range_factor=1.0)
        y = aug.harmonic_shift(x, p, np.random.default_rng(5))
        d = aug.analyze_harmonics(y)
        voiced = d.f0.values > 0
        env = np.median(d.envelope[voiced], axis=0)
        peak_hz = np.argmax(env) * SR / 1024
        assert abs(peak_hz - 2200.0) / 2200.0 < 0.05

    def test_unvoiced_input_resynthesizes_as_noise(self):
        x = noise(0.5, seed=9)
        p = aug.HsParams()
        y = aug.harmonic_shift(x, p, np.random.default_rng(6))
        assert len(y) == len(x)
        assert np.all(np.isfinite(y.samples))
        f0 = estimate_f0(y, F0Config())
        assert np.mean(f0.values == 0) >= 0.9


class TestSampleParams:
    def test_grid_coverage_10000_draws(self):
        rng = np.random.default_rng(0)
        hn_alphas, hn_betas, pn_alphas = set(), set(), set()
        for _ in range(10_000):
            for p in aug.sample_params(aug.AugmentPolicy("use_all"), rng):
                if p.method == "hn":
                    hn_alphas.add(p.hn.alpha)
                    hn_betas.add(p.hn.beta)
                elif p.method == "pn":
                    pn_alphas.add(p.pn.alpha)
                else:
                    assert 0.9 <= p.hs.formant_ratio <= 1.1
                    assert 100.0 <= p.hs.pitch_median <= 500.0
                    assert 0.8 <= p.hs.pitch_range_factor <= 1.2
        assert hn_alphas == set(aug.HN_ALPHA_GRID)
        assert hn_betas == set(aug.HN_BETA_GRID)
        assert pn_alphas == set(aug.PN_ALPHA_GRID)

    def test_use_all_is_one_of_each(self):
        params = aug.sample_params(aug.AugmentPolicy("use_all"),
                                   np.random.default_rng(1))
        assert [p.method for p in params] == ["hs", "hn", "pn"]

    def test_random_pick_is_single(self):
        methods = set()
        for seed in range(40):
            params = aug.sample_params(aug.AugmentPolicy("random_pick"),
                                       np.random.default_rng(seed))
            assert len(params) == 1
            methods.add(params[0].method)
        assert methods == {"hs", "hn", "pn"}

    def test_same_seed_same_params(self):
        a = aug.sample_params(aug.AugmentPolicy("use_all"), np.random.default_rng(9))
        b = aug.sample_params(aug.AugmentPolicy("use_all"), np.random.default_rng(9))
        assert a == b

    def test_none_policy_empty(self):
        assert aug.sample_params(aug.AugmentPolicy("none"),
                                 np.random.default_rng(0)) == []


class TestAugmentationProperties:
    def cases(self):
        x = harmonic_tone(180.0, 0.5)
        rng = np.random.default_rng(11)
        for params in aug.sample_params(aug.AugmentPolicy("use_all"), rng):
            yield x, params

    def test_length_and_rate_preserved(self):
        for x, params in self.cases():
            y = aug.apply_augmentation(x, params)
            assert len(y) == len(x)
            assert y.sample_rate == x.sample_rate

    def test_deterministic_given_params(self):
        for x, params in self.cases():
            a = aug.apply_augmentation(x, params)
            b = aug.apply_augmentation(x, params)
            assert np.array_equal(a.samples, b.samples)

    def test_outputs_finite_and_bounded(self):
        signals = [harmonic_tone(140.0, 0.5), sawtooth(300.0, 0.5), noise(0.5, 3)]
        for seed, x in enumerate(signals):
            rng = np.random.default_rng(100 + seed)
            for params in aug.sample_params(aug.AugmentPolicy("use_all"), rng):
                y = aug.apply_augmentation(x, params)
                assert np.all(np.isfinite(y.samples))
                assert np.max(np.abs(y.samples)) <= 1.5
