import numpy as np
import pytest

from rvk import pqmf
from rvk.dsp import Waveform
from rvk.errors import InvalidInput

SR = 24000


def sine(freq, seconds=1.0, amp=0.8):
    t = np.arange(int(seconds * SR)) / SR
    return Waveform(amp * np.sin(2 * np.pi * freq * t), SR)


@pytest.fixture(scope="module")
def bank():
    return pqmf.design_bank()


class TestDesign:
    def test_default_shapes(self, bank):
        assert bank.analysis_filters.shape == (4, 63)
        assert bank.synthesis_filters.shape == (4, 63)
        assert bank.prototype.shape == (63,)

    def test_prototype_symmetry(self, bank):
        assert np.array_equal(bank.prototype, bank.prototype[::-1])

    def test_synthesis_is_scaled_reversed_analysis(self, bank):
        assert np.array_equal(bank.synthesis_filters,
                              4 * bank.analysis_filters[:, ::-1])

    def test_band_frequency_response_peaks(self, bank):
        # band k peaks inside [2k, 2k+2] * Fs/16; the outer bands peak at
        # their DC/Nyquist edge where the two modulated prototype copies add
        freqs = np.fft.rfftfreq(8192, 1 / SR)
        for k in range(4):
            response = np.abs(np.fft.rfft(bank.analysis_filters[k], 8192))
            peak = freqs[np.argmax(response)]
            assert 2 * k * SR / 16 <= peak <= (2 * k + 2) * SR / 16

    def test_invalid_parameters_rejected(self):
        with pytest.raises(InvalidInput):
            pqmf.design_bank(cutoff_ratio=0.3)  # >= 1/n_bands
        with pytest.raises(InvalidInput):
            pqmf.design_bank(taps=63)
        with pytest.raises(InvalidInput):
            pqmf.design_bank(n_bands=1)


class TestAnalysis:
    def test_zero_input(self, bank):
        sub = pqmf.analysis(Waveform(np.zeros(4096), SR), bank)
        assert sub.bands.shape == (4, 1024)
        assert np.all(sub.bands == 0)

    def test_low_sine_lands_in_band0(self, bank):
        sub = pqmf.analysis(sine(500.0), bank)
        energy = np.sum(sub.bands ** 2, axis=1)
        for k in (1, 2, 3):
            assert 10 * np.log10(energy[0] / energy[k]) >= 30

    def test_high_sine_lands_in_band3(self, bank):
        sub = pqmf.analysis(sine(10_000.0), bank)
        energy = np.sum(sub.bands ** 2, axis=1)
        for k in (0, 1, 2):
            assert 10 * np.log10(energy[3] / energy[k]) >= 30

    def test_unaligned_length_padded(self, bank):
        sub = pqmf.analysis(Waveform(np.ones(1001) * 0.1, SR), bank)
        assert sub.bands.shape == (4, 251)


class TestSynthesis:
    def test_roundtrip_snr_noise(self, bank):
        x = Waveform(0.5 * np.random.default_rng(0).standard_normal(SR), SR)
        assert pqmf.roundtrip_snr(x, bank) >= 30.0

    def test_zero_bands(self, bank):
        sub = pqmf.SubbandSignals(np.zeros((4, 256)), SR)
        assert np.all(pqmf.synthesis(sub, bank).samples == 0)

    def test_impulse_roundtrip_peak_at_taps_delay(self, bank):
        x = np.zeros(4096)
        x[1000] = 1.0
        y = pqmf.synthesis(pqmf.analysis(Waveform(x, SR), bank), bank).samples
        peak = np.argmax(np.abs(y))
        assert peak == 1000 + bank.taps
        assert abs(y[peak] - 1.0) < 0.05

    def test_shape_mismatch_rejected(self, bank):
        with pytest.raises(InvalidInput):
            pqmf.synthesis(pqmf.SubbandSignals(np.zeros((3, 100)), SR), bank)

    def test_aliasing_cancellation_needs_all_bands(self, bank):
        # single-band partial reconstructions alias badly; their sum is near-PR
        x = Waveform(0.5 * np.random.default_rng(1).standard_normal(8192), SR)
        sub = pqmf.analysis(x, bank)
        d = bank.taps
        ref = x.samples[:-d][d:]
        partial_snrs = []
        for k in range(4):
            solo = np.zeros_like(sub.bands)
            solo[k] = sub.bands[k]
            y = pqmf.synthesis(pqmf.SubbandSignals(solo, SR), bank).samples
            err = ref - y[d:d + len(x) - d][d:]
            partial_snrs.append(10 * np.log10(np.sum(ref ** 2) / np.sum(err ** 2)))
        assert max(partial_snrs) < 10.0
        assert pqmf.roundtrip_snr(x, bank) >= 30.0

    def test_band_energy_within_3db_of_input(self, bank):
        # energy in the continuous-time sense: sum(x^2) / rate
        x = Waveform(0.5 * np.random.default_rng(2).standard_normal(SR), SR)
        sub = pqmf.analysis(x, bank)
        band_rate = SR / bank.n_bands
        e_bands = float(np.sum(sub.bands ** 2)) / band_rate
        e_input = float(np.sum(x.samples ** 2)) / SR
        assert abs(10 * np.log10(e_bands / e_input)) <= 3.0


class TestGradients:
    def test_synthesis_adjoint_matches_finite_differences(self, bank):
        rng = np.random.default_rng(3)
        bands = rng.standard_normal((4, 64))
        proj = rng.standard_normal(256)

        def loss(b):
            return float(np.sum(
                pqmf.synthesis(pqmf.SubbandSignals(b, SR), bank).samples * proj))

        grad = pqmf.synthesis_adjoint(proj, bank, 64)
        eps = 1e-6
        for k, j in [(0, 0), (1, 10), (2, 33), (3, 63)]:
            bands[k, j] += eps
            lp = loss(bands)
            bands[k, j] -= 2 * eps
            lm = loss(bands)
            bands[k, j] += eps
            assert abs((lp - lm) / (2 * eps) - grad[k, j]) < 1e-8
