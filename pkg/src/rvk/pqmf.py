"""Near-perfect-reconstruction pseudo-QMF filterbank.

A Kaiser-windowed lowpass prototype is cosine-modulated into n_bands
analysis filters; synthesis filters are the time-reversed analysis
filters scaled by n_bands.  Filtering is plain direct convolution with
no internal delay compensation: a full analysis/synthesis round trip
lags the input by exactly `taps` samples.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal.windows import kaiser

from .dsp import Waveform
from .errors import InvalidInput


@dataclass(frozen=True)
class PqmfBank:
    n_bands: int
    taps: int
    cutoff_ratio: float
    kaiser_beta: float
    prototype: np.ndarray          # taps + 1 coefficients
    analysis_filters: np.ndarray   # n_bands x (taps + 1)
    synthesis_filters: np.ndarray  # time-reversed analysis, scaled by n_bands


@dataclass(frozen=True)
class SubbandSignals:
    """Decimated band signals, bands x (len/n_bands).  Band 0 is the lowest."""

    bands: np.ndarray
    sample_rate: int  # rate of the full-band source

    @property
    def n_bands(self):
        return self.bands.shape[0]


def design_prototype(taps: int, cutoff_ratio: float, beta: float) -> np.ndarray:
    """Kaiser-windowed ideal lowpass with cutoff at cutoff_ratio * Nyquist."""
    if taps % 2 != 0:
        raise InvalidInput("taps must be even")
    n = np.arange(taps + 1) - 0.5 * taps
    with np.errstate(invalid="ignore"):
        h = np.sin(np.pi * cutoff_ratio * n) / (np.pi * n)
    h[taps // 2] = cutoff_ratio  # limit of sinc at n = 0
    return h * kaiser(taps + 1, beta)


def design_bank(n_bands: int = 4, taps: int = 62, cutoff_ratio: float = 0.142,
                kaiser_beta: float = 9.0) -> PqmfBank:
    """Cosine-modulated filterbank from a shared lowpass prototype.

    Band k's modulation phase is (-1)^k * pi/4, the classic choice that
    makes adjacent-band aliasing cancel in the synthesis sum.
    """
    if n_bands < 2:
        raise InvalidInput("need at least 2 bands")
    if not (0.0 < cutoff_ratio < 1.0 / n_bands):
        raise InvalidInput(f"cutoff_ratio must lie in (0, 1/{n_bands})")
    proto = design_prototype(taps, cutoff_ratio, kaiser_beta)
    n = np.arange(taps + 1) - 0.5 * taps
    analysis = np.empty((n_bands, taps + 1))
    for k in range(n_bands):
        phase = (-1) ** k * np.pi / 4.0
        analysis[k] = 2.0 * proto * np.cos(
            (2 * k + 1) * np.pi / (2 * n_bands) * n + phase)
    synthesis = n_bands * analysis[:, ::-1]
    return PqmfBank(n_bands, taps, cutoff_ratio, kaiser_beta,
                    proto, analysis, synthesis)


def analysis(x: Waveform, bank: PqmfBank) -> SubbandSignals:
    """Split into n_bands critically decimated sub-band signals.

    Input shorter than a multiple of n_bands is zero-padded at the end.
    """
    m = bank.n_bands
    samples = x.samples
    rem = (-len(samples)) % m
    if rem:
        samples = np.concatenate([samples, np.zeros(rem, dtype=samples.dtype)])
    bands = np.empty((m, samples.size // m), dtype=samples.dtype)
    for k in range(m):
        filtered = np.convolve(samples, bank.analysis_filters[k])[:samples.size]
        bands[k] = filtered[::m]
    return SubbandSignals(bands, x.sample_rate)


def synthesis(bands: SubbandSignals, bank: PqmfBank) -> Waveform:
    """Recombine sub-bands to the full-band signal (delayed by `taps` samples)."""
    if bands.bands.ndim != 2 or bands.bands.shape[0] != bank.n_bands:
        raise InvalidInput(f"expected {bank.n_bands} bands, got shape {bands.bands.shape}")
    m = bank.n_bands
    band_len = bands.bands.shape[1]
    out_len = m * band_len
    y = np.zeros(out_len, dtype=bands.bands.dtype)
    up = np.zeros(out_len, dtype=bands.bands.dtype)
    for k in range(m):
        up[:] = 0.0
        up[::m] = bands.bands[k]
        y += np.convolve(up, bank.synthesis_filters[k].astype(bands.bands.dtype))[:out_len]
    return Waveform(y, bands.sample_rate)


def synthesis_adjoint(grad_y: np.ndarray, bank: PqmfBank, band_len: int) -> np.ndarray:
    """Gradient of `synthesis` with respect to the band signals."""
    m = bank.n_bands
    taps = bank.taps
    grads = np.empty((m, band_len), dtype=grad_y.dtype)
    for k in range(m):
        g = bank.synthesis_filters[k].astype(grad_y.dtype)
        corr = np.convolve(grad_y, g[::-1])[taps:taps + m * band_len]
        grads[k] = corr[::m]
    return grads


def roundtrip_snr(x: Waveform, bank: PqmfBank) -> float:
    """Delay-compensated SNR (dB) of synthesis(analysis(x)) against x."""
    y = synthesis(analysis(x, bank), bank).samples
    d = bank.taps
    ref = x.samples[:len(y) - d]
    err = ref - y[d:d + ref.size]
    # exclude the filter warm-up region at both ends
    ref = ref[d:ref.size - d]
    err = err[d:err.size - d]
    return float(10.0 * np.log10(np.sum(ref * ref) / max(np.sum(err * err), 1e-300)))
