"""Spectral analysis/synthesis primitives.

Everything here is a pure function of its inputs: short-time Fourier
transform and its inverse, mel filterbank construction, log-mel
extraction, and the multi-resolution STFT loss used as the auxiliary
training objective.  All routines follow the waveform's dtype, so tests
can run them at float64 while training runs at float32.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput

SAMPLE_RATE = 24_000
N_MELS = 80
LOG_FLOOR = 1e-5


@dataclass(frozen=True)
class Waveform:
    """Mono audio: sample array plus its rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 1:
            raise InvalidInput(f"waveform must be 1-D, got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise InvalidInput(f"sample_rate must be positive, got {self.sample_rate}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise InvalidInput("waveform contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True)
class StftConfig:
    """Analysis frame geometry.  Window is periodic Hann.

    The overlap-add window-square sum must be strictly positive at every
    interior sample (checked at construction), which the default 75%
    overlap satisfies.
    """

    fft_size: int = 1024
    hop: int = 256
    win_length: int = 1024
    window: str = "hann"

    def __post_init__(self):
        if self.window != "hann":
            raise InvalidInput(f"unsupported window {self.window!r}")
        if self.win_length > self.fft_size:
            raise InvalidInput("win_length must not exceed fft_size")
        if not (0 < self.hop <= self.win_length):
            raise InvalidInput("hop must satisfy 0 < hop <= win_length")
        wsq = _window(self)
        wsq = wsq * wsq
        # interior coverage of one hop span, with frames every `hop` samples
        cover = np.zeros(2 * self.win_length)
        for start in range(0, self.win_length + 1, self.hop):
            cover[start:start + self.win_length] += wsq
        interior = cover[self.win_length - self.hop:self.win_length]
        if interior.min() <= 1e-10:
            raise InvalidInput("window/hop combination does not satisfy COLA")


def _window(cfg: StftConfig) -> np.ndarray:
    # periodic Hann
    n = np.arange(cfg.win_length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / cfg.win_length)


@dataclass(frozen=True)
class ComplexSpectrogram:
    """frames x (fft_size/2 + 1) one-sided complex STFT."""

    data: np.ndarray
    config: StftConfig
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        expected = self.config.fft_size // 2 + 1
        if self.data.ndim != 2 or self.data.shape[1] != expected:
            raise InvalidInput(
                f"spectrogram must be frames x {expected}, got {self.data.shape}")

    @property
    def n_frames(self):
        return self.data.shape[0]

    @property
    def magnitude(self):
        return np.abs(self.data)

    @property
    def phase(self):
        return np.angle(self.data)


@dataclass(frozen=True)
class MelFilterbank:
    """Triangular mel filters on the one-sided FFT bin grid (HTK mel scale)."""

    weights: np.ndarray          # n_mels x (fft_size/2 + 1)
    n_mels: int
    sample_rate: int
    fft_size: int
    fmin: float
    fmax: float
    center_freqs: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class MelSpectrogram:
    """Natural-log mel magnitudes, floored at LOG_FLOOR; n_mels x frames."""

    data: np.ndarray
    config: StftConfig
    sample_rate: int = SAMPLE_RATE

    @property
    def n_mels(self):
        return self.data.shape[0]

    @property
    def n_frames(self):
        return self.data.shape[1]


def n_frames_for(n_samples: int, hop: int) -> int:
    """Frame count of a centered STFT: floor(n/hop) + 1."""
    return n_samples // hop + 1


def _pad_indices(n: int, pad: int) -> np.ndarray:
    """Index map from padded coordinates back to source coordinates."""
    mode = "reflect" if n > pad else "clip"
    if mode == "reflect":
        return np.pad(np.arange(n), pad, mode="reflect")
    # degenerate short input: clamp to the edges
    idx = np.arange(-pad, n + pad)
    return np.clip(idx, 0, n - 1)


def _frame(x: np.ndarray, cfg: StftConfig):
    """Centered framing with reflect padding of win_length/2 per side."""
    pad = cfg.win_length // 2
    idx = _pad_indices(x.size, pad)
    xp = x[idx]
    frames = n_frames_for(x.size, cfg.hop)
    view = np.lib.stride_tricks.sliding_window_view(xp, cfg.win_length)
    return np.ascontiguousarray(view[::cfg.hop][:frames]), idx


def stft(x: Waveform, cfg: StftConfig) -> ComplexSpectrogram:
    """Short-time Fourier transform.

    Frames are centered (reflect padding of win_length/2 per side), so the
    frame count is floor(len(x)/hop) + 1.  Windows shorter than fft_size
    are zero-padded on the right before the FFT.
    """
    if len(x) == 0:
        raise InvalidInput("cannot STFT an empty waveform")
    frames, _ = _frame(x.samples, cfg)
    win = _window(cfg).astype(x.samples.dtype)
    spec = np.fft.rfft(frames * win, n=cfg.fft_size, axis=1)
    return ComplexSpectrogram(spec, cfg, x.sample_rate)


def istft(spec: ComplexSpectrogram, cfg: StftConfig, length: int | None = None) -> Waveform:
    """Inverse STFT by overlap-add with window-square normalization.

    `length` selects the output sample count; by default the transform
    returns (frames - 1) * hop samples, the span fully determined by the
    frame grid.  istft(stft(x), cfg, length=len(x)) reproduces x at
    interior samples to round-off.
    """
    if cfg != spec.config:
        raise InvalidInput("spectrogram/config mismatch")
    data = spec.data
    frames = data.shape[0]
    pad = cfg.win_length // 2
    if length is None:
        length = (frames - 1) * cfg.hop

    out_dtype = np.float32 if data.dtype == np.complex64 else np.float64
    win = _window(cfg).astype(out_dtype)
    buf_len = (frames - 1) * cfg.hop + cfg.win_length
    out = np.zeros(buf_len, dtype=out_dtype)
    wsum = np.zeros(buf_len, dtype=out_dtype)
    segs = np.fft.irfft(data, n=cfg.fft_size, axis=1)[:, :cfg.win_length]
    segs = segs * win
    wsq = win * win
    for t in range(frames):
        start = t * cfg.hop
        out[start:start + cfg.win_length] += segs[t]
        wsum[start:start + cfg.win_length] += wsq
    out = out / np.maximum(wsum, 1e-10)

    y = np.zeros(length, dtype=out.dtype)
    avail = min(length, buf_len - pad)
    if avail > 0:
        y[:avail] = out[pad:pad + avail]
    return Waveform(y, spec.sample_rate)


# ---------------------------------------------------------------------------
# mel scale
# ---------------------------------------------------------------------------

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, cfg: StftConfig, sr: int = SAMPLE_RATE,
                   fmin: float = 0.0, fmax: float = 12_000.0) -> MelFilterbank:
    """Triangular filters with centers equally spaced on the HTK mel scale.

    Each row is a unit-peak triangle on the linear-frequency axis; rows
    are zero outside their [left, right] band edges.
    """
    if n_mels < 1:
        raise InvalidInput("n_mels must be >= 1")
    if not (0 <= fmin < fmax <= sr / 2):
        raise InvalidInput(f"band edges must satisfy 0 <= fmin < fmax <= sr/2, "
                           f"got fmin={fmin}, fmax={fmax}, sr={sr}")
    n_bins = cfg.fft_size // 2 + 1
    bin_freqs = np.arange(n_bins) * sr / cfg.fft_size
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    if np.any(np.diff(edges) <= 0):
        raise InvalidInput("degenerate mel band edges")
    weights = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        left, center, right = edges[m], edges[m + 1], edges[m + 2]
        up = (bin_freqs - left) / (center - left)
        down = (right - bin_freqs) / (right - center)
        weights[m] = np.maximum(0.0, np.minimum(up, down))
    if np.any(weights.sum(axis=1) == 0):
        raise InvalidInput("mel band too narrow for this FFT resolution")
    return MelFilterbank(weights, n_mels, sr, cfg.fft_size, fmin, fmax,
                         center_freqs=edges[1:-1])


def mel_from_magnitude(mag: np.ndarray, fb: MelFilterbank) -> np.ndarray:
    """Project magnitude frames (frames x bins) to floored log-mel (n_mels x frames)."""
    mel = fb.weights @ mag.T
    return np.log(np.maximum(mel, LOG_FLOOR))


def log_mel(x: Waveform, cfg: StftConfig, fb: MelFilterbank) -> MelSpectrogram:
    """80-band style log-mel extraction: ln(max(fb @ |STFT|, 1e-5))."""
    if x.sample_rate != fb.sample_rate:
        raise InvalidInput(f"waveform rate {x.sample_rate} does not match "
                           f"filterbank design rate {fb.sample_rate}")
    if cfg.fft_size != fb.fft_size:
        raise InvalidInput("filterbank was designed for a different fft_size")
    spec = stft(x, cfg)
    return MelSpectrogram(mel_from_magnitude(spec.magnitude, fb), cfg, x.sample_rate)


# ---------------------------------------------------------------------------
# multi-resolution STFT loss
# ---------------------------------------------------------------------------

DEFAULT_LOSS_RESOLUTIONS = (
    StftConfig(512, 128, 512),
    StftConfig(1024, 256, 1024),
    StftConfig(2048, 512, 2048),
)


@dataclass(frozen=True)
class SpectralLossReport:
    """Per-term breakdown of the multi-resolution STFT loss."""

    spectral_convergence: float
    log_magnitude: float
    total: float
    per_resolution: tuple = ()


def _sc_and_logmag(ref_mag, est_mag, sc_floor=0.0):
    # additive floor inside the log: smooth everywhere, and zero exactly
    # when the magnitudes match (a hard floor would zero out sub-floor
    # mismatches and leave no gradient to pull collapsed cells back up)
    diff = np.linalg.norm(est_mag - ref_mag)
    denom = max(np.linalg.norm(ref_mag), sc_floor)
    sc = 0.0 if denom == 0.0 else float(diff / denom)
    lm = float(np.mean(np.abs(np.log(ref_mag + LOG_FLOOR)
                              - np.log(est_mag + LOG_FLOOR))))
    return sc, lm


def multi_res_stft_loss(x: Waveform, x_hat: Waveform,
                        resolutions=DEFAULT_LOSS_RESOLUTIONS) -> SpectralLossReport:
    """Spectral-convergence + log-magnitude L1, averaged over resolutions.

    `x` is the reference: the spectral-convergence denominator is the
    Frobenius norm of x's magnitude spectrogram.
    """
    if len(x) != len(x_hat):
        raise InvalidInput(f"length mismatch: {len(x)} vs {len(x_hat)}")
    if x.sample_rate != x_hat.sample_rate:
        raise InvalidInput("sample-rate mismatch")
    per_res = []
    for cfg in resolutions:
        ref = stft(x, cfg).magnitude
        est = stft(x_hat, cfg).magnitude
        per_res.append(_sc_and_logmag(ref, est))
    sc = float(np.mean([p[0] for p in per_res]))
    lm = float(np.mean([p[1] for p in per_res]))
    return SpectralLossReport(sc, lm, sc + lm, tuple(per_res))


# ---------------------------------------------------------------------------
# differentiable magnitude path (used by the trainer and discriminator)
# ---------------------------------------------------------------------------

def stft_mag_forward(x: np.ndarray, cfg: StftConfig):
    """Magnitude spectrogram of a raw sample array, plus the cache its
    adjoint needs.  Returns (mag, cache) with mag shaped frames x bins."""
    pad = cfg.win_length // 2
    idx = _pad_indices(x.size, pad)
    frames = n_frames_for(x.size, cfg.hop)
    view = np.lib.stride_tricks.sliding_window_view(x[idx], cfg.win_length)
    framed = np.ascontiguousarray(view[::cfg.hop][:frames])
    win = _window(cfg).astype(x.dtype)
    spec = np.fft.rfft(framed * win, n=cfg.fft_size, axis=1)
    mag = np.abs(spec)
    cache = (x.size, idx, spec, mag, cfg)
    return mag, cache


def stft_mag_backward(cache, grad_mag: np.ndarray) -> np.ndarray:
    """Adjoint of stft_mag_forward: gradient w.r.t. the input samples."""
    n, idx, spec, mag, cfg = cache
    win = _window(cfg)
    # d|S|/dS, guarding the non-differentiable origin
    g_spec = grad_mag * spec / np.maximum(mag, 1e-12)
    # adjoint of the one-sided rfft seen as a real-linear map
    full = np.zeros((spec.shape[0], cfg.fft_size), dtype=complex)
    full[:, :spec.shape[1]] = g_spec
    g_buf = cfg.fft_size * np.fft.ifft(full, axis=1).real
    g_frames = g_buf[:, :cfg.win_length] * win
    g_padded = np.zeros(idx.size)
    hop = cfg.hop
    for t in range(g_frames.shape[0]):
        g_padded[t * hop:t * hop + cfg.win_length] += g_frames[t]
    grad_x = np.zeros(n)
    np.add.at(grad_x, idx, g_padded)
    return grad_x


def multi_res_stft_loss_grad(x: np.ndarray, x_hat: np.ndarray,
                             resolutions=DEFAULT_LOSS_RESOLUTIONS,
                             sc_floor: float = 0.0):
    """Loss report plus its gradient with respect to `x_hat` (raw arrays).

    `sc_floor` optionally bounds the spectral-convergence denominator
    from below; training uses it to keep near-silent references (empty
    high sub-bands) from blowing the term up.
    """
    if x.size != x_hat.size:
        raise InvalidInput(f"length mismatch: {x.size} vs {x_hat.size}")
    grad = np.zeros(x_hat.size)
    per_res = []
    n_res = len(resolutions)
    for cfg in resolutions:
        ref_mag, _ = stft_mag_forward(x, cfg)
        est_mag, cache = stft_mag_forward(x_hat, cfg)
        sc, lm = _sc_and_logmag(ref_mag, est_mag, sc_floor)
        per_res.append((sc, lm))

        diff = est_mag - ref_mag
        diff_norm = np.linalg.norm(diff)
        ref_norm = max(np.linalg.norm(ref_mag), sc_floor)
        g_mag = np.zeros_like(est_mag)
        if diff_norm > 0 and ref_norm > 0:
            g_mag += diff / (diff_norm * ref_norm)
        sign = np.sign(np.log(est_mag + LOG_FLOOR) - np.log(ref_mag + LOG_FLOOR))
        g_mag += sign / (est_mag + LOG_FLOOR) / est_mag.size
        grad += stft_mag_backward(cache, g_mag / n_res)
    sc = float(np.mean([p[0] for p in per_res]))
    lm = float(np.mean([p[1] for p in per_res]))
    return SpectralLossReport(sc, lm, sc + lm, tuple(per_res)), grad
