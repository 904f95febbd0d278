"""Fundamental-frequency estimation, voicing masks, and the F0-RMSE metric.

The tracker is a normalized-difference-function method: per frame, the
cumulative-mean-normalized difference function is searched for the first
dip under the voicing threshold, refined by parabolic interpolation.
Frames with no dip under the threshold (or negligible energy) are
unvoiced and reported as F0 = 0.

Frames sit on the same centered grid as log-mel extraction: hop-spaced
centers, floor(len/hop) + 1 frames.
"""

from dataclasses import dataclass

import numpy as np

from .dsp import Waveform, n_frames_for
from .errors import InvalidInput

_INTEGRATION_WINDOW = 1024  # samples correlated per lag


@dataclass(frozen=True)
class F0Config:
    f0_min: float = 50.0
    f0_max: float = 600.0
    hop: int = 256
    voicing_threshold: float = 0.15

    def __post_init__(self):
        if not (0.0 < self.f0_min < self.f0_max):
            raise InvalidInput("need 0 < f0_min < f0_max")
        if not (0.0 < self.voicing_threshold < 1.0):
            raise InvalidInput("voicing_threshold must lie in (0, 1)")
        if self.hop <= 0:
            raise InvalidInput("hop must be positive")


@dataclass(frozen=True)
class F0Contour:
    """Per-frame F0 in Hz; 0 marks an unvoiced frame."""

    values: np.ndarray
    hop: int
    sample_rate: int

    def __post_init__(self):
        if np.any(self.values < 0):
            raise InvalidInput("F0 values must be nonnegative")

    @property
    def n_frames(self):
        return self.values.size

    @property
    def voiced(self):
        return self.values > 0


@dataclass(frozen=True)
class UvMask:
    """Per-frame booleans, True = voiced."""

    flags: np.ndarray
    hop: int

    @property
    def n_frames(self):
        return self.flags.size


def estimate_f0(x: Waveform, cfg: F0Config = F0Config()) -> F0Contour:
    """Track F0 on the mel frame grid of `x`.

    Requires at least one full analysis window of audio.  Voiced values
    are clamped to [f0_min, f0_max]; everything else is 0.
    """
    sr = x.sample_rate
    if cfg.f0_max > sr / 4:
        raise InvalidInput("f0_max must not exceed sample_rate/4")
    if len(x) < _INTEGRATION_WINDOW:
        raise InvalidInput(f"need at least {_INTEGRATION_WINDOW} samples, got {len(x)}")

    w = _INTEGRATION_WINDOW
    tau_min = max(2, int(sr / cfg.f0_max))
    tau_max = int(np.ceil(sr / cfg.f0_min))
    seg = w + tau_max
    n_frames = n_frames_for(len(x), cfg.hop)

    # segments centered on the frame grid; near the edges the window is
    # slid inward rather than reflected, so edge frames stay periodic
    half = seg // 2
    samples = x.samples.astype(np.float64)
    if len(x) >= seg:
        starts = np.clip(np.arange(n_frames) * cfg.hop - half, 0, len(x) - seg)
        segments = np.lib.stride_tricks.sliding_window_view(samples, seg)[starts]
    else:
        idx = np.clip(np.arange(-half, len(x) + seg), 0, len(x) - 1)
        padded = samples[idx]
        starts = np.arange(n_frames) * cfg.hop
        segments = np.lib.stride_tricks.sliding_window_view(padded, seg)[starts]
    segments = np.ascontiguousarray(segments)

    cmndf = _cmndf(segments, w, tau_max)
    values = np.zeros(n_frames)
    energies = np.sum(segments[:, :w] ** 2, axis=1)
    for t in range(n_frames):
        if energies[t] < 1e-12:
            continue
        tau = _pick_lag(cmndf[t], tau_min, tau_max, cfg.voicing_threshold)
        if tau is None:
            continue
        values[t] = min(max(sr / tau, cfg.f0_min), cfg.f0_max)
    return F0Contour(values, cfg.hop, sr)


def _cmndf(segments: np.ndarray, w: int, tau_max: int) -> np.ndarray:
    """Cumulative-mean-normalized difference function, frames x (tau_max+1)."""
    n_fft = 1 << int(np.ceil(np.log2(segments.shape[1] + 1)))
    spec = np.fft.rfft(segments, n=n_fft, axis=1)
    head = np.fft.rfft(segments[:, :w], n=n_fft, axis=1)
    corr = np.fft.irfft(np.conj(head) * spec, n=n_fft, axis=1)[:, :tau_max + 1]

    sq = segments ** 2
    cs = np.concatenate([np.zeros((segments.shape[0], 1)), np.cumsum(sq, axis=1)], axis=1)
    e0 = cs[:, w] - cs[:, 0]
    lags = np.arange(tau_max + 1)
    e_tau = cs[:, lags + w] - cs[:, lags]
    diff = np.maximum(e0[:, None] + e_tau - 2.0 * corr, 0.0)

    cum = np.cumsum(diff[:, 1:], axis=1)
    out = np.ones_like(diff)
    nonzero = cum > 0
    out[:, 1:][nonzero] = (diff[:, 1:] * lags[None, 1:] / np.where(cum > 0, cum, 1.0))[nonzero]
    return out


def _pick_lag(curve: np.ndarray, tau_min: int, tau_max: int, threshold: float):
    """First below-threshold dip, walked to its local minimum, with
    parabolic refinement.  None if no dip clears the threshold."""
    below = np.nonzero(curve[tau_min:tau_max + 1] < threshold)[0]
    if below.size == 0:
        return None
    k = tau_min + below[0]
    while k + 1 <= tau_max and curve[k + 1] < curve[k]:
        k += 1
    if 0 < k < curve.size - 1:
        a, b, c = curve[k - 1], curve[k], curve[k + 1]
        denom = a - 2.0 * b + c
        if denom > 0:
            shift = 0.5 * (a - c) / denom
            return k + float(np.clip(shift, -1.0, 1.0))
    return float(k)


def uv_mask(f0: F0Contour) -> UvMask:
    """Voiced wherever the contour is nonzero."""
    return UvMask(f0.values > 0, f0.hop)


def f0_rmse(ref: F0Contour, test: F0Contour, return_count: bool = False):
    """RMSE in Hz over frames voiced in both contours.

    Returns 0.0 when no frame is voiced in both; pass return_count=True
    to also get the number of commonly voiced frames.
    """
    if ref.n_frames != test.n_frames:
        raise InvalidInput(f"frame-count mismatch: {ref.n_frames} vs {test.n_frames}")
    common = ref.voiced & test.voiced
    n = int(np.sum(common))
    if n == 0:
        rmse = 0.0
    else:
        err = ref.values[common] - test.values[common]
        rmse = float(np.sqrt(np.mean(err * err)))
    return (rmse, n) if return_count else rmse
