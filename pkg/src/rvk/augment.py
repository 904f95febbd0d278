"""Fake-sample generators for discriminator-side data augmentation.

Three perturbations produce adversarial negatives from real audio:

* harmonic shift   -- timbre disturbance: warp the spectral envelope and
                      remap the pitch contour, then resynthesize.
* harmonic noise   -- add uniform noise to the periodic envelope, but
                      only on cells whose envelope power clears a floor.
* phase noise      -- add uniform noise to the STFT phase and invert,
                      leaving magnitudes untouched.

They all ride on a light harmonic/aperiodic decomposition: the envelope
is the cepstrally liftered power spectrum, the aperiodicity is the
residual power ratio, and the original phase is retained so that an
unperturbed decomposition resynthesizes the input exactly (up to the
STFT round trip).

Power is measured on a window-sum-normalized scale (a full-scale
sinusoid has envelope peak around 0.23), which is what makes the small
absolute noise floors and weights of the parameter grids meaningful.
Inputs are peak-normalized to 0.95 before analysis for the same reason.
"""

from dataclasses import dataclass, replace

import numpy as np

from .dsp import ComplexSpectrogram, StftConfig, Waveform, istft, stft, _window
from .errors import InvalidInput
from .pitch import F0Config, F0Contour, estimate_f0

DEFAULT_STFT = StftConfig(1024, 256, 1024)
PEAK_NORM = 0.95
_RATIO_CLIP = 1e3  # max aperiodicity ratio; envelope is raised where it would bind

HN_ALPHA_GRID = (1e-4, 5e-4, 1e-3)
HN_BETA_GRID = (1e-5, 3e-5, 5e-5, 8e-5)
PN_ALPHA_GRID = tuple(np.round(0.5 + 0.1 * np.arange(11), 1))
HS_FORMANT_RANGE = (0.9, 1.1)
HS_MEDIAN_RANGE = (100.0, 500.0)
HS_PITCH_RANGE_FACTOR = (0.8, 1.2)


@dataclass(frozen=True)
class HarmonicDecomposition:
    """F0 contour + smooth envelope + residual ratio + retained phase.

    envelope * aperiodicity reconstructs the normalized power spectrum
    exactly; the arrays are frames x bins on the config's frame grid.
    """

    f0: F0Contour
    envelope: np.ndarray
    aperiodicity: np.ndarray
    phase: np.ndarray
    config: StftConfig
    sample_rate: int
    n_samples: int


@dataclass(frozen=True)
class HsParams:
    formant_ratio: float = 1.0
    pitch_median: float = 200.0
    pitch_range_factor: float = 1.0


@dataclass(frozen=True)
class HnParams:
    alpha: float = 1e-4
    beta: float = 3e-5


@dataclass(frozen=True)
class PnParams:
    alpha: float = 1.0


@dataclass(frozen=True)
class AugmentParams:
    method: str  # "hs" | "hn" | "pn"
    hs: HsParams = None
    hn: HnParams = None
    pn: PnParams = None
    seed: int = 0


@dataclass(frozen=True)
class AugmentPolicy:
    """Which perturbations a real sample spawns.

    mode "use_all" emits one augmented sample per method; "random_pick"
    emits exactly one with the method chosen uniformly; a method name
    ("hs"/"hn"/"pn") always picks that method.
    """

    mode: str = "use_all"

    def __post_init__(self):
        if self.mode not in ("use_all", "random_pick", "hs", "hn", "pn", "none"):
            raise InvalidInput(f"unknown augmentation policy {self.mode!r}")


def _normalize(samples: np.ndarray) -> np.ndarray:
    peak = np.max(np.abs(samples)) if samples.size else 0.0
    if peak < 1e-9:
        return samples.astype(np.float64)
    return samples.astype(np.float64) * (PEAK_NORM / peak)


def analyze_harmonics(x: Waveform, cfg: StftConfig = DEFAULT_STFT,
                      f0_cfg: F0Config = None) -> HarmonicDecomposition:
    """Decompose into (f0, envelope, aperiodicity, phase).

    The envelope is the power spectrum smoothed by cepstral liftering
    with a per-frame quefrency cutoff below the pitch period (1/(1.5*f0)
    seconds for voiced frames, 1/(1.5*f0_min) otherwise).  Where the raw
    power exceeds the smooth envelope by more than the ratio clip the
    envelope is raised, so envelope * aperiodicity always equals the
    normalized power spectrum.
    """
    if len(x) < cfg.win_length:
        raise InvalidInput(f"need at least {cfg.win_length} samples, got {len(x)}")
    if f0_cfg is None:
        f0_cfg = F0Config(hop=cfg.hop)
    samples = _normalize(x.samples)
    norm = Waveform(samples, x.sample_rate)
    f0 = estimate_f0(norm, f0_cfg)

    wsum = float(np.sum(_window(cfg)))
    spec = stft(norm, cfg)
    scaled = spec.data / wsum
    power = np.abs(scaled) ** 2
    phase = np.angle(scaled)

    smooth = _lifter_envelope(power, f0.values, x.sample_rate, cfg.fft_size,
                              f0_cfg.f0_min)
    envelope = np.maximum(smooth, power / _RATIO_CLIP)
    aperiodicity = np.minimum(power / envelope, _RATIO_CLIP)
    return HarmonicDecomposition(f0, envelope, aperiodicity, phase, cfg,
                                 x.sample_rate, len(x))


def _lifter_envelope(power, f0_values, sr, fft_size, f0_min):
    """Cepstral smoothing with per-frame cutoff quefrencies."""
    n_bins = power.shape[1]
    logp = np.log(np.maximum(power, 1e-30))
    full = np.concatenate([logp, logp[:, -2:0:-1]], axis=1)  # even symmetry
    ceps = np.fft.ifft(full, axis=1).real

    cut = np.where(f0_values > 0, sr / (1.5 * np.maximum(f0_values, 1.0)),
                   sr / (1.5 * f0_min))
    cut = np.clip(cut.astype(int), 2, fft_size // 2 - 1)
    q = np.arange(fft_size)
    keep = (q[None, :] < cut[:, None]) | (q[None, :] > fft_size - cut[:, None])
    smoothed = np.fft.fft(ceps * keep, axis=1).real[:, :n_bins]
    return np.exp(smoothed)


def synthesize_harmonics(d: HarmonicDecomposition) -> Waveform:
    """Invert a decomposition: sqrt(envelope * aperiodicity) recombined
    with the retained phase, then inverse STFT back to n_samples."""
    if d.envelope.shape != d.aperiodicity.shape or d.envelope.shape != d.phase.shape:
        raise InvalidInput("decomposition arrays disagree in shape")
    wsum = float(np.sum(_window(d.config)))
    mag = wsum * np.sqrt(d.envelope * d.aperiodicity)
    data = mag * (np.cos(d.phase) + 1j * np.sin(d.phase))
    spec = ComplexSpectrogram(data, d.config, d.sample_rate)
    return istft(spec, d.config, length=d.n_samples)


def harmonic_noise(x: Waveform, alpha: float, beta: float,
                   rng: np.random.Generator) -> Waveform:
    """Add beta-weighted U(0,1) noise to the envelope wherever it is at
    least alpha; cells below the floor pass through untouched."""
    d = analyze_harmonics(x)
    noise = rng.random(d.envelope.shape)
    mask = d.envelope >= alpha
    perturbed = np.where(mask, d.envelope + beta * noise, d.envelope)
    return synthesize_harmonics(replace(d, envelope=perturbed))


def phase_noise_spectrogram(x: Waveform, alpha: float, rng: np.random.Generator,
                            cfg: StftConfig = DEFAULT_STFT):
    """(magnitude, perturbed phase) pair; the magnitude array is the
    unmodified STFT magnitude of x."""
    spec = stft(Waveform(x.samples.astype(np.float64), x.sample_rate), cfg)
    mag = np.abs(spec.data)
    phase = np.angle(spec.data) + alpha * rng.random(spec.data.shape)
    return mag, phase


def _polar_istft(mag, phase, cfg, sample_rate, length) -> Waveform:
    data = mag * (np.cos(phase) + 1j * np.sin(phase))
    return istft(ComplexSpectrogram(data, cfg, sample_rate), cfg, length=length)


def phase_noise(x: Waveform, alpha: float, rng: np.random.Generator,
                cfg: StftConfig = DEFAULT_STFT) -> Waveform:
    """Recombine the untouched magnitudes with noisy phases and invert.

    Decohered frames can overlap-add above the input's peak; output is
    conditionally rescaled to keep augmented fakes inside [-1.45, 1.45]
    (never triggered at alpha = 0, so the degenerate path is untouched).
    """
    if alpha < 0:
        raise InvalidInput("alpha must be nonnegative")
    mag, phase = phase_noise_spectrogram(x, alpha, rng, cfg)
    out = _polar_istft(mag, phase, cfg, x.sample_rate, len(x))
    peak = np.max(np.abs(out.samples)) if len(out) else 0.0
    in_peak = np.max(np.abs(x.samples)) if len(x) else 0.0
    if peak > max(1.45, 1.000001 * in_peak):
        out = Waveform(out.samples * (1.45 / peak), out.sample_rate)
    return out


def polar_roundtrip(x: Waveform, cfg: StftConfig = DEFAULT_STFT) -> Waveform:
    """The do-nothing baseline phase_noise degenerates to at alpha = 0:
    polar decomposition, recombination, inverse STFT."""
    spec = stft(Waveform(x.samples.astype(np.float64), x.sample_rate), cfg)
    return _polar_istft(np.abs(spec.data), np.angle(spec.data), cfg,
                        x.sample_rate, len(x))


# ---------------------------------------------------------------------------
# harmonic shift
# ---------------------------------------------------------------------------

def _warp_envelope(env: np.ndarray, ratio: float) -> np.ndarray:
    """Stretch the envelope along frequency so features at f move to f*ratio."""
    n_bins = env.shape[1]
    src = np.arange(n_bins) / ratio
    j = np.clip(src.astype(int), 0, n_bins - 2)
    frac = np.clip(src - j, 0.0, 1.0)
    return env[:, j] * (1.0 - frac) + env[:, j + 1] * frac


def _sample_track(frame_values: np.ndarray, hop: int, n: int) -> np.ndarray:
    """Linear per-sample interpolation of a frame-grid track."""
    centers = np.arange(frame_values.size) * hop
    return np.interp(np.arange(n), centers, frame_values)


VOICED_NOISE_FLOOR = 0.05  # aspiration floor mixed under voiced frames


def harmonic_shift(x: Waveform, p: HsParams, rng: np.random.Generator,
                   cfg: StftConfig = DEFAULT_STFT) -> Waveform:
    """Timbre perturbation by harmonic-plus-noise resynthesis.

    The envelope is warped by formant_ratio, and voiced excitation is
    rebuilt as a bank of oscillators at multiples of the remapped
    contour f0'(t) = pitch_median * (f0(t)/median)^pitch_range_factor.
    Unvoiced (or entirely unvoiced) audio resynthesizes as
    envelope-shaped noise.  Output RMS is matched to the normalized
    input so level is preserved.
    """
    d = analyze_harmonics(x, cfg)
    n = d.n_samples
    sr = d.sample_rate
    env_w = _warp_envelope(d.envelope, p.formant_ratio)
    f0 = d.f0.values
    voiced = f0 > 0

    # noise component: envelope-shaped, full weight on unvoiced frames
    weights = np.where(voiced, VOICED_NOISE_FLOOR, 1.0)
    wsum = float(np.sum(_window(cfg)))
    noise_mag = wsum * np.sqrt(env_w) * weights[:, None]
    noise_phase = rng.random(env_w.shape) * 2.0 * np.pi
    out = _polar_istft(noise_mag, noise_phase, cfg, sr, n).samples.copy()

    if np.any(voiced):
        med = float(np.median(f0[voiced]))
        target = np.zeros_like(f0)
        target[voiced] = p.pitch_median * (f0[voiced] / med) ** p.pitch_range_factor
        out += _render_harmonics(env_w, target, d.config, sr, n, rng)

    norm_rms = np.sqrt(np.mean(_normalize(x.samples) ** 2))
    rms = np.sqrt(np.mean(out ** 2))
    if rms > 1e-12:
        out *= norm_rms / rms
    peak = np.max(np.abs(out)) if out.size else 0.0
    if peak > 1.45:  # keep augmented fakes inside the amplitude contract
        out *= 1.45 / peak
    return Waveform(out, sr)


def _render_harmonics(env, f0_frames, cfg, sr, n, rng):
    """Oscillator-bank rendering of voiced runs, amplitudes read off the
    envelope at each harmonic's frequency."""
    hop = cfg.hop
    n_bins = env.shape[1]
    bin_hz = sr / cfg.fft_size
    out = np.zeros(n)
    voiced = f0_frames > 0
    runs = _voiced_runs(voiced)
    for lo, hi in runs:  # frame index range [lo, hi)
        s0 = max(0, (lo * hop) - hop // 2)
        s1 = min(n, (hi - 1) * hop + hop // 2)
        if s1 <= s0:
            continue
        span = np.arange(s0, s1)
        run_frames = np.arange(lo, hi)
        f0_run = np.interp(span, run_frames * hop, f0_frames[lo:hi])
        phase_base = 2.0 * np.pi * np.cumsum(f0_run) / sr
        k_max = max(1, int(0.95 * (sr / 2) / max(f0_run.max(), 1.0)))
        seg = np.zeros(span.size)
        for k in range(1, k_max + 1):
            freq_bins = np.clip(k * f0_frames[lo:hi] / bin_hz, 0, n_bins - 1.001)
            j = freq_bins.astype(int)
            frac = freq_bins - j
            env_k = env[lo:hi, :]
            amp_frames = (env_k[np.arange(hi - lo), j] * (1 - frac)
                          + env_k[np.arange(hi - lo), j + 1] * frac)
            amp = np.interp(span, run_frames * hop, 2.0 * np.sqrt(amp_frames))
            seg += amp * np.sin(k * phase_base + rng.random() * 2.0 * np.pi)
        fade = min(hop, span.size // 2)
        if fade > 0:
            ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(fade) / fade)
            seg[:fade] *= ramp
            seg[-fade:] *= ramp[::-1]
        out[s0:s1] += seg
    return out


def _voiced_runs(voiced: np.ndarray):
    """Contiguous [start, stop) frame ranges where voiced is True."""
    runs = []
    start = None
    for i, v in enumerate(voiced):
        if v and start is None:
            start = i
        elif not v and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, voiced.size))
    return runs


# ---------------------------------------------------------------------------
# parameter sampling
# ---------------------------------------------------------------------------

def _sample_method(method: str, rng: np.random.Generator) -> AugmentParams:
    seed = int(rng.integers(0, 2 ** 63 - 1))
    if method == "hs":
        return AugmentParams("hs", hs=HsParams(
            formant_ratio=float(rng.uniform(*HS_FORMANT_RANGE)),
            pitch_median=float(rng.uniform(*HS_MEDIAN_RANGE)),
            pitch_range_factor=float(rng.uniform(*HS_PITCH_RANGE_FACTOR))), seed=seed)
    if method == "hn":
        return AugmentParams("hn", hn=HnParams(
            alpha=float(rng.choice(HN_ALPHA_GRID)),
            beta=float(rng.choice(HN_BETA_GRID))), seed=seed)
    if method == "pn":
        return AugmentParams("pn", pn=PnParams(
            alpha=float(rng.choice(PN_ALPHA_GRID))), seed=seed)
    raise InvalidInput(f"unknown method {method!r}")


def sample_params(policy: AugmentPolicy, rng: np.random.Generator) -> list:
    """Draw the augmentation parameter set(s) one real sample spawns.

    Shift parameters are drawn continuously from their ranges; noise
    parameters come off the published grids.
    """
    if policy.mode == "none":
        return []
    if policy.mode == "use_all":
        return [_sample_method(m, rng) for m in ("hs", "hn", "pn")]
    if policy.mode == "random_pick":
        return [_sample_method(str(rng.choice(["hs", "hn", "pn"])), rng)]
    return [_sample_method(policy.mode, rng)]


def apply_augmentation(x: Waveform, params: AugmentParams) -> Waveform:
    """Apply one sampled perturbation; deterministic given (x, params)."""
    rng = np.random.default_rng(params.seed)
    if params.method == "hs":
        return harmonic_shift(x, params.hs, rng)
    if params.method == "hn":
        return harmonic_noise(x, params.hn.alpha, params.hn.beta, rng)
    if params.method == "pn":
        return phase_noise(x, params.pn.alpha, rng)
    raise InvalidInput(f"unknown method {params.method!r}")
