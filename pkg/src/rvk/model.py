"""Vocoder networks: sub-band generator with the over-smooth handler,
the separately trained voicing predictor, and the multi-resolution
spectrogram discriminator.

The over-smooth handler routes each mel cell to exactly one of two
prenets: voiced low-frequency cells go to the periodic path, everything
else (high-frequency bands, and all bands of unvoiced frames) to the
aperiodic path, which is the only place dropout is applied.  The two
prenet outputs are summed before the upsampling trunk.
"""

from dataclasses import dataclass

import numpy as np

from . import pqmf
from .dsp import (DEFAULT_LOSS_RESOLUTIONS, LOG_FLOOR, SAMPLE_RATE,
                  MelSpectrogram, _window, stft_mag_backward, stft_mag_forward)
from .errors import InvalidInput, ShapeError
from .nn import (Conv1d, ConvTranspose1d, Conv2d, Dropout, Layer, LeakyReLU,
                 ResidualStack, Sequential, Tanh)
from .pitch import UvMask

FILL = float(np.log(LOG_FLOOR))  # "silence" in mel space, used for masked cells
# fixed affine conditioning so log-mel enters the convs roughly in [-1, 1]
_MEL_SHIFT = FILL / 2.0
_MEL_SCALE = -FILL / 2.0


@dataclass(frozen=True)
class GeneratorConfig:
    upsample_factors: tuple = (2, 2, 4, 4)
    channels: tuple = (384, 192, 128, 64, 32)
    n_subbands: int = 4
    prenet_layers: int = 3
    prenet_kernel: int = 3
    dropout_rate: float = 0.5
    low_band_dims: int = 50
    high_band_dims: int = 30
    residual_dilations: tuple = (1, 3, 9)
    n_mels: int = 80
    hop: int = 256
    dropout_at_inference: bool = False

    def __post_init__(self):
        if len(self.channels) != len(self.upsample_factors) + 1:
            raise InvalidInput("need one channel width per stage plus the input stage")
        total = int(np.prod(self.upsample_factors)) * self.n_subbands
        if total != self.hop:
            raise InvalidInput(f"upsample_factors * n_subbands must equal hop "
                               f"({total} != {self.hop})")
        if self.low_band_dims + self.high_band_dims != self.n_mels:
            raise InvalidInput("low_band_dims + high_band_dims must equal n_mels")


@dataclass(frozen=True)
class UvPredictorConfig:
    hidden: tuple = (256, 256, 256, 256)
    kernel: int = 5
    n_mels: int = 80


@dataclass(frozen=True)
class DiscriminatorConfig:
    resolutions: tuple = DEFAULT_LOSS_RESOLUTIONS
    channels: tuple = (16, 32, 64, 64, 1)
    kernel: int = 3
    negative_slope: float = 0.2


@dataclass(frozen=True)
class StreamPair:
    """The over-smooth handler's partition of a mel spectrogram."""

    periodic: np.ndarray
    aperiodic: np.ndarray


def split_streams(mel: np.ndarray, voiced: np.ndarray, cfg: GeneratorConfig):
    """Raw-array partition rule shared by the op and the generator."""
    low = cfg.low_band_dims
    band = np.arange(mel.shape[-2])[:, None] < low
    to_periodic = band & voiced[..., None, :]
    periodic = np.where(to_periodic, mel, FILL)
    aperiodic = np.where(to_periodic, FILL, mel)
    return periodic, aperiodic


def over_smooth_split(mel: MelSpectrogram, uv: UvMask,
                      cfg: GeneratorConfig = GeneratorConfig()) -> StreamPair:
    """Partition a mel spectrogram for the dual prenets.

    Each cell lands in exactly one stream: voiced frames keep their
    lowest `low_band_dims` bands on the periodic stream; the remaining
    bands, and every band of unvoiced frames, go to the aperiodic
    stream.  The vacated cell of the other stream holds the mel-space
    silence value.
    """
    if mel.n_frames != uv.n_frames:
        raise InvalidInput(f"mel has {mel.n_frames} frames but mask has {uv.n_frames}")
    if mel.n_mels != cfg.n_mels:
        raise InvalidInput(f"expected {cfg.n_mels} mel bands, got {mel.n_mels}")
    periodic, aperiodic = split_streams(mel.data, np.asarray(uv.flags, bool), cfg)
    return StreamPair(periodic, aperiodic)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _prenet(cfg: GeneratorConfig, with_dropout: bool, rng, dtype):
    ch = cfg.channels[0]
    k = cfg.prenet_kernel
    layers = [Conv1d(cfg.n_mels, ch, k, rng=rng, dtype=dtype)]
    for i in range(1, cfg.prenet_layers):
        layers.append(LeakyReLU())
        layers.append(Conv1d(ch, ch, k, rng=rng, dtype=dtype))
        if with_dropout and i == 1:  # dropout lives in the second prenet layer
            layers.append(Dropout(cfg.dropout_rate))
    return Sequential(layers)


class Generator(Layer):
    """mel + voicing mask -> sub-band signals -> full-band waveform."""

    def __init__(self, cfg: GeneratorConfig = GeneratorConfig(), rng=None,
                 dtype=np.float32, bank: pqmf.PqmfBank = None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.cfg = cfg
        self.dtype = dtype
        self.bank = bank or pqmf.design_bank(cfg.n_subbands)
        self.prenet_p = _prenet(cfg, with_dropout=False, rng=rng, dtype=dtype)
        self.prenet_a = _prenet(cfg, with_dropout=True, rng=rng, dtype=dtype)
        trunk = []
        for i, s in enumerate(cfg.upsample_factors):
            trunk.append(LeakyReLU())
            trunk.append(ConvTranspose1d(cfg.channels[i], cfg.channels[i + 1], s,
                                         rng=rng, dtype=dtype))
            trunk.append(ResidualStack(cfg.channels[i + 1], cfg.residual_dilations,
                                       rng=rng, dtype=dtype))
        self.trunk = Sequential(trunk)
        # small head init keeps tanh in its linear region at the start of
        # training; a saturated head passes no gradient and stalls descent
        self.head = Sequential([
            LeakyReLU(),
            Conv1d(cfg.channels[-1], cfg.n_subbands, 7, rng=rng, dtype=dtype,
                   gain=0.05),
            Tanh(),
        ])
        self._children = {"prenet_p": self.prenet_p, "prenet_a": self.prenet_a,
                          "trunk": self.trunk, "head": self.head}
        # inspection hooks, refreshed by every forward
        self.last_periodic_act = None
        self.last_aperiodic_act = None

    def forward(self, mel, voiced, train=False, rng=None):
        """mel (N, n_mels, T), voiced (N, T) bool -> (bands (N, B, T*up), audio (N, T*hop))."""
        if mel.ndim != 3 or mel.shape[1] != self.cfg.n_mels:
            raise ShapeError(f"expected (N, {self.cfg.n_mels}, T) mel, got {mel.shape}")
        if voiced.shape != (mel.shape[0], mel.shape[2]):
            raise ShapeError("voicing mask shape must be (N, T)")
        periodic, aperiodic = split_streams(mel, np.asarray(voiced, bool), self.cfg)
        periodic = ((periodic - _MEL_SHIFT) / _MEL_SCALE).astype(self.dtype)
        aperiodic = ((aperiodic - _MEL_SHIFT) / _MEL_SCALE).astype(self.dtype)
        dropout_on = train or self.cfg.dropout_at_inference
        p = self.prenet_p.forward(periodic, train=False)
        a = self.prenet_a.forward(aperiodic, train=dropout_on, rng=rng)
        self.last_periodic_act = p
        self.last_aperiodic_act = a
        h = self.trunk.forward(p + a, train=train, rng=rng)
        bands = self.head.forward(h, train=train, rng=rng)
        n, _, band_len = bands.shape
        audio = np.empty((n, band_len * self.cfg.n_subbands), dtype=bands.dtype)
        for i in range(n):
            sub = pqmf.SubbandSignals(bands[i], SAMPLE_RATE)
            audio[i] = pqmf.synthesis(sub, self.bank).samples
        self._cache = bands.shape
        return bands, audio

    def backward(self, grad_bands, grad_audio=None):
        """Accumulate parameter gradients; input gradients are not produced."""
        n, _, band_len = self._need_cache()
        g = np.zeros((n, self.cfg.n_subbands, band_len), dtype=self.dtype)
        if grad_bands is not None:
            g += grad_bands
        if grad_audio is not None:
            for i in range(n):
                g[i] += pqmf.synthesis_adjoint(grad_audio[i], self.bank, band_len)
        gh = self.head.backward(g)
        gh = self.trunk.backward(gh)
        self.prenet_a.backward(gh)
        self.prenet_p.backward(gh)
        return None


class UvPredictor(Layer):
    """Framewise voicing probability from a mel spectrogram."""

    def __init__(self, cfg: UvPredictorConfig = UvPredictorConfig(), rng=None,
                 dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.cfg = cfg
        layers = []
        prev = cfg.n_mels
        for width in cfg.hidden:
            layers.append(Conv1d(prev, width, cfg.kernel, rng=rng, dtype=dtype))
            layers.append(LeakyReLU())
            prev = width
        # small head init keeps initial logits near zero (uninformative sigmoid)
        layers.append(Conv1d(prev, 1, 1, rng=rng, dtype=dtype, gain=0.01))
        self.net = Sequential(layers)
        self._children = {"net": self.net}
        self.last_logits = None

    def forward(self, mel, train=False, rng=None):
        if mel.ndim != 3 or mel.shape[1] != self.cfg.n_mels:
            raise InvalidInput(f"expected (N, {self.cfg.n_mels}, T) mel, got {mel.shape}")
        x = ((mel - _MEL_SHIFT) / _MEL_SCALE).astype(
            self.net.layers[0].params["weight"].dtype)
        logits = self.net.forward(x, train=train, rng=rng)[:, 0, :]
        self.last_logits = logits
        self._cache = logits.shape
        return _sigmoid(logits)

    def backward(self, grad_logits):
        """Backward from the pre-sigmoid logits, shape (N, T)."""
        shape = self._need_cache()
        if grad_logits.shape != shape:
            raise ShapeError("grad_logits shape mismatch")
        return self.net.backward(grad_logits[:, None, :])

    def predict_mask(self, mel: MelSpectrogram, threshold: float = 0.5) -> UvMask:
        probs = self.forward(mel.data[None])[0]
        return UvMask(probs > threshold, mel.config.hop)


class SpectrogramDiscriminator(Layer):
    """One 2-D conv ladder per STFT resolution, fed linear magnitudes.

    The middle layers stride the frequency axis by 2; the magnitude
    input is scaled by 2/window_sum so a full-scale tone lands near 1.
    """

    def __init__(self, cfg: DiscriminatorConfig = DiscriminatorConfig(), rng=None,
                 dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.cfg = cfg
        self.dtype = dtype
        self.ladders = []
        for r, _res in enumerate(cfg.resolutions):
            layers = []
            prev = 1
            last = len(cfg.channels) - 1
            for i, width in enumerate(cfg.channels):
                stride = (2, 1) if 0 < i < last else (1, 1)
                layers.append(Conv2d(prev, width, cfg.kernel, stride=stride,
                                     rng=rng, dtype=dtype))
                if i < last:
                    layers.append(LeakyReLU(cfg.negative_slope))
                prev = width
            ladder = Sequential(layers)
            self.ladders.append(ladder)
            self._children[f"res{r}"] = ladder
        self._scales = [2.0 / float(np.sum(_window(res))) for res in cfg.resolutions]

    def forward(self, audio, train=False, rng=None):
        """audio (N, L) -> one score map (N, 1, F', T') per resolution."""
        min_len = max(res.win_length for res in self.cfg.resolutions)
        if audio.ndim != 2:
            raise ShapeError(f"expected (N, L) audio, got {audio.shape}")
        if audio.shape[1] < min_len:
            raise InvalidInput(f"input shorter than the largest analysis window "
                               f"({audio.shape[1]} < {min_len})")
        scores = []
        caches = []
        for res, ladder, scale in zip(self.cfg.resolutions, self.ladders, self._scales):
            mags = []
            item_caches = []
            for i in range(audio.shape[0]):
                mag, cache = stft_mag_forward(np.asarray(audio[i], np.float64), res)
                mags.append(mag.T)  # freq x time
                item_caches.append(cache)
            image = (scale * np.stack(mags)[:, None]).astype(self.dtype)
            scores.append(ladder.forward(image, train=train, rng=rng))
            caches.append(item_caches)
        self._cache = (caches, audio.shape)
        return scores

    def backward(self, grad_scores, to_input=False):
        caches, audio_shape = self._need_cache()
        grad_audio = np.zeros(audio_shape) if to_input else None
        for g, ladder, item_caches, scale in zip(grad_scores, self.ladders,
                                                 caches, self._scales):
            g_image = ladder.backward(g.astype(self.dtype))
            if to_input:
                for i in range(audio_shape[0]):
                    g_mag = scale * g_image[i, 0].T.astype(np.float64)
                    grad_audio[i] += stft_mag_backward(item_caches[i], g_mag)
        return grad_audio
