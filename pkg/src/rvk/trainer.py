"""Training losses, the two-phase loop, dataset plumbing, and evaluation.

Phase one pretrains the generator on the multi-resolution STFT loss
(full-band plus sub-band); phase two adds the least-squares adversarial
game where the discriminator sees three kinds of input: real audio,
generator output, and perturbed real audio produced by the augmentation
policy.  The discriminator objective is

    mean (D(real) - 1)^2 + mean D(generated)^2 + mean D(augmented)^2

with the augmented term averaged over however many fakes the policy
spawns per real sample.

Everything is deterministic for a fixed seed: per-step generators are
derived from (seed, step), so two runs produce byte-identical
checkpoints and loss logs, and a resumed run continues the exact
trajectory of batches and augmentations.
"""

import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import augment as aug
from . import pqmf
from .audio_io import read_wav, write_wav
from .dsp import (SAMPLE_RATE, MelSpectrogram, StftConfig, Waveform, log_mel,
                  mel_filterbank, multi_res_stft_loss, multi_res_stft_loss_grad)
from .errors import InvalidInput, TrainingDiverged
from .model import (DiscriminatorConfig, Generator, GeneratorConfig,
                    SpectrogramDiscriminator, UvPredictor, UvPredictorConfig)
from .nn import Adam
from .pitch import F0Config, estimate_f0, f0_rmse
from .tensorio import config_digest, read_checkpoint, write_checkpoint, write_tensor

FEATURE_STFT = StftConfig(1024, 256, 1024)
FEATURE_FB = mel_filterbank(80, FEATURE_STFT, SAMPLE_RATE, 0.0, 12_000.0)
PEAK = 0.95
ADV_WEIGHT = 2.5  # generator adversarial term weight against the STFT losses
SC_FLOOR = 1.0    # spectral-convergence guard for near-silent references

CSV_HEADER = "step,d_real,d_fake_gen,d_fake_aug,d_total,g_adv,stft_fullband,stft_subband,g_total"


@dataclass(frozen=True)
class LossReport:
    step: int
    d_real: float = 0.0
    d_fake_gen: float = 0.0
    d_fake_aug: float = 0.0
    d_total: float = 0.0
    g_adv: float = 0.0
    stft_fullband: float = 0.0
    stft_subband: float = 0.0
    g_total: float = 0.0
    n_aug_per_sample: int = 0

    def csv_row(self):
        vals = [self.d_real, self.d_fake_gen, self.d_fake_aug, self.d_total,
                self.g_adv, self.stft_fullband, self.stft_subband, self.g_total]
        return f"{self.step}," + ",".join(f"{v:.8g}" for v in vals)


@dataclass(frozen=True)
class TrainConfig:
    data_dir: str = None
    out_dir: str = None
    sample_rate: int = SAMPLE_RATE
    segment_frames: int = 32
    batch_size: int = 4
    pretrain_steps: int = 200
    total_steps: int = 500
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    augment_policy: str = "use_all"
    seed: int = 0
    checkpoint_interval: int = 100
    loss_fft_sizes: tuple = (512, 1024, 2048)
    loss_hops: tuple = (128, 256, 512)
    loss_win_lengths: tuple = (512, 1024, 2048)
    aug_loss_weight: float = 1.0
    uv_train_steps: int = 400
    uv_lr: float = 2e-3
    resume: bool = True

    def __post_init__(self):
        if self.pretrain_steps > self.total_steps:
            raise InvalidInput("pretrain_steps must not exceed total_steps")
        if self.segment_frames < 8:
            raise InvalidInput("segment_frames must be at least 8")
        if not (len(self.loss_fft_sizes) == len(self.loss_hops)
                == len(self.loss_win_lengths)):
            raise InvalidInput("loss resolution lists must have equal length")

    @property
    def loss_resolutions(self):
        return tuple(StftConfig(f, h, w) for f, h, w in
                     zip(self.loss_fft_sizes, self.loss_hops, self.loss_win_lengths))

    @property
    def subband_loss_resolutions(self):
        # sub-band signals run at a quarter of the rate; halve the windows
        return tuple(StftConfig(f // 2, max(1, h // 2), w // 2)
                     for f, h, w in zip(self.loss_fft_sizes, self.loss_hops,
                                        self.loss_win_lengths))


_INT_TUPLES = {"loss_fft_sizes", "loss_hops", "loss_win_lengths"}


def parse_config_file(path) -> TrainConfig:
    """Flat key=value config; unknown keys are errors."""
    known = {f.name: f.type for f in fields(TrainConfig)}
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInput(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in known:
            raise InvalidInput(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _parse_value(key, val)
    return TrainConfig(**values)


def _parse_value(key, val):
    if key in _INT_TUPLES:
        return tuple(int(v) for v in val.split(","))
    proto = TrainConfig.__dataclass_fields__[key].default
    if isinstance(proto, bool):
        if val.lower() not in ("true", "false"):
            raise InvalidInput(f"{key} must be true or false, got {val!r}")
        return val.lower() == "true"
    if isinstance(proto, int):
        return int(val)
    if isinstance(proto, float):
        return float(val)
    return val


def config_text(cfg: TrainConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        lines.append(f"{f.name}={v}")
    return "\n".join(lines) + "\n"


def feature_digest(cfg: TrainConfig, gen_cfg: GeneratorConfig = GeneratorConfig(),
                   uv_cfg: UvPredictorConfig = UvPredictorConfig()) -> bytes:
    """Digest of everything copysyn must agree on with the checkpoint."""
    text = (f"sr={cfg.sample_rate};fft={FEATURE_STFT.fft_size};"
            f"hop={FEATURE_STFT.hop};win={FEATURE_STFT.win_length};"
            f"n_mels={FEATURE_FB.n_mels};fmin={FEATURE_FB.fmin};fmax={FEATURE_FB.fmax};"
            f"gen={gen_cfg};uv={uv_cfg}")
    return config_digest(text)


# ---------------------------------------------------------------------------
# dataset
# ---------------------------------------------------------------------------

@dataclass
class DatasetEntry:
    path: Path
    n_samples: int
    audio: np.ndarray     # peak-normalized float32 at the pipeline rate
    mel: np.ndarray       # n_mels x frames, float32
    f0: np.ndarray        # frames, float32; 0 = unvoiced
    mel_path: Path
    f0_path: Path


@dataclass
class DatasetIndex:
    entries: list

    def __len__(self):
        return len(self.entries)


def compute_features(wav: Waveform):
    """Peak-normalize, then extract the cached mel / F0 pair."""
    samples = wav.samples.astype(np.float64)
    peak = np.max(np.abs(samples)) if samples.size else 0.0
    if peak > 1e-9:
        samples = samples * (PEAK / peak)
    norm = Waveform(samples, wav.sample_rate)
    mel = log_mel(norm, FEATURE_STFT, FEATURE_FB)
    f0 = estimate_f0(norm, F0Config(hop=FEATURE_STFT.hop))
    if mel.n_frames != f0.n_frames:
        raise InvalidInput("mel/F0 frame grids disagree")  # contract, never expected
    return samples.astype(np.float32), mel.data.astype(np.float32), \
        f0.values.astype(np.float32)


def index_dataset(data_dir, cache_dir) -> DatasetIndex:
    """Read every WAV under data_dir, cache features, skip unreadable files."""
    data_dir = Path(data_dir)
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    paths = sorted(data_dir.glob("*.wav"))
    entries = []
    for path in paths:
        try:
            wav = read_wav(path, SAMPLE_RATE)
            audio, mel, f0 = compute_features(wav)
        except InvalidInput as exc:
            print(f"warning: skipping {path}: {exc}", file=sys.stderr)
            continue
        mel_path = cache_dir / f"{path.stem}.mel.rmtn"
        f0_path = cache_dir / f"{path.stem}.f0.rmtn"
        write_tensor(mel_path, mel)
        write_tensor(f0_path, f0)
        entries.append(DatasetEntry(path, audio.size, audio, mel, f0,
                                    mel_path, f0_path))
    if not entries:
        raise InvalidInput(f"no readable WAV files in {data_dir}")
    return DatasetIndex(entries)


def sample_batch(index: DatasetIndex, cfg: TrainConfig, rng: np.random.Generator):
    """Random fixed-length crops; mel frames [t, t+T) pair with samples
    [t*hop, (t+T)*hop)."""
    hop = FEATURE_STFT.hop
    t_frames = cfg.segment_frames
    usable = [e for e in index.entries if e.n_samples // hop - t_frames >= 0]
    if not usable:
        raise InvalidInput(f"no file long enough for {t_frames}-frame segments")
    mels, masks, audios = [], [], []
    for _ in range(cfg.batch_size):
        e = usable[int(rng.integers(len(usable)))]
        t0 = int(rng.integers(e.n_samples // hop - t_frames + 1))
        mels.append(e.mel[:, t0:t0 + t_frames])
        masks.append(e.f0[t0:t0 + t_frames] > 0)
        audios.append(e.audio[t0 * hop:(t0 + t_frames) * hop])
    return {"mel": np.stack(mels), "voiced": np.stack(masks),
            "audio": np.stack(audios)}


# ---------------------------------------------------------------------------
# losses (least-squares adversarial objective)
# ---------------------------------------------------------------------------

def _mean_over_resolutions(score_maps, fn):
    return float(np.mean([np.mean(fn(s)) for s in score_maps]))


def discriminator_loss(scores_real, scores_gen, scores_aug) -> dict:
    """Eq-style three-term discriminator objective.

    scores_real/scores_gen: one score map per resolution.  scores_aug: a
    list over augmented samples, each again one map per resolution (the
    augmented term is their mean); may be empty when augmentation is off.
    """
    if len(scores_real) != len(scores_gen):
        raise InvalidInput("real/generated resolution counts differ")
    for per_sample in scores_aug:
        if len(per_sample) != len(scores_real):
            raise InvalidInput("augmented resolution count differs")
    d_real = _mean_over_resolutions(scores_real, lambda s: (s - 1.0) ** 2)
    d_fake_gen = _mean_over_resolutions(scores_gen, lambda s: s ** 2)
    if scores_aug:
        d_fake_aug = float(np.mean([
            _mean_over_resolutions(per_sample, lambda s: s ** 2)
            for per_sample in scores_aug]))
    else:
        d_fake_aug = 0.0
    return {"d_real": d_real, "d_fake_gen": d_fake_gen, "d_fake_aug": d_fake_aug,
            "d_total": d_real + d_fake_gen + d_fake_aug}


def generator_adv_loss(scores_gen) -> float:
    """Least-squares generator objective: mean (D(generated) - 1)^2."""
    return _mean_over_resolutions(scores_gen, lambda s: (s - 1.0) ** 2)


# ---------------------------------------------------------------------------
# training steps
# ---------------------------------------------------------------------------

def build_models(cfg: TrainConfig, gen_cfg: GeneratorConfig = GeneratorConfig(),
                 disc_cfg: DiscriminatorConfig = None,
                 uv_cfg: UvPredictorConfig = UvPredictorConfig()):
    if disc_cfg is None:
        disc_cfg = DiscriminatorConfig(resolutions=cfg.loss_resolutions)
    gen = Generator(gen_cfg, rng=np.random.default_rng([cfg.seed, 101]))
    disc = SpectrogramDiscriminator(disc_cfg, rng=np.random.default_rng([cfg.seed, 102]))
    uvp = UvPredictor(uv_cfg, rng=np.random.default_rng([cfg.seed, 103]))
    return gen, disc, uvp


def _augment_crop(crop_f32: np.ndarray, params: aug.AugmentParams) -> np.ndarray:
    """Run one augmentation on a training crop, level-matched back."""
    x = Waveform(crop_f32.astype(np.float64), SAMPLE_RATE)
    peak = np.max(np.abs(x.samples)) if len(x) else 0.0
    out = aug.apply_augmentation(x, params).samples
    if params.method in ("hs", "hn") and peak > 1e-9:
        out = out * (peak / aug.PEAK_NORM)  # those paths renormalize internally
    return out.astype(np.float32)


def _stft_loss_and_grads(batch_audio, bands, fake_audio, gen_bank, cfg):
    """Full-band and sub-band spectral losses with gradients for both
    generator outputs."""
    n = batch_audio.shape[0]
    n_bands = bands.shape[1]
    grad_audio = np.zeros_like(fake_audio, dtype=np.float64)
    grad_bands = np.zeros_like(bands, dtype=np.float64)
    full_total = 0.0
    sub_total = 0.0
    res_full = cfg.loss_resolutions
    res_sub = cfg.subband_loss_resolutions
    for i in range(n):
        real = batch_audio[i].astype(np.float64)
        fake = fake_audio[i].astype(np.float64)
        rep, g = multi_res_stft_loss_grad(real, fake, res_full, sc_floor=SC_FLOOR)
        full_total += rep.total / n
        grad_audio[i] += g / n

        real_bands = pqmf.analysis(Waveform(real, SAMPLE_RATE), gen_bank).bands
        for b in range(n_bands):
            rep, g = multi_res_stft_loss_grad(real_bands[b],
                                              bands[i, b].astype(np.float64),
                                              res_sub, sc_floor=SC_FLOOR)
            sub_total += rep.total / (n * n_bands)
            grad_bands[i, b] += g / (n * n_bands)
    return full_total, sub_total, grad_audio, grad_bands


def train_step(batch, gen: Generator, disc: SpectrogramDiscriminator,
               opt_g: Adam, opt_d: Adam, policy: aug.AugmentPolicy,
               rng: np.random.Generator, phase: str,
               cfg: TrainConfig = TrainConfig(), step: int = 0) -> LossReport:
    """One optimization step; `phase` is "pretrain" or "adversarial"."""
    if phase not in ("pretrain", "adversarial"):
        raise InvalidInput(f"unknown phase {phase!r}")
    n = batch["audio"].shape[0]
    bands, fake = gen.forward(batch["mel"], batch["voiced"], train=True, rng=rng)
    full_loss, sub_loss, grad_audio, grad_bands = _stft_loss_and_grads(
        batch["audio"], bands, fake, gen.bank, cfg)

    report = {"d_real": 0.0, "d_fake_gen": 0.0, "d_fake_aug": 0.0, "d_total": 0.0,
              "g_adv": 0.0, "stft_fullband": full_loss, "stft_subband": sub_loss}
    n_aug = 0

    if phase == "adversarial":
        # fresh fakes for the discriminator, one batch of each kind
        aug_rows = []
        for i in range(n):
            params_list = aug.sample_params(policy, rng)
            n_aug = len(params_list)
            for params in params_list:
                aug_rows.append(_augment_crop(batch["audio"][i], params))
        stacked = np.concatenate([batch["audio"], fake] +
                                 ([np.stack(aug_rows)] if aug_rows else []), axis=0)
        scores = disc.forward(stacked)
        n_res = len(scores)
        grads = []
        d_real = d_gen = d_aug = 0.0
        for s in scores:
            s_real, s_gen, s_aug = s[:n], s[n:2 * n], s[2 * n:]
            d_real += np.mean((s_real - 1.0) ** 2) / n_res
            d_gen += np.mean(s_gen ** 2) / n_res
            g = np.empty_like(s)
            g[:n] = 2.0 * (s_real - 1.0) / (s_real.size * n_res)
            g[n:2 * n] = 2.0 * s_gen / (s_gen.size * n_res)
            if s_aug.size:
                d_aug += cfg.aug_loss_weight * np.mean(s_aug ** 2) / n_res
                g[2 * n:] = (2.0 * cfg.aug_loss_weight * s_aug
                             / (s_aug.size * n_res))
            grads.append(g)
        disc.zero_grad()
        disc.backward(grads)
        opt_d.step()
        report.update(d_real=float(d_real), d_fake_gen=float(d_gen),
                      d_fake_aug=float(d_aug),
                      d_total=float(d_real + d_gen + d_aug))

        # generator adversarial pass against the updated discriminator
        scores_g = disc.forward(fake)
        g_adv = generator_adv_loss(scores_g)
        adv_grads = [2.0 * (s - 1.0) / (s.size * len(scores_g)) for s in scores_g]
        disc.zero_grad()
        grad_fake = disc.backward(adv_grads, to_input=True)
        disc.zero_grad()  # those gradients belong to the generator update only
        grad_audio = 0.5 * grad_audio + ADV_WEIGHT * grad_fake
        grad_bands = 0.5 * grad_bands
        report["g_adv"] = g_adv
        report["g_total"] = ADV_WEIGHT * g_adv + 0.5 * (full_loss + sub_loss)
    else:
        grad_audio = 0.5 * grad_audio
        grad_bands = 0.5 * grad_bands
        report["g_total"] = 0.5 * (full_loss + sub_loss)

    gen.zero_grad()
    gen.backward(grad_bands.astype(gen.dtype), grad_audio)
    opt_g.step()

    out = LossReport(step=step, n_aug_per_sample=n_aug, **report)
    if not all(np.isfinite(v) for v in (out.d_total, out.g_total,
                                        out.stft_fullband, out.stft_subband)):
        raise TrainingDiverged(f"non-finite loss at step {step}: {out}")
    return out


# ---------------------------------------------------------------------------
# voicing predictor training (separate from the vocoder loop)
# ---------------------------------------------------------------------------

def _uv_batch(entries, cfg, rng):
    t_frames = cfg.segment_frames
    mels, labels = [], []
    for _ in range(max(4, cfg.batch_size)):
        e = entries[int(rng.integers(len(entries)))]
        n_frames = e.mel.shape[1]
        t0 = int(rng.integers(max(1, n_frames - t_frames + 1)))
        mel = e.mel[:, t0:t0 + t_frames]
        if mel.shape[1] < t_frames:  # short file: left-pad with silence
            pad = t_frames - mel.shape[1]
            mel = np.pad(mel, ((0, 0), (pad, 0)), constant_values=np.log(1e-5))
            lab = np.pad(e.f0[t0:t0 + t_frames] > 0, (pad, 0))
        else:
            lab = e.f0[t0:t0 + t_frames] > 0
        mels.append(mel)
        labels.append(lab)
    return np.stack(mels), np.stack(labels).astype(np.float32)


def bce_with_logits(logits, labels):
    return float(np.mean(np.logaddexp(0.0, logits) - labels * logits))


def train_uv_predictor(index: DatasetIndex, cfg: TrainConfig,
                       uvp: UvPredictor = None, log=None):
    """Binary cross-entropy training against oracle voicing labels.

    The last fifth of the corpus (by path order) is held out; returns
    (predictor, held-out frame accuracy).
    """
    if not index.entries:
        raise InvalidInput("empty dataset")
    if uvp is None:
        uvp = UvPredictor(rng=np.random.default_rng([cfg.seed, 103]))
    n_hold = max(1, len(index.entries) // 5) if len(index.entries) > 1 else 0
    train_entries = index.entries[:-n_hold] if n_hold else index.entries
    hold_entries = index.entries[-n_hold:] if n_hold else index.entries
    opt = Adam(uvp, lr=cfg.uv_lr)
    for step in range(cfg.uv_train_steps):
        rng = np.random.default_rng([cfg.seed, 55, step])
        mel, labels = _uv_batch(train_entries, cfg, rng)
        probs = uvp.forward(mel, train=True, rng=rng)
        loss = bce_with_logits(uvp.last_logits, labels)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"UV predictor diverged at step {step}")
        uvp.zero_grad()
        uvp.backward((probs - labels) / labels.size)
        opt.step()
        if log and step % 100 == 0:
            log(f"uv step {step}: bce {loss:.4f}")
    correct = 0
    total = 0
    for e in hold_entries:
        probs = uvp.forward(e.mel[None])[0]
        correct += int(np.sum((probs > 0.5) == (e.f0 > 0)))
        total += e.f0.size
    return uvp, correct / max(total, 1)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def _model_tensors(gen, disc, uvp, opt_g, opt_d, step):
    tensors = {"meta.step": np.array([step], dtype=np.float32)}
    for prefix, model in (("gen", gen), ("disc", disc), ("uv", uvp)):
        for name, p in model.named_parameters():
            tensors[f"{prefix}.{name}"] = p
    for prefix, opt in (("opt_g", opt_g), ("opt_d", opt_d)):
        tensors[f"{prefix}.t"] = np.array([opt.state.step], dtype=np.float32)
        for name, m in opt.state.m.items():
            tensors[f"{prefix}.m.{name}"] = m
        for name, v in opt.state.v.items():
            tensors[f"{prefix}.v.{name}"] = v
    return tensors


def _load_params(layer, tensors, prefix):
    for name, p in layer.named_parameters():
        key = f"{prefix}.{name}"
        if key not in tensors:
            raise InvalidInput(f"checkpoint is missing tensor {key}")
        if tensors[key].shape != p.shape:
            raise InvalidInput(f"checkpoint tensor {key} has shape "
                               f"{tensors[key].shape}, expected {p.shape}")
        p[...] = tensors[key].astype(p.dtype)


def _load_opt(opt, tensors, prefix):
    opt.state.step = int(tensors[f"{prefix}.t"][0])
    for name in opt.state.m:
        opt.state.m[name][...] = tensors[f"{prefix}.m.{name}"]
        opt.state.v[name][...] = tensors[f"{prefix}.v.{name}"]


def save_checkpoint(path, cfg, gen, disc, uvp, opt_g, opt_d, step):
    write_checkpoint(path, feature_digest(cfg),
                     _model_tensors(gen, disc, uvp, opt_g, opt_d, step))


def latest_checkpoint(out_dir):
    paths = sorted(Path(out_dir).glob("ckpt_*.rmck"))
    return paths[-1] if paths else None


# ---------------------------------------------------------------------------
# the full run
# ---------------------------------------------------------------------------

def train(cfg: TrainConfig, log=print, report_sink: list = None) -> Path:
    """Index, train the voicing predictor, pretrain, adversarial phase.

    Returns the final checkpoint path.  If out_dir already holds a
    checkpoint and cfg.resume is set, training continues from it with
    continuous step numbering.  `report_sink`, if given, collects the
    per-step LossReport objects.
    """
    if not cfg.data_dir or not cfg.out_dir:
        raise InvalidInput("config must set data_dir and out_dir")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(config_text(cfg))
    index = index_dataset(cfg.data_dir, out_dir / "cache")

    gen, disc, uvp = build_models(cfg)
    opt_g = Adam(gen, lr=cfg.lr_g, beta1=cfg.adam_beta1, beta2=cfg.adam_beta2)
    opt_d = Adam(disc, lr=cfg.lr_d, beta1=cfg.adam_beta1, beta2=cfg.adam_beta2)
    policy = aug.AugmentPolicy(cfg.augment_policy)
    csv_path = out_dir / "losses.csv"

    start_step = 0
    resume_from = latest_checkpoint(out_dir) if cfg.resume else None
    if resume_from is not None:
        digest, tensors = read_checkpoint(resume_from)
        if digest != feature_digest(cfg):
            raise InvalidInput(f"checkpoint {resume_from} was built with a "
                               "different feature configuration")
        for prefix, model in (("gen", gen), ("disc", disc), ("uv", uvp)):
            _load_params(model, tensors, prefix)
        _load_opt(opt_g, tensors, "opt_g")
        _load_opt(opt_d, tensors, "opt_d")
        start_step = int(tensors["meta.step"][0])
        if log:
            log(f"resuming from {resume_from} at step {start_step}")
    else:
        uvp, uv_acc = train_uv_predictor(index, cfg)
        if log:
            log(f"uv predictor held-out accuracy: {uv_acc:.3f}")
        csv_path.write_text(CSV_HEADER + "\n")

    with open(csv_path, "a") as csv:
        for step in range(start_step + 1, cfg.total_steps + 1):
            phase = "pretrain" if step <= cfg.pretrain_steps else "adversarial"
            rng = np.random.default_rng([cfg.seed, step])
            batch = sample_batch(index, cfg, rng)
            report = train_step(batch, gen, disc, opt_g, opt_d, policy, rng,
                                phase, cfg, step=step)
            if report_sink is not None:
                report_sink.append(report)
            csv.write(report.csv_row() + "\n")
            if log and step % 50 == 0:
                log(f"step {step} [{phase}] stft {report.stft_fullband:.4f} "
                    f"d_total {report.d_total:.4f}")
            if step % cfg.checkpoint_interval == 0 or step == cfg.total_steps:
                csv.flush()
                save_checkpoint(out_dir / f"ckpt_{step:06d}.rmck", cfg,
                                gen, disc, uvp, opt_g, opt_d, step)
    return out_dir / f"ckpt_{cfg.total_steps:06d}.rmck"


# ---------------------------------------------------------------------------
# inference and evaluation
# ---------------------------------------------------------------------------

def load_vocoder(ckpt_path, cfg: TrainConfig = TrainConfig()):
    """Generator + voicing predictor from a checkpoint, inference-ready."""
    digest, tensors = read_checkpoint(ckpt_path)
    if digest != feature_digest(cfg):
        raise InvalidInput("checkpoint feature configuration does not match")
    gen = Generator(GeneratorConfig())
    uvp = UvPredictor(UvPredictorConfig())
    _load_params(gen, tensors, "gen")
    _load_params(uvp, tensors, "uv")
    return gen, uvp


def mel_from_wav(wav: Waveform) -> MelSpectrogram:
    samples = wav.samples.astype(np.float64)
    peak = np.max(np.abs(samples)) if samples.size else 0.0
    if peak > 1e-9:
        samples = samples * (PEAK / peak)
    return log_mel(Waveform(samples, wav.sample_rate), FEATURE_STFT, FEATURE_FB)


def copysyn(ckpt_path, source, cfg: TrainConfig = TrainConfig()) -> Waveform:
    """Re-synthesize from a WAV path, a Waveform, or a mel array."""
    gen, uvp = load_vocoder(ckpt_path, cfg)
    if isinstance(source, (str, Path)):
        mel = mel_from_wav(read_wav(source, cfg.sample_rate))
    elif isinstance(source, Waveform):
        mel = mel_from_wav(source)
    elif isinstance(source, MelSpectrogram):
        mel = source
    else:
        arr = np.asarray(source, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[0] != FEATURE_FB.n_mels:
            raise InvalidInput(f"mel tensor must be ({FEATURE_FB.n_mels}, T), "
                               f"got {arr.shape}")
        mel = MelSpectrogram(arr, FEATURE_STFT, cfg.sample_rate)
    mask = uvp.predict_mask(mel)
    _, audio = gen.forward(mel.data[None].astype(np.float32),
                           mask.flags[None], train=False)
    return Waveform(audio[0].astype(np.float64), cfg.sample_rate)


def evaluate(ref_dir, test_dir, f0_cfg: F0Config = None):
    """Pairwise F0-RMSE and spectral loss for same-named WAVs.

    Returns (rows, skipped): rows are (name, f0_rmse, common_voiced,
    stft_loss) tuples plus nothing aggregated; unpaired names are
    reported, not an error.
    """
    ref_dir, test_dir = Path(ref_dir), Path(test_dir)
    refs = {p.name: p for p in sorted(ref_dir.glob("*.wav"))}
    tests = {p.name: p for p in sorted(test_dir.glob("*.wav"))}
    names = sorted(set(refs) & set(tests))
    skipped = sorted(set(refs) ^ set(tests))
    if f0_cfg is None:
        f0_cfg = F0Config(hop=FEATURE_STFT.hop)
    rows = []
    for name in names:
        ref = read_wav(refs[name], SAMPLE_RATE)
        test = read_wav(tests[name], SAMPLE_RATE)
        n = min(len(ref), len(test))
        ref = Waveform(ref.samples[:n], SAMPLE_RATE)
        test = Waveform(test.samples[:n], SAMPLE_RATE)
        rmse, count = f0_rmse(estimate_f0(ref, f0_cfg), estimate_f0(test, f0_cfg),
                              return_count=True)
        loss = multi_res_stft_loss(ref, test).total
        rows.append((name, rmse, count, loss))
    return rows, skipped
