"""WAV reading/writing and sample-rate conversion.

The reader accepts PCM16 and float32 WAVs at any rate, keeps the first
channel, and can resample to the pipeline rate with a Kaiser
windowed-sinc polyphase filter (32 taps per phase).
"""

import numpy as np
from scipy.io import wavfile
from scipy.signal import upfirdn
from scipy.signal.windows import kaiser

from .dsp import SAMPLE_RATE, Waveform
from .errors import InvalidInput

RESAMPLE_TAPS_PER_PHASE = 32
RESAMPLE_BETA = 8.6


def read_wav(path, target_rate: int | None = SAMPLE_RATE) -> Waveform:
    """Load a WAV as mono float64 in [-1, 1], optionally resampled."""
    try:
        rate, data = wavfile.read(path)
    except Exception as exc:
        raise InvalidInput(f"unreadable WAV {path}: {exc}") from exc
    if data.ndim > 1:
        data = data[:, 0]
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    else:
        raise InvalidInput(f"unsupported WAV sample format {data.dtype} in {path}")
    wav = Waveform(samples, int(rate))
    if target_rate is not None and rate != target_rate:
        wav = resample(wav, target_rate)
    return wav


def write_wav(path, x: Waveform):
    """Write 16-bit PCM; samples are clipped to [-1, 1] first."""
    clipped = np.clip(x.samples, -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype(np.int16)
    wavfile.write(path, x.sample_rate, pcm)


def resample(x: Waveform, target_rate: int) -> Waveform:
    """Rational-ratio polyphase resampling with a Kaiser-windowed sinc."""
    if target_rate <= 0:
        raise InvalidInput("target_rate must be positive")
    if x.sample_rate == target_rate:
        return x
    g = np.gcd(x.sample_rate, target_rate)
    up = target_rate // g
    down = x.sample_rate // g
    n_taps = RESAMPLE_TAPS_PER_PHASE * up
    if n_taps % 2 == 0:
        n_taps += 1
    cutoff = min(1.0 / up, 1.0 / down)
    n = np.arange(n_taps) - (n_taps - 1) / 2
    with np.errstate(invalid="ignore"):
        h = np.sin(np.pi * cutoff * n) / (np.pi * n)
    h[(n_taps - 1) // 2] = cutoff
    h = h * kaiser(n_taps, RESAMPLE_BETA) * up

    out_len = int(np.ceil(len(x) * up / down))
    y = upfirdn(h, x.samples, up=up, down=down)
    # compensate the filter's group delay at the output rate
    delay = ((n_taps - 1) // 2) // down
    y = y[delay:delay + out_len]
    if y.size < out_len:
        y = np.pad(y, (0, out_len - y.size))
    return Waveform(y, target_rate)
