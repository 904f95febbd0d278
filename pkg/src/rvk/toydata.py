"""Deterministic synthetic audio for tests, demos, and the toy corpus.

Speech-like enough for the pipeline to be exercised honestly: harmonic
tones with vibrato and amplitude envelopes stand in for voiced speech,
filtered noise bursts for unvoiced segments, plus plain silence.
"""

import numpy as np

from .audio_io import write_wav
from .dsp import SAMPLE_RATE, Waveform


def sine(freq, seconds=1.0, sr=SAMPLE_RATE, amplitude=0.8, phase=0.0):
    t = np.arange(int(seconds * sr)) / sr
    return Waveform(amplitude * np.sin(2 * np.pi * freq * t + phase), sr)


def harmonic_tone(f0, seconds=1.0, sr=SAMPLE_RATE, n_harmonics=8, amplitude=0.8,
                  vibrato_hz=0.0, vibrato_depth=0.0, decay=0.7, rng=None):
    """Sum of harmonics with geometric amplitude decay and optional vibrato."""
    n = int(seconds * sr)
    t = np.arange(n) / sr
    f_inst = f0 * (1.0 + vibrato_depth * np.sin(2 * np.pi * vibrato_hz * t))
    phase = 2 * np.pi * np.cumsum(f_inst) / sr
    rng = rng or np.random.default_rng(0)
    x = np.zeros(n)
    for k in range(1, n_harmonics + 1):
        if k * f0 * 1.1 >= sr / 2:
            break
        x += decay ** (k - 1) * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    x *= amplitude / np.max(np.abs(x))
    return Waveform(x, sr)


def envelope_peaked_tone(f0, peak_hz, seconds=1.0, sr=SAMPLE_RATE, width_hz=800.0,
                         amplitude=0.8, rng=None):
    """Harmonic series whose amplitudes follow a Gaussian bump at peak_hz."""
    n = int(seconds * sr)
    t = np.arange(n) / sr
    rng = rng or np.random.default_rng(0)
    x = np.zeros(n)
    k = 1
    while k * f0 < 0.45 * sr:
        f = k * f0
        amp = np.exp(-0.5 * ((f - peak_hz) / width_hz) ** 2) + 1e-3
        x += amp * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
        k += 1
    x *= amplitude / np.max(np.abs(x))
    return Waveform(x, sr)


def noise_burst(seconds=0.5, sr=SAMPLE_RATE, amplitude=0.3, seed=0, tilt=0.0):
    """White noise, optionally high-tilted by simple differencing."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(int(seconds * sr))
    if tilt > 0:
        x = x - tilt * np.concatenate([[0.0], x[:-1]])
    x *= amplitude / np.max(np.abs(x))
    return Waveform(x, sr)


def speechlike_utterance(seconds, seed, sr=SAMPLE_RATE):
    """Alternating voiced tones and unvoiced bursts with short gaps.

    A low broadband noise floor sits under everything, like breath: it
    keeps the spectra dense, which conditions spectral losses the way
    real speech does.
    """
    rng = np.random.default_rng(seed)
    pieces = []
    total = 0
    target = int(seconds * sr)
    # a small pitch inventory keeps the task memorizable at desk scale;
    # the pitches are multiples of the frame rate (sr/hop = 93.75 Hz), the
    # pitch grid a frame-rate-periodic upsampling generator can realize
    pitch_classes = (187.5, 281.25)
    while total < target:
        kind = rng.random()
        if kind < 0.55:
            dur = rng.uniform(0.25, 0.6)
            f0 = pitch_classes[int(rng.integers(len(pitch_classes)))]
            seg = harmonic_tone(f0, dur, sr, n_harmonics=int(rng.integers(8, 16)),
                                amplitude=rng.uniform(0.5, 0.85),
                                vibrato_hz=rng.uniform(3.0, 6.0),
                                vibrato_depth=rng.uniform(0.0, 0.02), rng=rng).samples
        elif kind < 0.85:
            dur = rng.uniform(0.1, 0.3)
            seg = noise_burst(dur, sr, amplitude=rng.uniform(0.15, 0.4),
                              seed=int(rng.integers(1 << 31)),
                              tilt=rng.uniform(0.0, 0.9)).samples
        else:
            seg = np.zeros(int(rng.uniform(0.05, 0.15) * sr))
        pieces.append(seg)
        total += seg.size
    out = np.concatenate(pieces)[:target]
    floor = noise_burst(seconds, sr, amplitude=1.0, seed=seed + 77).samples[:target]
    return Waveform(out + 0.02 * floor, sr)


def sustained_tone(f0, seconds=2.0, sr=SAMPLE_RATE, seed=0):
    """Stationary rich tone over a faint noise floor; the easiest kind of
    training item for a vocoder to memorize."""
    tone = harmonic_tone(f0, seconds, sr, n_harmonics=40, amplitude=0.75,
                         decay=0.82, rng=np.random.default_rng(seed))
    floor = noise_burst(seconds, sr, amplitude=1.0, seed=seed + 77)
    return Waveform(tone.samples + 0.02 * floor.samples[:len(tone)], sr)


def build_corpus(directory, total_seconds=10.0, seed=0, sr=SAMPLE_RATE,
                 utterance_seconds=2.5):
    """Write a small WAV corpus; returns the list of paths.

    The first two files are sustained tones at the corpus pitch classes;
    the rest are speech-like utterances.
    """
    directory.mkdir(parents=True, exist_ok=True)
    n_files = max(1, int(round(total_seconds / utterance_seconds)))
    paths = []
    for i, f0 in enumerate((187.5, 281.25)):
        if i >= n_files:
            break
        path = directory / f"tone{int(f0)}.wav"
        write_wav(path, sustained_tone(f0, utterance_seconds, sr, seed=seed + i))
        paths.append(path)
    for i in range(max(0, n_files - len(paths))):
        wav = speechlike_utterance(utterance_seconds, seed=seed * 1000 + i, sr=sr)
        path = directory / f"utt{i:03d}.wav"
        write_wav(path, wav)
        paths.append(path)
    return paths
