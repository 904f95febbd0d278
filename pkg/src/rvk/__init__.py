"""Sub-band GAN vocoder toolkit.

Spectral frontend (`dsp`), pseudo-QMF filterbank (`pqmf`), pitch and
voicing (`pitch`), discriminator-side data augmentation (`augment`),
a from-scratch layer/optimizer kit (`nn`), the vocoder networks
(`model`), and the training/evaluation pipeline (`trainer`).
"""

from .dsp import (ComplexSpectrogram, MelFilterbank, MelSpectrogram,
                  SpectralLossReport, StftConfig, Waveform, istft, log_mel,
                  mel_filterbank, multi_res_stft_loss, stft)
from .errors import ContractError, InvalidInput, ShapeError, TrainingDiverged
from .pitch import F0Config, F0Contour, UvMask, estimate_f0, f0_rmse, uv_mask

__all__ = [
    "ComplexSpectrogram", "ContractError", "F0Config", "F0Contour",
    "InvalidInput", "MelFilterbank", "MelSpectrogram", "ShapeError",
    "SpectralLossReport", "StftConfig", "TrainingDiverged", "UvMask",
    "Waveform", "estimate_f0", "f0_rmse", "istft", "log_mel",
    "mel_filterbank", "multi_res_stft_loss", "stft", "uv_mask",
]

__version__ = "0.1.0"
