"""Log-mel spectrogram used for the posterior input and the
reconstruction loss.

Framing is centerless: T = 1 + floor((len - win_length) / hop_length).
Magnitudes go through an HTK-scale triangular mel filterbank, are clamped
at the configured floor, and logged. The transform is differentiable so
the reconstruction loss can backpropagate into generated waveforms.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import torch


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular HTK-mel filters, shape (n_mels, n_fft // 2 + 1)."""
    fmax = fmax if fmax is not None else sample_rate / 2.0
    n_bins = n_fft // 2 + 1
    fft_freqs = np.linspace(0.0, sample_rate / 2.0, n_bins)
    mel_pts = np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_mels + 2)
    hz_pts = _mel_to_hz(mel_pts)
    fb = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        left, center, right = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (fft_freqs - left) / max(center - left, 1e-12)
        down = (right - fft_freqs) / max(right - center, 1e-12)
        fb[m] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


@lru_cache(maxsize=8)
def _cached_tensors(sample_rate, n_fft, n_mels, win_length, dtype_str):
    dtype = getattr(torch, dtype_str)
    fb = torch.from_numpy(mel_filterbank(sample_rate, n_fft, n_mels)).to(dtype)
    window = torch.hann_window(win_length, periodic=True, dtype=dtype)
    return fb, window


def compute_mel(waveform: torch.Tensor, *, sample_rate: int = 22050,
                n_fft: int = 1024, win_length: int = 1024,
                hop_length: int = 256, n_mels: int = 80,
                mel_floor: float = 1e-5) -> torch.Tensor:
    """waveform: (samples,) or (B, samples) -> (n_mels, T) or (B, n_mels, T)."""
    squeeze = waveform.dim() == 1
    if squeeze:
        waveform = waveform.unsqueeze(0)
    if waveform.shape[-1] < win_length:
        raise ValueError(
            f"waveform has {waveform.shape[-1]} samples, shorter than the "
            f"analysis window ({win_length})"
        )
    if not torch.isfinite(waveform).all():
        raise ValueError("waveform contains non-finite samples")
    fb, window = _cached_tensors(
        sample_rate, n_fft, n_mels, win_length, str(waveform.dtype).split(".")[-1]
    )
    fb = fb.to(waveform.device)
    window = window.to(waveform.device)
    spec = torch.stft(
        waveform, n_fft=n_fft, hop_length=hop_length, win_length=win_length,
        window=window, center=False, return_complex=True,
    )
    magnitude = spec.abs()
    mel = torch.matmul(fb, magnitude)
    out = torch.log(mel.clamp(min=mel_floor))
    return out.squeeze(0) if squeeze else out


def mel_from_config(waveform: torch.Tensor, cfg) -> torch.Tensor:
    return compute_mel(
        waveform,
        sample_rate=cfg.sample_rate,
        n_fft=cfg.n_fft,
        win_length=cfg.win_length,
        hop_length=cfg.hop_length,
        n_mels=cfg.n_mels,
        mel_floor=cfg.mel_floor,
    )


def frame_count(num_samples: int, win_length: int, hop_length: int) -> int:
    if num_samples < win_length:
        return 0
    return 1 + (num_samples - win_length) // hop_length
