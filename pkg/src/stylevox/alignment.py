"""Monotonic alignment search, duration extraction, the stochastic
duration predictor, and inference-time length regulation.

MAS finds the hard monotonic surjective phoneme-to-frame path maximizing
the summed frame log-likelihoods via dynamic programming
Q[t, j] = log_lik[t, j] + max(Q[t, j-1], Q[t-1, j-1]), with ties broken
by staying on the current phoneme.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

NEG_INF = -np.inf


def mas_align(log_lik: np.ndarray) -> np.ndarray:
    """log_lik: (L, T) finite frame log-likelihoods, T >= L.

    Returns a binary (L, T) matrix with exactly one 1 per column, a
    monotonic path, and at least one frame per phoneme.
    """
    log_lik = np.asarray(log_lik, dtype=np.float64)
    if log_lik.ndim != 2:
        raise ValueError("log_lik must be a 2-D matrix")
    L, T = log_lik.shape
    if T < L:
        raise ValueError(f"need at least as many frames as phonemes (L={L}, T={T})")
    if not np.all(np.isfinite(log_lik)):
        raise ValueError("log_lik contains non-finite values")

    q = np.full((L, T), NEG_INF)
    # cell (t, j) is reachable iff t <= j and the remaining phonemes fit
    for t in range(L):
        for j in range(t, T - (L - 1 - t)):
            if t == 0:
                prev = 0.0 if j == 0 else q[0, j - 1]
            elif j == 0:
                prev = NEG_INF
            else:
                prev = max(q[t, j - 1], q[t - 1, j - 1])
            q[t, j] = log_lik[t, j] + prev

    path = np.zeros((L, T), dtype=np.int8)
    t = L - 1
    for j in range(T - 1, -1, -1):
        path[t, j] = 1
        if j > 0 and t > 0:
            # on ties, transition as late as possible: the current phoneme
            # keeps the earlier frame
            if q[t - 1, j - 1] >= q[t, j - 1]:
                t -= 1
    return path


def mas_score(log_lik: np.ndarray, path: np.ndarray) -> float:
    return float((np.asarray(log_lik) * path).sum())


def mas_align_batch(log_lik: torch.Tensor, in_lengths: torch.Tensor,
                    out_lengths: torch.Tensor) -> torch.Tensor:
    """Align each batch item independently; padded cells stay zero."""
    B, L, T = log_lik.shape
    out = torch.zeros_like(log_lik)
    values = log_lik.detach().cpu().numpy()
    for b in range(B):
        li, ti = int(in_lengths[b]), int(out_lengths[b])
        path = mas_align(values[b, :li, :ti])
        out[b, :li, :ti] = torch.from_numpy(path.astype(np.float32)).to(out.dtype)
    return out


def validate_alignment(a: np.ndarray) -> None:
    a = np.asarray(a)
    if a.ndim != 2 or not np.isin(a, (0, 1)).all():
        raise ValueError("alignment must be a binary L x T matrix")
    cols = a.sum(axis=0)
    if not np.all(cols == 1):
        raise ValueError("every frame must map to exactly one phoneme")
    rows = a.sum(axis=1)
    if not np.all(rows >= 1):
        raise ValueError("every phoneme must receive at least one frame")
    idx = np.argmax(a, axis=0)
    steps = np.diff(idx)
    if np.any((steps < 0) | (steps > 1)):
        raise ValueError("alignment is not monotonic")


def durations_from_alignment(a: np.ndarray) -> np.ndarray:
    """Row sums of a validated hard alignment; sums to T, all entries >= 1."""
    validate_alignment(a)
    return np.asarray(a).sum(axis=1).astype(np.int64)


class DurationPredictor(nn.Module):
    """Per-phoneme positive duration estimates from the style-integrated
    phoneme sequence.

    A conv stack produces hidden features; the stochastic branch pushes
    standard-normal noise through two feature-conditioned elementwise
    affine transforms before the exponential output head. With
    stochastic=False the noise path is skipped (mean prediction).
    """

    def __init__(self, d_model: int, hidden: int, kernel_size: int = 3,
                 stochastic: bool = True):
        super().__init__()
        pad = kernel_size // 2
        self.stochastic = stochastic
        self.conv1 = nn.Conv1d(d_model, hidden, kernel_size, padding=pad)
        self.norm1 = nn.LayerNorm(hidden)
        self.conv2 = nn.Conv1d(hidden, hidden, kernel_size, padding=pad)
        self.norm2 = nn.LayerNorm(hidden)
        self.mean_head = nn.Linear(hidden, 1)
        # noise-path affine parameters (scale, shift) x 2 transforms
        self.noise_head = nn.Linear(hidden, 4)
        nn.init.zeros_(self.noise_head.weight)
        nn.init.zeros_(self.noise_head.bias)

    def _features(self, x_hat: torch.Tensor) -> torch.Tensor:
        h = self.conv1(x_hat.transpose(1, 2)).transpose(1, 2)
        h = torch.relu(self.norm1(h))
        h = self.conv2(h.transpose(1, 2)).transpose(1, 2)
        return torch.relu(self.norm2(h))

    def forward(self, x_hat: torch.Tensor,
                generator: torch.Generator | None = None,
                noise_scale: float = 1.0) -> torch.Tensor:
        """x_hat: (B, L, d) -> positive durations (B, L)."""
        if not torch.isfinite(x_hat).all():
            raise ValueError("duration predictor input contains non-finite values")
        h = self._features(x_hat)
        log_d = self.mean_head(h).squeeze(-1)
        if self.stochastic:
            eps = torch.randn(
                log_d.shape, generator=generator,
                dtype=log_d.dtype, device=log_d.device,
            ) * noise_scale
            a1, b1, a2, b2 = self.noise_head(h).unbind(-1)
            u = torch.exp(a1) * eps + b1
            u = torch.exp(a2) * torch.tanh(u) + b2
            log_d = log_d + u
        return torch.exp(log_d)


def duration_loss(d: torch.Tensor, d_hat: torch.Tensor,
                  epsilon: float = 1e-9,
                  mask: torch.Tensor | None = None) -> torch.Tensor:
    """Log-domain MSE between reference and predicted durations."""
    if d.shape != d_hat.shape:
        raise ValueError(
            f"duration arrays differ in shape: {tuple(d.shape)} vs "
            f"{tuple(d_hat.shape)}"
        )
    sq = (torch.log(d.to(d_hat.dtype) + epsilon) - torch.log(d_hat + epsilon)) ** 2
    if mask is not None:
        return (sq * mask).sum() / mask.sum().clamp(min=1)
    return sq.mean()


def round_durations(d_hat: torch.Tensor, scale: float = 1.0) -> torch.Tensor:
    """Inference rounding rule: ceil after scaling, floored at one frame."""
    if scale <= 0:
        raise ValueError("duration scale must be positive")
    return torch.ceil(d_hat * scale).clamp(min=1).long()


def expand_by_duration(x_hat: torch.Tensor, d_hat: torch.Tensor,
                       scale: float = 1.0) -> torch.Tensor:
    """Replicate each phoneme row to frame rate: (L, d) -> (T', d) with
    T' = sum of the rounded durations."""
    if torch.any(d_hat <= 0):
        raise ValueError("durations must be positive")
    reps = round_durations(d_hat, scale)
    return torch.repeat_interleave(x_hat, reps, dim=0)


def frame_log_likelihood(z_flow: torch.Tensor, mu_phon: torch.Tensor,
                         sigma_phon: torch.Tensor) -> torch.Tensor:
    """Score every (phoneme, frame) pair: log N(z_j; mu_t, sigma_t) summed
    over latent channels. Shapes: z_flow (B, N, T), params (B, N, L);
    returns (B, L, T). Computed without gradient (alignment is detached).
    """
    with torch.no_grad():
        log_sigma = torch.log(sigma_phon)
        const = -0.5 * math.log(2.0 * math.pi) * z_flow.shape[1]
        # expand terms of -0.5((z - mu)/sigma)^2 to three matmul-friendly pieces
        inv_var = (sigma_phon ** -2)
        term_z2 = torch.matmul(inv_var.transpose(1, 2), -0.5 * z_flow ** 2)
        term_zmu = torch.matmul((mu_phon * inv_var).transpose(1, 2), z_flow)
        term_mu2 = (-0.5 * mu_phon ** 2 * inv_var - log_sigma).sum(dim=1, keepdim=True)
        return const + term_z2 + term_zmu + term_mu2.transpose(1, 2)
