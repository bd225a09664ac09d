"""Variational latent model: spectrogram posterior encoder, affine-coupling
normalizing flow, alignment-expanded phoneme prior, and the Monte-Carlo KL
objective (which includes the flow's log-determinant correction).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn


@dataclass
class GaussianParams:
    mu: torch.Tensor     # (B, N, T)
    sigma: torch.Tensor  # (B, N, T), strictly positive

    def __post_init__(self):
        if self.mu.shape != self.sigma.shape:
            raise ValueError("mu and sigma must have identical shapes")
        if not torch.all(self.sigma > 0):
            raise ValueError("sigma must be strictly positive")


def _check_finite(x: torch.Tensor, name: str) -> None:
    if not torch.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite values")


def gaussian_log_density(x: torch.Tensor, mu: torch.Tensor,
                         sigma: torch.Tensor) -> torch.Tensor:
    """Elementwise diagonal-Gaussian log density."""
    return (
        -0.5 * math.log(2.0 * math.pi)
        - torch.log(sigma)
        - 0.5 * ((x - mu) / sigma) ** 2
    )


class GatedDilatedStack(nn.Module):
    """Dilated 1-D convs with gated tanh/sigmoid activations and residual
    connections, optionally conditioned on a per-sequence vector."""

    def __init__(self, channels: int, n_layers: int, kernel_size: int = 5,
                 cond_dim: int = 0):
        super().__init__()
        self.convs = nn.ModuleList()
        self.res_skip = nn.ModuleList()
        self.cond = nn.ModuleList()
        for i in range(n_layers):
            dilation = 2 ** i
            pad = (kernel_size - 1) * dilation // 2
            self.convs.append(
                nn.Conv1d(channels, 2 * channels, kernel_size,
                          dilation=dilation, padding=pad)
            )
            self.res_skip.append(nn.Conv1d(channels, channels, 1))
            if cond_dim:
                self.cond.append(nn.Conv1d(cond_dim, 2 * channels, 1))

    def forward(self, x: torch.Tensor, g: torch.Tensor | None = None,
                mask: torch.Tensor | None = None) -> torch.Tensor:
        # masking after every layer keeps padded frames at zero, so batch
        # padding is indistinguishable from the convs' implicit zero padding
        if mask is not None:
            x = x * mask
        for i, conv in enumerate(self.convs):
            h = conv(x)
            if g is not None and len(self.cond) > 0:
                h = h + self.cond[i](g)
            a, b = h.chunk(2, dim=1)
            h = torch.tanh(a) * torch.sigmoid(b)
            x = x + self.res_skip[i](h)
            if mask is not None:
                x = x * mask
        return x


class PosteriorEncoder(nn.Module):
    """Predicts (mu, sigma) of the latent posterior from the spectrogram
    with the global style vector concatenated channel-wise at the input."""

    def __init__(self, spec_channels: int, latent_channels: int, hidden: int,
                 n_layers: int, global_dim: int, sigma_floor: float = 1e-4):
        super().__init__()
        self.sigma_floor = sigma_floor
        self.pre = nn.Conv1d(spec_channels + global_dim, hidden, 1)
        self.stack = GatedDilatedStack(hidden, n_layers)
        self.proj = nn.Conv1d(hidden, 2 * latent_channels, 1)

    def forward(self, spec: torch.Tensor, s_global: torch.Tensor,
                mask: torch.Tensor | None = None) -> GaussianParams:
        _check_finite(spec, "spectrogram")
        _check_finite(s_global, "global style vector")
        B, _, T = spec.shape
        g = s_global.unsqueeze(-1).expand(B, s_global.shape[-1], T)
        h = self.pre(torch.cat([spec, g], dim=1))
        if mask is not None:
            h = h * mask
        h = self.stack(h, mask=mask)
        stats = self.proj(h)
        mu, log_sigma = stats.chunk(2, dim=1)
        sigma = torch.exp(log_sigma).clamp(min=self.sigma_floor)
        return GaussianParams(mu, sigma)


def sample_posterior(params: GaussianParams, noise: torch.Tensor) -> torch.Tensor:
    """Reparameterized draw: mu + sigma * noise."""
    if noise.shape != params.mu.shape:
        raise ValueError(
            f"noise shape {tuple(noise.shape)} does not match parameters "
            f"{tuple(params.mu.shape)}"
        )
    return params.mu + params.sigma * noise


class AffineCouplingLayer(nn.Module):
    """Channel-split affine coupling. The first half parameterizes an
    affine map of the second half; the coupling net's output projection is
    zero-initialized so the layer starts as the identity."""

    def __init__(self, channels: int, hidden: int, n_layers: int,
                 kernel_size: int = 5):
        super().__init__()
        if channels % 2 != 0:
            raise ValueError("flow channels must be even")
        self.half = channels // 2
        self.pre = nn.Conv1d(self.half, hidden, 1)
        self.stack = GatedDilatedStack(hidden, n_layers, kernel_size)
        self.post = nn.Conv1d(hidden, channels, 1)
        nn.init.zeros_(self.post.weight)
        nn.init.zeros_(self.post.bias)

    def _stats(self, x0: torch.Tensor, mask: torch.Tensor | None = None):
        h = self.pre(x0)
        if mask is not None:
            h = h * mask
        h = self.stack(h, mask=mask)
        m, logs = self.post(h).chunk(2, dim=1)
        return m, logs

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None):
        x0, x1 = x[:, :self.half], x[:, self.half:]
        m, logs = self._stats(x0, mask)
        if mask is not None:
            m, logs = m * mask, logs * mask
        y1 = x1 * torch.exp(logs) + m
        if mask is not None:
            y1 = y1 * mask
        logdet = logs.sum(dim=(1, 2))
        return torch.cat([x0, y1], dim=1), logdet

    def inverse(self, y: torch.Tensor, mask: torch.Tensor | None = None):
        y0, y1 = y[:, :self.half], y[:, self.half:]
        m, logs = self._stats(y0, mask)
        if mask is not None:
            m, logs = m * mask, logs * mask
        x1 = (y1 - m) * torch.exp(-logs)
        if mask is not None:
            x1 = x1 * mask
        return torch.cat([y0, x1], dim=1)


class NormalizingFlow(nn.Module):
    """Stack of affine coupling layers with a channel flip between layers."""

    def __init__(self, channels: int, hidden: int, n_flows: int, wn_layers: int):
        super().__init__()
        self.layers = nn.ModuleList(
            AffineCouplingLayer(channels, hidden, wn_layers)
            for _ in range(n_flows)
        )

    def forward(self, z: torch.Tensor, mask: torch.Tensor | None = None):
        _check_finite(z, "flow input")
        logdet = z.new_zeros(z.shape[0])
        for layer in self.layers:
            z, ld = layer(z, mask)
            logdet = logdet + ld
            z = torch.flip(z, dims=[1])
        return z, logdet

    def inverse(self, z_flow: torch.Tensor, mask: torch.Tensor | None = None):
        _check_finite(z_flow, "flow input")
        z = z_flow
        for layer in reversed(self.layers):
            z = torch.flip(z, dims=[1])
            z = layer.inverse(z, mask)
        return z


class PriorProjection(nn.Module):
    """Per-phoneme (mu, sigma) heads over the style-integrated phoneme
    sequence, expanded to frame rate through a hard alignment."""

    def __init__(self, d_model: int, latent_channels: int,
                 sigma_floor: float = 1e-4):
        super().__init__()
        self.latent_channels = latent_channels
        self.sigma_floor = sigma_floor
        self.proj = nn.Linear(d_model, 2 * latent_channels)

    def phoneme_params(self, x_hat: torch.Tensor) -> GaussianParams:
        """x_hat: (B, L, d) -> per-phoneme params, shape (B, N, L)."""
        stats = self.proj(x_hat).transpose(1, 2)
        mu, log_sigma = stats.chunk(2, dim=1)
        sigma = torch.exp(log_sigma).clamp(min=self.sigma_floor)
        return GaussianParams(mu, sigma)

    def forward(self, x_hat: torch.Tensor, alignment: torch.Tensor) -> GaussianParams:
        """alignment: binary (B, L, T); frame j inherits the parameters of
        its aligned phoneme."""
        params = self.phoneme_params(x_hat)
        if alignment.shape[-2] != x_hat.shape[-2]:
            raise ValueError(
                f"alignment has {alignment.shape[-2]} phoneme rows but input "
                f"has {x_hat.shape[-2]} phonemes"
            )
        a = alignment.to(params.mu.dtype)
        mu = torch.matmul(params.mu, a)        # (B, N, L) @ (B, L, T)
        sigma = torch.matmul(params.sigma, a)
        return GaussianParams(mu, sigma.clamp(min=self.sigma_floor))


def kl_loss(z: torch.Tensor, z_flow: torch.Tensor, logdet: torch.Tensor,
            posterior: GaussianParams, prior: GaussianParams,
            mask: torch.Tensor | None = None) -> torch.Tensor:
    """Monte-Carlo KL: log q(Z | posterior) - log p(Z_flow | prior) - logdet,
    summed over channels and averaged over unmasked frames."""
    log_q = gaussian_log_density(z, posterior.mu, posterior.sigma)
    log_p = gaussian_log_density(z_flow, prior.mu, prior.sigma)
    diff = (log_q - log_p).sum(dim=1)  # (B, T)
    if mask is not None:
        m = mask.squeeze(1)
        per_item = (diff * m).sum(dim=1) - logdet
        frames = m.sum(dim=1).clamp(min=1)
    else:
        per_item = diff.sum(dim=1) - logdet
        frames = torch.full_like(per_item, diff.shape[1])
    return (per_item / frames).mean()


def closed_form_kl(q: GaussianParams, p: GaussianParams) -> torch.Tensor:
    """Exact KL(q || p) for diagonal Gaussians; oracle for the estimator."""
    return (
        torch.log(p.sigma / q.sigma)
        + (q.sigma ** 2 + (q.mu - p.mu) ** 2) / (2 * p.sigma ** 2)
        - 0.5
    )
