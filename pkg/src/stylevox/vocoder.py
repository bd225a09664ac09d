"""Waveform decoder and multi-period discriminator with the GAN-side
losses: mel reconstruction (L1), least-squares adversarial pair, feature
matching, and the weighted total generator objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

LRELU_SLOPE = 0.1


def _check_finite(x: torch.Tensor, name: str) -> None:
    if not torch.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite values")


class ResBlock(nn.Module):
    """Dilated residual conv block (dilations 1, 3, 5)."""

    def __init__(self, channels: int, kernel_size: int):
        super().__init__()
        self.convs = nn.ModuleList()
        for dilation in (1, 3, 5):
            pad = (kernel_size - 1) * dilation // 2
            self.convs.append(
                nn.Conv1d(channels, channels, kernel_size,
                          dilation=dilation, padding=pad)
            )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for conv in self.convs:
            x = x + conv(F.leaky_relu(x, LRELU_SLOPE))
        return x


class WaveformDecoder(nn.Module):
    """Transposed-conv upsampling stack with residual blocks. The global
    style vector is concatenated channel-wise at the input; output length
    is exactly frames * prod(upsample_rates) and bounded by tanh."""

    def __init__(self, latent_channels: int, global_dim: int,
                 upsample_rates: tuple[int, ...],
                 upsample_kernel_sizes: tuple[int, ...],
                 initial_channels: int,
                 resblock_kernel_sizes: tuple[int, ...]):
        super().__init__()
        if len(upsample_rates) != len(upsample_kernel_sizes):
            raise ValueError("one kernel size per upsample rate required")
        self.hop = 1
        for r in upsample_rates:
            self.hop *= r
        self.pre = nn.Conv1d(latent_channels + global_dim, initial_channels, 7,
                             padding=3)
        self.ups = nn.ModuleList()
        self.resblocks = nn.ModuleList()
        ch = initial_channels
        for rate, kernel in zip(upsample_rates, upsample_kernel_sizes):
            self.ups.append(
                nn.ConvTranspose1d(ch, ch // 2, kernel, stride=rate,
                                   padding=(kernel - rate) // 2)
            )
            ch //= 2
            self.resblocks.append(
                nn.ModuleList(ResBlock(ch, k) for k in resblock_kernel_sizes)
            )
        self.post = nn.Conv1d(ch, 1, 7, padding=3)

    def forward(self, z: torch.Tensor, s_global: torch.Tensor) -> torch.Tensor:
        """z: (B, N, T_seg), s_global: (B, global_dim) -> (B, T_seg * hop)."""
        _check_finite(z, "decoder latent input")
        _check_finite(s_global, "global style vector")
        B, _, T = z.shape
        g = s_global.unsqueeze(-1).expand(B, s_global.shape[-1], T)
        x = self.pre(torch.cat([z, g], dim=1))
        for up, blocks in zip(self.ups, self.resblocks):
            x = up(F.leaky_relu(x, LRELU_SLOPE))
            acc = 0
            for block in blocks:
                acc = acc + block(x)
            x = acc / len(blocks)
        x = self.post(F.leaky_relu(x, LRELU_SLOPE))
        return torch.tanh(x).squeeze(1)

    @classmethod
    def from_config(cls, cfg):
        return cls(
            latent_channels=cfg.latent_channels,
            global_dim=cfg.global_dim,
            upsample_rates=tuple(cfg.upsample_rates),
            upsample_kernel_sizes=tuple(cfg.upsample_kernel_sizes),
            initial_channels=cfg.upsample_initial_channels,
            resblock_kernel_sizes=tuple(cfg.resblock_kernel_sizes),
        )


@dataclass
class DiscriminatorOutput:
    scores: list[torch.Tensor]
    features: list[list[torch.Tensor]]


class PeriodDiscriminator(nn.Module):
    """Reshapes the waveform into a period-p 2-D layout and applies a
    strided conv stack."""

    def __init__(self, period: int, base_channels: int = 8):
        super().__init__()
        self.period = period
        chans = [1, base_channels, base_channels * 4, base_channels * 16]
        self.convs = nn.ModuleList(
            nn.Conv2d(chans[i], chans[i + 1], (5, 1), stride=(3, 1),
                      padding=(2, 0))
            for i in range(len(chans) - 1)
        )
        self.post = nn.Conv2d(chans[-1], 1, (3, 1), padding=(1, 0))

    def forward(self, w: torch.Tensor):
        B, n = w.shape
        pad = (-n) % self.period
        if pad:
            w = F.pad(w, (0, pad), mode="reflect")
        x = w.view(B, 1, -1, self.period)
        features = []
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LRELU_SLOPE)
            features.append(x)
        x = self.post(x)
        features.append(x)
        return x.flatten(1), features


class MultiPeriodDiscriminator(nn.Module):
    def __init__(self, periods: tuple[int, ...] = (2, 3, 5, 7, 11),
                 base_channels: int = 8):
        super().__init__()
        self.periods = tuple(periods)
        self.branches = nn.ModuleList(
            PeriodDiscriminator(p, base_channels) for p in self.periods
        )

    def forward(self, w: torch.Tensor) -> DiscriminatorOutput:
        _check_finite(w, "discriminator input")
        scores, features = [], []
        for branch in self.branches:
            s, f = branch(w)
            scores.append(s)
            features.append(f)
        return DiscriminatorOutput(scores=scores, features=features)

    @classmethod
    def from_config(cls, cfg):
        return cls(tuple(cfg.mpd_periods), cfg.mpd_base_channels)


def recon_loss(mel_real: torch.Tensor, mel_fake: torch.Tensor) -> torch.Tensor:
    """Mean absolute error between real and generated mel frames."""
    if mel_real.shape != mel_fake.shape:
        raise ValueError(
            f"mel shapes differ: {tuple(mel_real.shape)} vs {tuple(mel_fake.shape)}"
        )
    return torch.mean(torch.abs(mel_real - mel_fake))


def adv_losses(real_out: DiscriminatorOutput | None,
               fake_out: DiscriminatorOutput) -> tuple[torch.Tensor, torch.Tensor]:
    """Least-squares GAN pair. Generator loss needs only fake scores; the
    discriminator loss needs both."""
    gen = sum(torch.mean((s - 1.0) ** 2) for s in fake_out.scores)
    gen = gen / len(fake_out.scores)
    if real_out is None:
        return gen, fake_out.scores[0].new_zeros(())
    if len(real_out.scores) != len(fake_out.scores):
        raise ValueError("real and fake outputs have different branch counts")
    disc = sum(
        torch.mean((sr - 1.0) ** 2) + torch.mean(sf ** 2)
        for sr, sf in zip(real_out.scores, fake_out.scores)
    ) / len(real_out.scores)
    return gen, disc


def feature_matching_loss(real_feats: list[list[torch.Tensor]],
                          fake_feats: list[list[torch.Tensor]]) -> torch.Tensor:
    if len(real_feats) != len(fake_feats):
        raise ValueError("feature lists have different branch counts")
    total = None
    for branch_r, branch_f in zip(real_feats, fake_feats):
        if len(branch_r) != len(branch_f):
            raise ValueError("feature lists have different layer counts")
        for fr, ff in zip(branch_r, branch_f):
            term = torch.mean(torch.abs(fr.detach() - ff))
            total = term if total is None else total + term
    return total


def total_generator_loss(parts: dict[str, torch.Tensor],
                         weights: dict[str, float]) -> torch.Tensor:
    """Weighted sum of the named generator loss terms."""
    total = None
    for name, value in parts.items():
        if not torch.isfinite(value).all():
            raise ValueError(f"loss term {name!r} is non-finite")
        term = weights.get(name, 1.0) * value
        total = term if total is None else total + term
    if total is None:
        raise ValueError("no loss terms given")
    return total
