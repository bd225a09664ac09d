"""The full synthesizer: token encoder, two-level style adapters,
variational latent model with normalizing flow, monotonic alignment,
duration predictor, and waveform decoder.

`forward_train` runs the training-time pipeline up to (but excluding) the
discriminator; `infer` runs the inference pipeline from token ids to a
waveform.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .adapters import FiLMModulator, GTUFusion, ParalinguisticProjector
from .alignment import (
    DurationPredictor,
    duration_loss,
    frame_log_likelihood,
    mas_align_batch,
    round_durations,
)
from .encoder import TextEncoder
from .latent import (
    GaussianParams,
    NormalizingFlow,
    PosteriorEncoder,
    PriorProjection,
    kl_loss,
    sample_posterior,
)
from .vocoder import WaveformDecoder


@dataclass
class TrainForwardOutput:
    fake_segment: torch.Tensor      # (B, segment_frames * hop)
    real_segment: torch.Tensor
    loss_kl: torch.Tensor
    loss_dur: torch.Tensor
    durations: torch.Tensor         # (B, L) MAS durations
    alignment: torch.Tensor         # (B, L, T) hard alignment
    frame_lengths: torch.Tensor


class Synthesizer(nn.Module):
    def __init__(self, cfg, phoneme_vocab_size: int, style_vocab_size: int):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.text_encoder = TextEncoder.from_config(
            cfg, phoneme_vocab_size, style_vocab_size
        )
        self.gtu = GTUFusion(cfg.d_model)
        self.projector = ParalinguisticProjector(
            cfg.prompt_dim, cfg.d_model, cfg.global_dim
        )
        self.film = FiLMModulator(cfg.d_model)
        self.posterior = PosteriorEncoder(
            spec_channels=cfg.n_mels,
            latent_channels=cfg.latent_channels,
            hidden=cfg.posterior_hidden,
            n_layers=cfg.posterior_layers,
            global_dim=cfg.global_dim,
            sigma_floor=cfg.sigma_floor,
        )
        self.flow = NormalizingFlow(
            cfg.latent_channels, cfg.flow_hidden, cfg.flow_layers,
            cfg.flow_wn_layers,
        )
        self.prior = PriorProjection(
            cfg.d_model, cfg.latent_channels, cfg.sigma_floor
        )
        self.duration_predictor = DurationPredictor(
            cfg.d_model, cfg.duration_hidden, cfg.duration_kernel,
            stochastic=cfg.stochastic_duration,
        )
        self.decoder = WaveformDecoder.from_config(cfg)

    # ---- shared text/style path -------------------------------------

    def encode_styled_text(self, phoneme_ids, style_ids, prompt_emb,
                           token_lengths=None):
        x, s_pho = self.text_encoder(phoneme_ids, style_ids, token_lengths)
        x_tilde = self.gtu(x, s_pho)
        projection = self.projector(prompt_emb)
        x_hat = self.film(x_tilde, projection.s_local)
        return x_hat, projection

    # ---- training ----------------------------------------------------

    def forward_train(self, phoneme_ids, style_ids, token_lengths,
                      mel, frame_lengths, waveform, prompt_emb,
                      generator: torch.Generator | None = None,
                      noise: torch.Tensor | None = None):
        cfg = self.cfg
        B, L = phoneme_ids.shape
        T = mel.shape[-1]
        device = mel.device
        dtype = mel.dtype

        token_mask = (
            torch.arange(L, device=device).unsqueeze(0) < token_lengths.unsqueeze(1)
        ).to(dtype)
        frame_mask = (
            torch.arange(T, device=device).unsqueeze(0) < frame_lengths.unsqueeze(1)
        ).to(dtype).unsqueeze(1)

        x_hat, projection = self.encode_styled_text(
            phoneme_ids, style_ids, prompt_emb, token_lengths
        )

        post = self.posterior(mel, projection.s_global, frame_mask)
        if noise is None:
            noise = torch.randn(post.mu.shape, generator=generator,
                                dtype=dtype, device=device)
        z = sample_posterior(post, noise) * frame_mask
        z_flow, logdet = self.flow(z, frame_mask)

        phon = self.prior.phoneme_params(x_hat)
        log_lik = frame_log_likelihood(z_flow, phon.mu, phon.sigma)
        alignment = mas_align_batch(log_lik, token_lengths, frame_lengths)

        prior_frames = self.prior(x_hat, alignment)
        loss_kl = kl_loss(z, z_flow, logdet, post, prior_frames, frame_mask)

        durations = alignment.sum(dim=-1)  # (B, L)
        d_hat = self.duration_predictor(x_hat.detach(), generator=generator)
        loss_dur = duration_loss(
            durations.clamp(min=1), d_hat, cfg.duration_epsilon, token_mask
        )

        seg = cfg.segment_frames
        starts = []
        for b in range(B):
            max_start = int(frame_lengths[b]) - seg
            if max_start <= 0:
                starts.append(0)
            else:
                starts.append(int(torch.randint(
                    0, max_start + 1, (1,), generator=generator, device=device
                )))
        z_slices = torch.stack(
            [z[b, :, s:s + seg] for b, s in enumerate(starts)]
        )
        fake_segment = self.decoder(z_slices, projection.s_global)
        hop = cfg.hop_length
        real_segment = torch.stack(
            [waveform[b, s * hop:(s + seg) * hop] for b, s in enumerate(starts)]
        )

        return TrainForwardOutput(
            fake_segment=fake_segment,
            real_segment=real_segment,
            loss_kl=loss_kl,
            loss_dur=loss_dur,
            durations=durations,
            alignment=alignment,
            frame_lengths=frame_lengths,
        )

    # ---- inference ----------------------------------------------------

    @torch.no_grad()
    def infer(self, phoneme_ids: torch.Tensor, style_ids: torch.Tensor,
              prompt_emb: torch.Tensor, *, noise_scale: float | None = None,
              duration_scale: float | None = None,
              generator: torch.Generator | None = None) -> torch.Tensor:
        """Single-utterance synthesis: (L,) id tensors -> (samples,) waveform.

        Deterministic given (parameters, inputs, generator state).
        """
        cfg = self.cfg
        noise_scale = cfg.noise_scale if noise_scale is None else noise_scale
        duration_scale = (
            cfg.duration_scale if duration_scale is None else duration_scale
        )
        x_hat, projection = self.encode_styled_text(
            phoneme_ids.unsqueeze(0), style_ids.unsqueeze(0),
            prompt_emb.unsqueeze(0),
        )
        d_hat = self.duration_predictor(x_hat, generator=generator)[0]
        reps = round_durations(d_hat, duration_scale)

        phon = self.prior.phoneme_params(x_hat)  # (1, N, L)
        mu = torch.repeat_interleave(phon.mu, reps, dim=2)
        sigma = torch.repeat_interleave(phon.sigma, reps, dim=2)
        noise = torch.randn(mu.shape, generator=generator,
                            dtype=mu.dtype, device=mu.device)
        z_flow = mu + sigma * noise * noise_scale
        z = self.flow.inverse(z_flow)
        wav = self.decoder(z, projection.s_global)
        return wav[0]
