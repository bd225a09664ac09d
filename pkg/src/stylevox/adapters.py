"""Two-level style injection.

Phoneme level: a gated tanh unit fuses the prosody stream into the
phoneme stream, position by position with shared weights. Sentence
level: the prompt embedding is projected to a local and a global vector,
and the local vector drives a feature-wise affine modulation whose
(gamma, beta) pair is shared across all positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn


@dataclass
class StyleProjection:
    s_local: torch.Tensor   # (..., d_model)
    s_global: torch.Tensor  # (..., global_dim)


class GTUFusion(nn.Module):
    """tanh(W1 x + b1) * sigmoid(W2 s + b2); output entries lie in (-1, 1)."""

    def __init__(self, d_model: int):
        super().__init__()
        self.content = nn.Linear(d_model, d_model)
        self.gate = nn.Linear(d_model, d_model)

    def forward(self, x: torch.Tensor, s_pho: torch.Tensor) -> torch.Tensor:
        if x.shape != s_pho.shape:
            raise ValueError(
                f"phoneme and style streams differ in shape: {tuple(x.shape)} "
                f"vs {tuple(s_pho.shape)}"
            )
        return torch.tanh(self.content(x)) * torch.sigmoid(self.gate(s_pho))


class ParalinguisticProjector(nn.Module):
    """Two distinct linear maps from the prompt embedding to the local
    (phoneme-level) and global (sentence-level) style vectors."""

    def __init__(self, prompt_dim: int, d_model: int, global_dim: int):
        super().__init__()
        self.prompt_dim = prompt_dim
        self.local = nn.Linear(prompt_dim, d_model)
        self.global_ = nn.Linear(prompt_dim, global_dim)

    def forward(self, s_para: torch.Tensor) -> StyleProjection:
        if s_para.shape[-1] != self.prompt_dim:
            raise ValueError(
                f"prompt embedding has dim {s_para.shape[-1]}, expected "
                f"{self.prompt_dim}"
            )
        return StyleProjection(self.local(s_para), self.global_(s_para))


class FiLMModulator(nn.Module):
    """gamma * x + beta with (gamma, beta) generated from the local style
    vector and broadcast over the sequence dimension.

    Initialized to the identity: gamma starts at 1 and beta at 0.
    """

    def __init__(self, d_model: int):
        super().__init__()
        self.gamma = nn.Linear(d_model, d_model)
        self.beta = nn.Linear(d_model, d_model)
        nn.init.zeros_(self.gamma.weight)
        nn.init.ones_(self.gamma.bias)
        nn.init.zeros_(self.beta.weight)
        nn.init.zeros_(self.beta.bias)

    def film_params(self, s_local: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return self.gamma(s_local), self.beta(s_local)

    def forward(self, x_tilde: torch.Tensor, s_local: torch.Tensor) -> torch.Tensor:
        if x_tilde.shape[-1] != s_local.shape[-1]:
            raise ValueError(
                f"feature dim {x_tilde.shape[-1]} does not match style dim "
                f"{s_local.shape[-1]}"
            )
        gamma, beta = self.film_params(s_local)
        # one (gamma, beta) pair per sequence, shared across positions
        return gamma.unsqueeze(-2) * x_tilde + beta.unsqueeze(-2)
