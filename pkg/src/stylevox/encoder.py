"""Token encoder: embeddings + sinusoidal positions + feed-forward
transformer blocks whose feed-forward sublayer is a pair of 1-D convs.

The phoneme and prosody-style streams use two distinct embedding tables
and two separate block stacks.
"""

from __future__ import annotations

import math

import torch
from torch import nn


def positional_encoding(length: int, dim: int, *, dtype=torch.float32,
                        device=None) -> torch.Tensor:
    """Standard sine/cosine interleave, shape (length, dim). dim must be even."""
    if length < 1:
        raise ValueError("length must be >= 1")
    if dim % 2 != 0:
        raise ValueError("dim must be even")
    position = torch.arange(length, dtype=dtype, device=device).unsqueeze(1)
    div = torch.exp(
        torch.arange(0, dim, 2, dtype=dtype, device=device)
        * (-math.log(10000.0) / dim)
    )
    pe = torch.zeros(length, dim, dtype=dtype, device=device)
    pe[:, 0::2] = torch.sin(position * div)
    pe[:, 1::2] = torch.cos(position * div)
    return pe


def _check_finite(x: torch.Tensor, name: str) -> None:
    if not torch.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite values")


class ConvFeedForward(nn.Module):
    """Two same-padding 1-D convolutions with a ReLU in between."""

    def __init__(self, d_model: int, hidden: int, kernel_size: int, dropout: float):
        super().__init__()
        if kernel_size % 2 != 1:
            raise ValueError("kernel_size must be odd")
        pad = kernel_size // 2
        self.conv1 = nn.Conv1d(d_model, hidden, kernel_size, padding=pad)
        self.conv2 = nn.Conv1d(hidden, d_model, kernel_size, padding=pad)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (B, L, d)
        h = self.conv1(x.transpose(1, 2))
        h = torch.relu(h)
        h = self.dropout(h)
        h = self.conv2(h)
        return h.transpose(1, 2)


class FFTBlock(nn.Module):
    """Multi-head self-attention + conv feed-forward, each with a residual
    connection followed by layer normalization."""

    def __init__(self, d_model: int, n_heads: int, conv_hidden: int,
                 kernel_size: int, dropout: float):
        super().__init__()
        self.attention = nn.MultiheadAttention(
            d_model, n_heads, dropout=dropout, batch_first=True
        )
        self.norm1 = nn.LayerNorm(d_model)
        self.ffn = ConvFeedForward(d_model, conv_hidden, kernel_size, dropout)
        self.norm2 = nn.LayerNorm(d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, key_padding_mask: torch.Tensor | None = None,
                return_attention: bool = False):
        _check_finite(x, "fft_block input")
        attn_out, attn_weights = self.attention(
            x, x, x,
            key_padding_mask=key_padding_mask,
            need_weights=return_attention,
            average_attn_weights=False,
        )
        x = self.norm1(x + self.dropout(attn_out))
        x = self.norm2(x + self.dropout(self.ffn(x)))
        if return_attention:
            return x, attn_weights
        return x


class FFTStack(nn.Module):
    def __init__(self, n_layers: int, d_model: int, n_heads: int,
                 conv_hidden: int, kernel_size: int, dropout: float):
        super().__init__()
        self.blocks = nn.ModuleList(
            FFTBlock(d_model, n_heads, conv_hidden, kernel_size, dropout)
            for _ in range(n_layers)
        )

    def forward(self, x, key_padding_mask=None):
        for block in self.blocks:
            x = block(x, key_padding_mask=key_padding_mask)
        return x


class TextEncoder(nn.Module):
    """Contextualizes the parallel phoneme / prosody-style id streams.

    Returns (X, S_pho), both (B, L, d_model). The two streams have their
    own embedding tables and their own block stacks.
    """

    def __init__(self, phoneme_vocab_size: int, style_vocab_size: int,
                 d_model: int, n_layers: int, n_heads: int, conv_hidden: int,
                 kernel_size: int, dropout: float):
        super().__init__()
        if d_model % n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        self.d_model = d_model
        self.phoneme_embedding = nn.Embedding(phoneme_vocab_size, d_model)
        self.style_embedding = nn.Embedding(style_vocab_size, d_model)
        nn.init.normal_(self.phoneme_embedding.weight, 0.0, d_model ** -0.5)
        nn.init.normal_(self.style_embedding.weight, 0.0, d_model ** -0.5)
        self.phoneme_stack = FFTStack(
            n_layers, d_model, n_heads, conv_hidden, kernel_size, dropout
        )
        self.style_stack = FFTStack(
            n_layers, d_model, n_heads, conv_hidden, kernel_size, dropout
        )

    def forward(self, phoneme_ids: torch.Tensor, style_ids: torch.Tensor,
                lengths: torch.Tensor | None = None):
        if phoneme_ids.shape != style_ids.shape:
            raise ValueError("phoneme and style id arrays must have equal shape")
        if phoneme_ids.max() >= self.phoneme_embedding.num_embeddings or phoneme_ids.min() < 0:
            raise ValueError("phoneme id out of vocabulary range")
        if style_ids.max() >= self.style_embedding.num_embeddings or style_ids.min() < 0:
            raise ValueError("style id out of vocabulary range")
        B, L = phoneme_ids.shape
        dtype = self.phoneme_embedding.weight.dtype
        device = phoneme_ids.device
        pe = positional_encoding(L, self.d_model, dtype=dtype, device=device)
        key_padding_mask = None
        if lengths is not None:
            key_padding_mask = (
                torch.arange(L, device=device).unsqueeze(0) >= lengths.unsqueeze(1)
            )
        x = self.phoneme_embedding(phoneme_ids) * math.sqrt(self.d_model) + pe
        s = self.style_embedding(style_ids) * math.sqrt(self.d_model) + pe
        x = self.phoneme_stack(x, key_padding_mask=key_padding_mask)
        s = self.style_stack(s, key_padding_mask=key_padding_mask)
        return x, s

    @classmethod
    def from_config(cls, cfg, phoneme_vocab_size: int, style_vocab_size: int):
        return cls(
            phoneme_vocab_size=phoneme_vocab_size,
            style_vocab_size=style_vocab_size,
            d_model=cfg.d_model,
            n_layers=cfg.n_layers,
            n_heads=cfg.n_heads,
            conv_hidden=cfg.conv_hidden_dim,
            kernel_size=cfg.conv_kernel_size,
            dropout=cfg.dropout,
        )
