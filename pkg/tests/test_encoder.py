"""Positional encodings, feed-forward transformer blocks, and the dual
text/prosody encoder, with finite-difference gradient oracles."""

import math

import pytest
import torch

from stylevox.encoder import FFTBlock, TextEncoder, positional_encoding


def test_pe_row_zero():
    pe = positional_encoding(4, 8)
    assert torch.allclose(pe[0, 0::2], torch.zeros(4))   # sin(0)
    assert torch.allclose(pe[0, 1::2], torch.ones(4))    # cos(0)


def test_pe_closed_form():
    pe = positional_encoding(3, 4, dtype=torch.float64)
    assert pe[1, 0].item() == pytest.approx(math.sin(1.0), abs=1e-12)
    assert pe[1, 1].item() == pytest.approx(math.cos(1.0), abs=1e-12)
    # second frequency pair: 10000^(-2/4)
    w = 10000.0 ** (-2.0 / 4.0)
    assert pe[2, 2].item() == pytest.approx(math.sin(2.0 * w), abs=1e-12)
    assert pe[2, 3].item() == pytest.approx(math.cos(2.0 * w), abs=1e-12)


def test_pe_bounded():
    pe = positional_encoding(100, 64)
    assert pe.abs().max() <= 1.0


def test_pe_odd_dim_rejected():
    with pytest.raises(ValueError, match="even"):
        positional_encoding(4, 7)


def test_fft_block_shape_preserved():
    block = FFTBlock(16, 2, 32, 3, dropout=0.0).eval()
    for L in (1, 5, 17):
        x = torch.randn(2, L, 16)
        assert block(x).shape == (2, L, 16)


def test_fft_block_attention_rows_sum_to_one():
    block = FFTBlock(16, 2, 32, 3, dropout=0.0).eval()
    x = torch.randn(2, 7, 16)
    _, weights = block(x, return_attention=True)
    # (B, heads, L, L): each query row is a distribution
    sums = weights.sum(dim=-1)
    assert torch.allclose(sums, torch.ones_like(sums), atol=1e-6)


def test_fft_block_rejects_non_finite():
    block = FFTBlock(16, 2, 32, 3, dropout=0.0).eval()
    x = torch.randn(1, 3, 16)
    x[0, 1, 2] = float("inf")
    with pytest.raises(ValueError, match="non-finite"):
        block(x)


def _tiny_encoder(dropout=0.0, dtype=torch.float32):
    enc = TextEncoder(
        phoneme_vocab_size=11, style_vocab_size=7, d_model=8, n_layers=1,
        n_heads=2, conv_hidden=16, kernel_size=3, dropout=dropout,
    )
    return enc.to(dtype).eval()


def test_encoder_shapes_and_determinism():
    enc = _tiny_encoder()
    phon = torch.tensor([[1, 2, 3, 4]])
    styl = torch.tensor([[0, 1, 2, 0]])
    x1, s1 = enc(phon, styl)
    x2, s2 = enc(phon, styl)
    assert x1.shape == (1, 4, 8) and s1.shape == (1, 4, 8)
    assert torch.equal(x1, x2) and torch.equal(s1, s2)


def test_encoder_position_sensitivity():
    enc = _tiny_encoder()
    a, _ = enc(torch.tensor([[1, 2, 3]]), torch.tensor([[0, 0, 0]]))
    b, _ = enc(torch.tensor([[2, 1, 3]]), torch.tensor([[0, 0, 0]]))
    assert not torch.allclose(a, b)


def test_encoder_id_range_errors():
    enc = _tiny_encoder()
    with pytest.raises(ValueError, match="phoneme id"):
        enc(torch.tensor([[99]]), torch.tensor([[0]]))
    with pytest.raises(ValueError, match="style id"):
        enc(torch.tensor([[1]]), torch.tensor([[99]]))


def test_embedding_gradients_match_finite_differences():
    torch.manual_seed(7)
    enc = _tiny_encoder(dtype=torch.float64)
    phon = torch.tensor([[1, 2, 3]])
    styl = torch.tensor([[0, 1, 2]])
    target = torch.randn(1, 3, 8, dtype=torch.float64)

    def loss():
        x, s = enc(phon, styl)
        return ((x - target) ** 2).sum() + (s ** 2).sum()

    value = loss()
    enc.zero_grad()
    value.backward()

    rng = torch.Generator().manual_seed(3)
    eps = 1e-6
    checked = 0
    for table in (enc.phoneme_embedding.weight, enc.style_embedding.weight):
        for _ in range(6):
            i = int(torch.randint(0, table.shape[0], (1,), generator=rng))
            j = int(torch.randint(0, table.shape[1], (1,), generator=rng))
            with torch.no_grad():
                orig = table[i, j].item()
                table[i, j] = orig + eps
                up = loss().item()
                table[i, j] = orig - eps
                down = loss().item()
                table[i, j] = orig
            numeric = (up - down) / (2 * eps)
            analytic = table.grad[i, j].item()
            scale = max(abs(numeric), abs(analytic), 1e-8)
            # absolute floor covers near-zero gradients where the central
            # difference is dominated by cancellation noise
            assert abs(numeric - analytic) < 1e-4 * scale + 1e-8
            checked += 1
    assert checked >= 10
