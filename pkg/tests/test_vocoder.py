"""Waveform decoder, multi-period discriminator, and GAN-side losses."""

import pytest
import torch

from stylevox.vocoder import (
    DiscriminatorOutput,
    MultiPeriodDiscriminator,
    WaveformDecoder,
    adv_losses,
    feature_matching_loss,
    recon_loss,
    total_generator_loss,
)


def _decoder():
    return WaveformDecoder(
        latent_channels=8, global_dim=4, upsample_rates=(8, 8, 4),
        upsample_kernel_sizes=(16, 16, 8), initial_channels=32,
        resblock_kernel_sizes=(3, 7),
    )


def test_decoder_output_length():
    dec = _decoder()
    wav = dec(torch.randn(2, 8, 32), torch.randn(2, 4))
    assert wav.shape == (2, 32 * 256)  # frames * hop


def test_decoder_output_bounded():
    dec = _decoder()
    wav = dec(torch.randn(1, 8, 8) * 10, torch.randn(1, 4) * 10)
    assert wav.abs().max() < 1.0


def test_decoder_global_conditioning_matters():
    dec = _decoder()
    z = torch.randn(1, 8, 8)
    a = dec(z, torch.randn(1, 4))
    b = dec(z, torch.randn(1, 4))
    assert not torch.allclose(a, b)


def test_decoder_length_linear_in_frames():
    dec = _decoder()
    g = torch.randn(1, 4)
    for frames in (4, 9, 16):
        assert dec(torch.randn(1, 8, frames), g).shape == (1, frames * 256)


def test_decoder_rejects_non_finite():
    dec = _decoder()
    z = torch.randn(1, 8, 8)
    z[0, 0, 0] = float("inf")
    with pytest.raises(ValueError, match="non-finite"):
        dec(z, torch.randn(1, 4))


# ---- discriminator ---------------------------------------------------------

def test_mpd_branch_count_and_determinism():
    mpd = MultiPeriodDiscriminator((2, 3, 5), base_channels=2)
    w = torch.randn(2, 2048)
    out1 = mpd(w)
    out2 = mpd(w)
    assert len(out1.scores) == 3
    assert len(out1.features) == 3
    for s1, s2 in zip(out1.scores, out2.scores):
        assert torch.equal(s1, s2)


def test_mpd_feature_shapes_stable():
    mpd = MultiPeriodDiscriminator((2, 3), base_channels=2)
    shapes1 = [[f.shape for f in br] for br in mpd(torch.randn(1, 2048)).features]
    shapes2 = [[f.shape for f in br] for br in mpd(torch.randn(1, 2048)).features]
    assert shapes1 == shapes2


# ---- losses -----------------------------------------------------------------

def test_recon_loss_cases():
    y = torch.randn(2, 80, 10)
    assert recon_loss(y, y.clone()).item() == 0.0
    assert recon_loss(y, y + 0.7).item() == pytest.approx(0.7, rel=1e-5)
    assert recon_loss(y, torch.randn(2, 80, 10)).item() >= 0.0
    with pytest.raises(ValueError, match="shapes"):
        recon_loss(y, torch.randn(2, 80, 9))


def test_adv_losses_arithmetic():
    ones = DiscriminatorOutput([torch.ones(1, 4)], [[]])
    zeros = DiscriminatorOutput([torch.zeros(1, 4)], [[]])
    half = DiscriminatorOutput([torch.full((1, 4), 0.5)], [[]])

    gen, _ = adv_losses(None, ones)        # fake scored 1 -> generator happy
    assert gen.item() == pytest.approx(0.0)
    _, disc = adv_losses(ones, zeros)      # real 1, fake 0 -> disc happy
    assert disc.item() == pytest.approx(0.0)
    gen, _ = adv_losses(None, half)        # (0.5 - 1)^2 = 0.25
    assert gen.item() == pytest.approx(0.25)


def test_adv_losses_branch_mismatch():
    a = DiscriminatorOutput([torch.ones(1, 4)], [[]])
    b = DiscriminatorOutput([torch.ones(1, 4), torch.ones(1, 4)], [[], []])
    with pytest.raises(ValueError, match="branch"):
        adv_losses(a, b)


def test_feature_matching_cases():
    feats = [[torch.randn(1, 3, 4)], [torch.randn(1, 5)]]
    zero = feature_matching_loss(feats, [[f.clone() for f in br] for br in feats])
    assert zero.item() == pytest.approx(0.0)
    shifted = [[f + 0.3 for f in br] for br in feats]
    assert feature_matching_loss(feats, shifted).item() == \
        pytest.approx(0.6, rel=1e-5)  # |c| per layer, two layers
    with pytest.raises(ValueError, match="branch"):
        feature_matching_loss(feats, feats[:1])
    with pytest.raises(ValueError, match="layer"):
        feature_matching_loss(feats, [[], feats[1]])


def test_feature_matching_detaches_real():
    real = [[torch.randn(1, 3, requires_grad=True)]]
    fake = [[torch.randn(1, 3, requires_grad=True)]]
    feature_matching_loss(real, fake).backward()
    assert real[0][0].grad is None
    assert fake[0][0].grad is not None


def test_total_generator_loss():
    unit = {k: torch.tensor(1.0) for k in ("recon", "kl", "dur", "adv", "fm")}
    ones = {k: 1.0 for k in unit}
    assert total_generator_loss(unit, ones).item() == pytest.approx(5.0)
    weighted = dict(ones, recon=45.0)
    assert total_generator_loss(unit, weighted).item() == pytest.approx(49.0)
    zero = {k: torch.tensor(0.0) for k in unit}
    assert total_generator_loss(zero, ones).item() == 0.0


def test_total_generator_loss_names_bad_term():
    parts = {"recon": torch.tensor(1.0), "kl": torch.tensor(float("nan"))}
    with pytest.raises(ValueError, match="'kl'"):
        total_generator_loss(parts, {})


def test_recon_gradient_matches_finite_differences():
    # off ties so the L1 kink is never touched
    torch.manual_seed(0)
    y = torch.randn(4, 5, dtype=torch.double)
    y_hat = (y + torch.rand(4, 5, dtype=torch.double) + 0.1).requires_grad_()
    recon_loss(y, y_hat).backward()
    eps = 1e-6
    for idx in [(0, 0), (1, 3), (3, 4)]:
        up = y_hat.detach().clone()
        up[idx] += eps
        down = y_hat.detach().clone()
        down[idx] -= eps
        numeric = (recon_loss(y, up) - recon_loss(y, down)).item() / (2 * eps)
        analytic = y_hat.grad[idx].item()
        assert abs(numeric - analytic) / max(abs(numeric), 1e-8) < 1e-3
