"""Training loop: deterministic seeded steps, alternating discriminator /
generator updates, metrics CSV, and a versioned checksummed checkpoint
container.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import struct
import time
from pathlib import Path

import torch
from torch import nn

from . import config as config_mod
from . import frontend
from .dataset import Batch, collate, ingest_manifest
from .mel import mel_from_config
from .model import Synthesizer
from .prompts import HashEmbeddingBackend, PromptCache, encode_prompt
from .vocoder import (
    MultiPeriodDiscriminator,
    adv_losses,
    feature_matching_loss,
    recon_loss,
    total_generator_loss,
)

log = logging.getLogger(__name__)

_CKPT_MAGIC = b"SVOXCKPT"
_CKPT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, model: Synthesizer, discriminator: nn.Module,
                    opt_g, opt_d, step: int, cfg) -> None:
    payload = io.BytesIO()
    torch.save(
        {
            "model": model.state_dict(),
            "discriminator": discriminator.state_dict(),
            "opt_g": opt_g.state_dict() if opt_g is not None else None,
            "opt_d": opt_d.state_dict() if opt_d is not None else None,
            "step": step,
            "config": config_mod.to_text(cfg),
        },
        payload,
    )
    blob = payload.getvalue()
    header = (
        _CKPT_MAGIC
        + struct.pack("<I", _CKPT_VERSION)
        + cfg.schema_hash().encode("ascii")
        + struct.pack("<Q", len(blob))
        + hashlib.sha256(blob).digest()
    )
    Path(path).write_bytes(header + blob)


def load_checkpoint(path):
    """Returns (state dict payload, Config). Verifies magic, version,
    schema hash format, and the payload checksum."""
    data = Path(path).read_bytes()
    if data[:8] != _CKPT_MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", data, 8)
    if version != _CKPT_VERSION:
        raise CheckpointError(
            f"checkpoint version {version} unsupported (expected {_CKPT_VERSION})"
        )
    offset = 12 + 16
    (length,) = struct.unpack_from("<Q", data, offset)
    offset += 8
    digest = data[offset:offset + 32]
    offset += 32
    blob = data[offset:offset + length]
    if len(blob) != length or hashlib.sha256(blob).digest() != digest:
        raise CheckpointError(f"checkpoint {path} failed its checksum (truncated?)")
    state = torch.load(io.BytesIO(blob), map_location="cpu", weights_only=False)
    cfg = config_mod.from_text(state["config"])
    return state, cfg


def load_model_state(model: nn.Module, state_dict: dict) -> None:
    """strict load with a shape pre-check that names the parameter."""
    own = model.state_dict()
    for name, tensor in state_dict.items():
        if name in own and own[name].shape != tensor.shape:
            raise CheckpointError(
                f"parameter {name!r} has shape {tuple(tensor.shape)} in the "
                f"checkpoint but {tuple(own[name].shape)} in the model "
                "(config mismatch)"
            )
    model.load_state_dict(state_dict)


def build_models(cfg, vocab=None):
    vocab = vocab or frontend.default_vocabulary()
    model = Synthesizer(cfg, vocab.phoneme_size, vocab.style_size)
    discriminator = MultiPeriodDiscriminator.from_config(cfg)
    return model, discriminator, vocab


def build_optimizers(cfg, model, discriminator):
    opt_g = torch.optim.AdamW(
        model.parameters(), lr=cfg.learning_rate,
        betas=(cfg.adam_beta1, cfg.adam_beta2), weight_decay=cfg.weight_decay,
    )
    opt_d = torch.optim.AdamW(
        discriminator.parameters(), lr=cfg.learning_rate,
        betas=(cfg.adam_beta1, cfg.adam_beta2), weight_decay=cfg.weight_decay,
    )
    return opt_g, opt_d


def _grad_norm(module: nn.Module) -> float:
    total = 0.0
    for p in module.parameters():
        if p.grad is not None:
            total += float(p.grad.detach().pow(2).sum())
    return total ** 0.5


def train_step(batch: Batch, model: Synthesizer,
               discriminator: MultiPeriodDiscriminator,
               opt_g, opt_d, cfg, step_seed: int, step: int) -> dict:
    """One alternating GAN step; returns every loss component as a float.

    Deterministic for a fixed (parameters, batch, step_seed).
    """
    torch.manual_seed(step_seed)
    generator = torch.Generator().manual_seed(step_seed)

    out = model.forward_train(
        batch.phoneme_ids, batch.style_ids, batch.token_lengths,
        batch.mel, batch.frame_lengths, batch.waveform, batch.prompt_emb,
        generator=generator,
    )

    # discriminator update on the detached fake segment
    real_out = discriminator(out.real_segment)
    fake_out_d = discriminator(out.fake_segment.detach())
    _, loss_disc = adv_losses(real_out, fake_out_d)
    opt_d.zero_grad(set_to_none=True)
    loss_disc.backward()
    grad_d = _grad_norm(discriminator)
    opt_d.step()

    # generator update
    mel_real = mel_from_config(out.real_segment, cfg)
    mel_fake = mel_from_config(out.fake_segment, cfg)
    loss_recon = recon_loss(mel_real, mel_fake)
    real_out = discriminator(out.real_segment)
    fake_out_g = discriminator(out.fake_segment)
    loss_adv, _ = adv_losses(None, fake_out_g)
    loss_fm = feature_matching_loss(real_out.features, fake_out_g.features)
    parts = {
        "recon": loss_recon,
        "kl": out.loss_kl,
        "dur": out.loss_dur,
        "adv": loss_adv,
        "fm": loss_fm,
    }
    weights = {
        "recon": cfg.w_recon, "kl": cfg.w_kl, "dur": cfg.w_dur,
        "adv": cfg.w_adv, "fm": cfg.w_fm,
    }
    for name, value in parts.items():
        if not torch.isfinite(value).all():
            raise RuntimeError(
                f"loss term {name!r} became non-finite at step {step}"
            )
    loss_total = total_generator_loss(parts, weights)
    opt_g.zero_grad(set_to_none=True)
    loss_total.backward()
    grad_g = _grad_norm(model)
    opt_g.step()

    dur_sums = out.durations.sum(dim=1)
    dur_ok = bool(torch.all(dur_sums == batch.frame_lengths.to(dur_sums.dtype)))
    return {
        "loss_recon": float(loss_recon.detach()),
        "loss_kl": float(out.loss_kl.detach()),
        "loss_dur": float(out.loss_dur.detach()),
        "loss_adv": float(loss_adv.detach()),
        "loss_fm": float(loss_fm.detach()),
        "loss_disc": float(loss_disc.detach()),
        "loss_total": float(loss_total.detach()),
        "grad_norm_g": grad_g,
        "grad_norm_d": grad_d,
        "duration_sum_ok": float(dur_ok),
    }


_METRIC_COLUMNS = [
    "step", "loss_recon", "loss_kl", "loss_dur", "loss_adv", "loss_fm",
    "loss_disc", "loss_total", "grad_norm_g", "grad_norm_d",
    "duration_sum_ok", "wall_clock_s",
]


class MetricsWriter:
    """Append-only CSV, one row per logged step."""

    def __init__(self, path):
        self.path = Path(path)
        new = not self.path.exists()
        self._fh = open(self.path, "a", newline="")
        self._writer = csv.DictWriter(self._fh, fieldnames=_METRIC_COLUMNS)
        if new:
            self._writer.writeheader()

    def write(self, row: dict) -> None:
        self._writer.writerow({k: row.get(k, "") for k in _METRIC_COLUMNS})
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def prepare_prompt_vectors(examples, backend, cache: PromptCache | None):
    vectors = {}
    for ex in examples:
        if ex.prompt_key in vectors:
            continue
        if cache is not None:
            emb = cache.get_or_encode(ex.prompt_text, backend)
        else:
            emb = encode_prompt(ex.prompt_text, backend)
        vectors[ex.prompt_key] = emb.vector
    return vectors


def train(manifest_path, cfg, out_dir, backend=None,
          total_steps: int | None = None,
          step_callback=None) -> dict:
    """Full training run. Returns summary with final metrics and paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    backend = backend or HashEmbeddingBackend(cfg.prompt_dim)
    if backend.dim != cfg.prompt_dim:
        raise ValueError(
            f"backend dim {backend.dim} != configured prompt_dim {cfg.prompt_dim}"
        )
    total_steps = total_steps or cfg.total_steps

    torch.manual_seed(cfg.seed)
    model, discriminator, vocab = build_models(cfg)
    opt_g, opt_d = build_optimizers(cfg, model, discriminator)
    sched_g = torch.optim.lr_scheduler.ExponentialLR(opt_g, gamma=cfg.lr_decay)
    sched_d = torch.optim.lr_scheduler.ExponentialLR(opt_d, gamma=cfg.lr_decay)

    examples = ingest_manifest(
        manifest_path, cfg, vocab=vocab, backend_id=backend.backend_id
    )
    for ex in examples:
        if ex.mel.shape[-1] < len(ex.sequence):
            raise ValueError(
                f"{ex.utterance_id}: fewer frames ({ex.mel.shape[-1]}) than "
                f"tokens ({len(ex.sequence)}); utterance too short"
            )
    cache = PromptCache(out_dir / "prompt_cache.bin")
    vectors = prepare_prompt_vectors(examples, backend, cache)

    metrics = MetricsWriter(out_dir / "metrics.csv")
    steps_per_epoch = max(1, (len(examples) + cfg.batch_size - 1) // cfg.batch_size)
    sampler = torch.Generator().manual_seed(cfg.seed)
    start = time.perf_counter()
    last_row: dict = {}
    for step in range(1, total_steps + 1):
        if cfg.warmup_steps and step <= cfg.warmup_steps:
            scale = step / cfg.warmup_steps
            for opt in (opt_g, opt_d):
                for group in opt.param_groups:
                    group["lr"] = cfg.learning_rate * scale
        idx = torch.randint(0, len(examples), (cfg.batch_size,), generator=sampler)
        batch = collate([examples[i] for i in idx.tolist()], vectors)
        step_seed = cfg.seed * 1_000_003 + step
        row = train_step(
            batch, model, discriminator, opt_g, opt_d, cfg, step_seed, step
        )
        row["step"] = step
        row["wall_clock_s"] = round(time.perf_counter() - start, 3)
        if step % cfg.log_interval == 0 or step == 1 or step == total_steps:
            metrics.write(row)
        if step % steps_per_epoch == 0:
            sched_g.step()
            sched_d.step()
        if step % cfg.checkpoint_interval == 0 or step == total_steps:
            save_checkpoint(
                out_dir / "checkpoint.pt", model, discriminator,
                opt_g, opt_d, step, cfg,
            )
        if step_callback is not None:
            step_callback(step, row)
        last_row = row
    metrics.close()
    return {
        "steps": total_steps,
        "checkpoint": str(out_dir / "checkpoint.pt"),
        "metrics": str(out_dir / "metrics.csv"),
        "final": last_row,
    }
