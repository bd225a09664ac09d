"""End-to-end synthesis from text plus one style source (caption fields,
raw prompt text, or a prompt-cache key)."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from . import frontend
from .frontend import Language, Vocabulary
from .model import Synthesizer
from .prompts import (
    EncoderBackend,
    HashEmbeddingBackend,
    PromptCache,
    StyleCaptionFields,
    build_prompt,
    encode_prompt,
)
from .training import load_checkpoint, load_model_state


class CacheMissError(KeyError):
    """A prompt-cache key was given but the cache has no such entry."""


@dataclass
class SynthesisRequest:
    text: str
    language: Language
    caption: StyleCaptionFields | None = None
    prompt_text: str | None = None
    prompt_key: str | None = None
    duration_scale: float = 1.0
    noise_scale: float | None = None
    seed: int = 0

    def __post_init__(self):
        sources = sum(
            x is not None for x in (self.caption, self.prompt_text, self.prompt_key)
        )
        if sources != 1:
            raise ValueError(
                "exactly one style source required (caption fields, prompt "
                f"text, or cache key); got {sources}"
            )
        if self.duration_scale <= 0:
            raise ValueError("duration_scale must be positive")


def load_synthesizer(checkpoint_path):
    """Rebuild the model from a checkpoint; returns (model, cfg, vocab)."""
    state, cfg = load_checkpoint(checkpoint_path)
    vocab = frontend.default_vocabulary()
    model = Synthesizer(cfg, vocab.phoneme_size, vocab.style_size)
    load_model_state(model, state["model"])
    model.eval()
    return model, cfg, vocab


def resolve_prompt_embedding(req: SynthesisRequest, cfg,
                             backend: EncoderBackend | None = None,
                             cache: PromptCache | None = None) -> torch.Tensor:
    if req.prompt_key is not None:
        if cache is None:
            raise CacheMissError("a cache key was given but no cache is open")
        hit = cache.get(req.prompt_key)
        if hit is None:
            raise CacheMissError(f"prompt cache has no entry {req.prompt_key!r}")
        return torch.from_numpy(hit.vector.copy())
    text = req.prompt_text if req.prompt_text is not None else build_prompt(req.caption)
    backend = backend or HashEmbeddingBackend(cfg.prompt_dim)
    if cache is not None:
        emb = cache.get_or_encode(text, backend)
    else:
        emb = encode_prompt(text, backend)
    return torch.from_numpy(emb.vector.copy())


def synthesize_with_model(model: Synthesizer, cfg, vocab: Vocabulary,
                          req: SynthesisRequest,
                          prompt_emb: torch.Tensor) -> torch.Tensor:
    seq = frontend.tokenize(req.text, req.language, vocab)
    generator = torch.Generator().manual_seed(req.seed)
    wav = model.infer(
        torch.tensor(seq.phoneme_ids, dtype=torch.long),
        torch.tensor(seq.style_ids, dtype=torch.long),
        prompt_emb.to(next(model.parameters()).dtype),
        noise_scale=req.noise_scale,
        duration_scale=req.duration_scale,
        generator=generator,
    )
    if not torch.isfinite(wav).all():
        raise RuntimeError("synthesized waveform contains non-finite samples")
    return wav


def synthesize(req: SynthesisRequest, checkpoint_path,
               backend: EncoderBackend | None = None,
               cache: PromptCache | None = None) -> torch.Tensor:
    model, cfg, vocab = load_synthesizer(checkpoint_path)
    prompt_emb = resolve_prompt_embedding(req, cfg, backend, cache)
    return synthesize_with_model(model, cfg, vocab, req, prompt_emb)
