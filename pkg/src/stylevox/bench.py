"""Complexity and resource benchmarks.

The architecture encodes the text (length N) and the style prompt
(length M) with separate self-attention stacks, so the attention-score
cost grows as N^2 + M^2; joint encoders pay (N + M)^2. The analytic FLOP
counts below make that gap exact: per layer the difference is
2 * N * M * constant, with constant = 4 * head_dim_total (score matmul
plus weighted value sum, one multiply + one add each).

Wall-clock numbers are reported for context but only the analytic counts
are asserted; timing is hardware-dependent.
"""

from __future__ import annotations

import resource
import statistics
import time

import torch
from torch import nn

from . import frontend
from .config import full_scale_config as _full_scale_config
from .inference import SynthesisRequest, load_synthesizer, resolve_prompt_embedding, synthesize_with_model
from .model import Synthesizer

PER_LAYER_FLOP_FACTOR = 4  # score matmul + value sum, multiply-add each


def attention_score_flops(length: int, d_model: int, n_layers: int) -> int:
    """Exact multiply-add count of the attention score and value matmuls
    for one self-attention stack over a length-`length` sequence."""
    return n_layers * PER_LAYER_FLOP_FACTOR * d_model * length * length


class _ToyAttentionStack(nn.Module):
    def __init__(self, d_model: int, n_layers: int):
        super().__init__()
        self.layers = nn.ModuleList(
            nn.MultiheadAttention(d_model, 1, batch_first=True)
            for _ in range(n_layers)
        )

    def forward(self, x):
        for layer in self.layers:
            x, _ = layer(x, x, x, need_weights=False)
        return x


def bench_complexity(n_list, m_list, d_model: int = 64, n_layers: int = 2,
                     repeats: int = 3) -> dict:
    """Grid of (N, M): separate encoding of N and M vs joint encoding of
    N + M, with exact analytic FLOP counts and wall-clock timings."""
    if not n_list or not m_list:
        raise ValueError("n_list and m_list must be non-empty")
    torch.manual_seed(0)
    stack = _ToyAttentionStack(d_model, n_layers).eval()

    def timed(length: int) -> float:
        x = torch.randn(1, max(length, 1), d_model)
        with torch.no_grad():
            stack(x)  # warmup
            t0 = time.perf_counter()
            for _ in range(repeats):
                stack(x)
        return (time.perf_counter() - t0) / repeats

    grid = []
    constant = PER_LAYER_FLOP_FACTOR * d_model
    for n in n_list:
        for m in m_list:
            f_sep = attention_score_flops(n, d_model, n_layers) + \
                attention_score_flops(m, d_model, n_layers)
            f_joint = attention_score_flops(n + m, d_model, n_layers)
            identity = f_joint - f_sep == 2 * n * m * constant * n_layers
            grid.append({
                "n": n,
                "m": m,
                "flops_separate": f_sep,
                "flops_joint": f_joint,
                "flops_ratio": f_joint / f_sep if f_sep else 1.0,
                "cross_term_identity": identity,
                "seconds_separate": timed(n) + timed(m),
                "seconds_joint": timed(n + m),
            })
    return {
        "d_model": d_model,
        "n_layers": n_layers,
        "per_layer_constant": constant,
        "repeats": repeats,
        "grid": grid,
    }


def count_parameters(model: nn.Module) -> dict:
    """Trainable scalar counts per top-level submodule plus the total."""
    per_module: dict[str, int] = {}
    for name, child in model.named_children():
        per_module[name] = sum(
            p.numel() for p in child.parameters() if p.requires_grad
        )
    direct = sum(
        p.numel() for p in model.parameters(recurse=False) if p.requires_grad
    )
    if direct:
        per_module["(direct)"] = direct
    total = sum(p.numel() for p in model.parameters() if p.requires_grad)
    return {"total": total, "per_module": per_module}


def full_scale_parameter_report() -> dict:
    """Parameter counts of the full-size configuration, for side-by-side
    comparison with published full-scale figures."""
    cfg = _full_scale_config()
    vocab = frontend.default_vocabulary()
    model = Synthesizer(cfg, vocab.phoneme_size, vocab.style_size)
    report = count_parameters(model)
    report["config"] = "full-scale"
    report["total_millions"] = round(report["total"] / 1e6, 2)
    return report


def measure_inference(checkpoint_path, sentences: list[tuple[str, str]],
                      warmup: int = 1, seed: int = 0) -> dict:
    """Per-sentence latency (mean/p50/p95) and peak memory, batch size one.

    `sentences` is a list of (language, text) pairs. Warmup iterations are
    excluded from the statistics.
    """
    model, cfg, vocab = load_synthesizer(checkpoint_path)
    durations = []
    use_cuda = torch.cuda.is_available()
    if use_cuda:
        torch.cuda.reset_peak_memory_stats()
    for i, (language, text) in enumerate(sentences):
        req = SynthesisRequest(
            text=text, language=frontend.Language(language),
            caption=None, prompt_text="A adult female is speaking English "
            "with neutral emotion.", seed=seed,
        )
        emb = resolve_prompt_embedding(req, cfg)
        t0 = time.perf_counter()
        synthesize_with_model(model, cfg, vocab, req, emb)
        elapsed = time.perf_counter() - t0
        if i >= warmup:
            durations.append(elapsed)
    if use_cuda:
        peak_mem_mb = torch.cuda.max_memory_allocated() / 2**20
        mem_kind = "peak CUDA memory (MB)"
    else:
        peak_mem_mb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024
        mem_kind = "peak resident set size (MB)"
    durations.sort()
    q = statistics.quantiles(durations, n=20) if len(durations) >= 2 else durations
    return {
        "sentence_count": len(sentences),
        "warmup_excluded": warmup,
        "latency_mean_s": statistics.fmean(durations),
        "latency_p50_s": statistics.median(durations),
        "latency_p95_s": q[-1] if len(durations) >= 2 else durations[0],
        "peak_memory_mb": peak_mem_mb,
        "memory_kind": mem_kind,
        "config_hash": cfg.config_hash(),
        "methodology": (
            "each sentence synthesized individually with batch size one; "
            f"first {warmup} iteration(s) excluded as warmup; wall-clock via "
            "perf_counter"
        ),
    }
