"""Command-line interface.

Subcommands: tokenize, embed-prompt, synth, train, bench-complexity,
bench-resources, config.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import config as config_mod
from . import frontend
from .frontend import Language


def _add_style_args(parser):
    parser.add_argument("--age", choices=[a.value for a in _age_values()])
    parser.add_argument("--gender", choices=["male", "female"])
    parser.add_argument("--accent")
    parser.add_argument("--emotion",
                        choices=["neutral", "happy", "sad", "angry", "surprise"])
    parser.add_argument("--prompt", help="raw prompt text instead of fields")
    parser.add_argument("--prompt-key", help="prompt-cache key instead of text")


def _age_values():
    from .prompts import Age
    return list(Age)


def _caption_from_args(args):
    from .prompts import Age, Emotion, Gender, StyleCaptionFields
    fields = (args.age, args.gender, args.accent, args.emotion)
    if all(f is None for f in fields):
        return None
    if any(f is None for f in fields):
        raise SystemExit("--age, --gender, --accent and --emotion go together")
    return StyleCaptionFields(
        age=Age(args.age), gender=Gender(args.gender),
        accent=args.accent, emotion=Emotion(args.emotion),
    )


def cmd_tokenize(args):
    vocab = frontend.default_vocabulary()
    seq = frontend.tokenize(args.text, Language(args.lang), vocab)
    print("phoneme_ids:", list(seq.phoneme_ids))
    print("style_ids:  ", list(seq.style_ids))
    print("rendered:   ", frontend.sequence_to_text(seq, vocab))


def cmd_embed_prompt(args):
    from .prompts import (
        HashEmbeddingBackend, PromptCache, SentenceEncoderBackend,
        build_prompt, cache_key,
    )
    caption = _caption_from_args(args)
    if args.raw_text is not None:
        text = args.raw_text
    elif caption is not None:
        text = build_prompt(caption)
    else:
        raise SystemExit("give either --raw-text or all four caption fields")
    if args.backend == "hash":
        backend = HashEmbeddingBackend(args.dim)
    else:
        backend = SentenceEncoderBackend()
    cache = PromptCache(args.cache) if args.cache else None
    if cache is not None:
        emb = cache.get_or_encode(text, backend)
    else:
        from .prompts import encode_prompt
        emb = encode_prompt(text, backend)
    print("prompt: ", text)
    print("backend:", emb.backend_id)
    print("key:    ", cache_key(backend.backend_id, text))
    print("dim:    ", emb.vector.shape[0])
    print("head:   ", [round(float(x), 5) for x in emb.vector[:6]])


def cmd_synth(args):
    import torch

    from .dataset import save_audio
    from .inference import SynthesisRequest, synthesize
    from .prompts import HashEmbeddingBackend, PromptCache

    caption = _caption_from_args(args)
    req = SynthesisRequest(
        text=args.text,
        language=Language(args.lang),
        caption=caption,
        prompt_text=args.prompt,
        prompt_key=args.prompt_key,
        duration_scale=args.scale,
        seed=args.seed,
    )
    cache = PromptCache(args.cache) if args.cache else None
    wav = synthesize(req, args.ckpt, cache=cache)
    from .training import load_checkpoint
    _, cfg = load_checkpoint(args.ckpt)
    save_audio(args.out, wav, cfg.sample_rate)
    print(f"wrote {args.out} ({wav.shape[0]} samples @ {cfg.sample_rate} Hz)")


def cmd_train(args):
    from .training import train

    cfg = config_mod.load(args.config) if args.config else config_mod.desk_config()
    summary = train(args.manifest, cfg, args.out)
    print(json.dumps({k: v for k, v in summary.items() if k != "final"}, indent=2))
    print("final:", json.dumps(summary["final"], indent=2))


def cmd_bench_complexity(args):
    from .bench import bench_complexity

    report = bench_complexity(
        [int(x) for x in args.n.split(",")],
        [int(x) for x in args.m.split(",")],
        d_model=args.d, n_layers=args.layers, repeats=args.repeats,
    )
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text)


def cmd_bench_resources(args):
    from .bench import count_parameters, measure_inference, full_scale_parameter_report
    from .inference import load_synthesizer

    sentences = []
    for line in Path(args.sentences).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        lang, text = line.split("|", 1)
        sentences.append((lang, text))
    report = measure_inference(args.ckpt, sentences)
    model, _, _ = load_synthesizer(args.ckpt)
    report["parameters"] = count_parameters(model)
    if args.full_scale:
        report["full_scale_parameters"] = full_scale_parameter_report()
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text)


def cmd_config(args):
    if args.print_schema:
        print(config_mod.print_schema())
    else:
        print(config_mod.to_text(config_mod.desk_config()), end="")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stylevox",
        description="Two-level style-controllable text-to-speech",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tokenize", help="print token ids and rendered IPA")
    p.add_argument("--lang", choices=["en", "zh"], required=True)
    p.add_argument("--text", required=True)
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("embed-prompt", help="encode a style prompt")
    _add_style_args(p)
    p.add_argument("--raw-text")
    p.add_argument("--cache", help="path of the embedding cache file")
    p.add_argument("--backend", choices=["hash", "mpnet"], default="hash")
    p.add_argument("--dim", type=int, default=768)
    p.set_defaults(func=cmd_embed_prompt)

    p = sub.add_parser("synth", help="synthesize speech from text")
    p.add_argument("--text", required=True)
    p.add_argument("--lang", choices=["en", "zh"], required=True)
    _add_style_args(p)
    p.add_argument("--scale", type=float, default=1.0, help="duration scale")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--cache")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="run the training loop")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config")
    p.add_argument("--out", default="runs/latest")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench-complexity",
                       help="separate vs joint attention cost grid")
    p.add_argument("--n", default="32,64,128")
    p.add_argument("--m", default="8,16,32")
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench_complexity)

    p = sub.add_parser("bench-resources", help="latency/memory/parameters")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--sentences", required=True,
                   help="file of `lang|text` lines")
    p.add_argument("--full-scale", action="store_true",
                   help="also report full-size parameter counts")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench_resources)

    p = sub.add_parser("config", help="configuration helpers")
    p.add_argument("--print-schema", action="store_true")
    p.set_defaults(func=cmd_config)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
