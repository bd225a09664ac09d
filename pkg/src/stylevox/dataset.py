"""Training data ingestion: manifest parsing, audio loading/resampling,
per-example preprocessing, batch collation, and a bundled synthetic
mini-corpus generator for overfit smoke runs.

Manifest format (UTF-8): `id|audio_path|language|age|gender|emotion|text`,
one example per line. Relative audio paths resolve against the manifest's
directory. The accent caption field is the language name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from scipy.io import wavfile
from scipy.signal import resample_poly

from . import frontend
from .frontend import Language, PhonemeSequence, Vocabulary
from .mel import mel_from_config
from .prompts import (
    Age,
    Emotion,
    Gender,
    StyleCaptionFields,
    build_prompt,
    cache_key,
)

_ACCENT_BY_LANGUAGE = {Language.EN: "English", Language.ZH: "Chinese"}


class ManifestError(ValueError):
    """One or more manifest lines are invalid; message lists all of them."""


@dataclass
class TrainingExample:
    utterance_id: str
    text: str
    language: Language
    caption: StyleCaptionFields
    audio_path: Path
    waveform: torch.Tensor          # float32 in [-1, 1], 22.05 kHz
    sequence: PhonemeSequence
    mel: torch.Tensor               # (n_mels, T)
    prompt_text: str
    prompt_key: str                 # embedding cache key


def load_audio(path, target_rate: int) -> torch.Tensor:
    """Read a WAV file, convert to mono float32 in [-1, 1], resample."""
    rate, data = wavfile.read(path)
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.dtype == np.int16:
        data = data.astype(np.float32) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float32) / 2147483648.0
    elif data.dtype == np.uint8:
        data = (data.astype(np.float32) - 128.0) / 128.0
    else:
        data = data.astype(np.float32)
    if rate != target_rate:
        g = math.gcd(rate, target_rate)
        data = resample_poly(data, target_rate // g, rate // g).astype(np.float32)
    return torch.from_numpy(np.clip(data, -1.0, 1.0))


def save_audio(path, waveform: torch.Tensor, rate: int) -> None:
    """Write mono 16-bit PCM."""
    data = np.clip(waveform.detach().cpu().numpy(), -1.0, 1.0)
    wavfile.write(path, rate, (data * 32767.0).astype(np.int16))


def _parse_line(line: str, lineno: int, base_dir: Path):
    parts = line.split("|")
    if len(parts) != 7:
        raise ValueError(f"line {lineno}: expected 7 '|'-separated fields, got {len(parts)}")
    utt_id, audio_path, language, age, gender, emotion, text = parts
    try:
        lang = Language(language.strip().lower())
    except ValueError:
        raise ValueError(f"line {lineno}: unknown language {language!r}") from None
    try:
        caption = StyleCaptionFields(
            age=Age(age.strip().lower()),
            gender=Gender(gender.strip().lower()),
            accent=_ACCENT_BY_LANGUAGE[lang],
            emotion=Emotion(emotion.strip().lower()),
        )
    except ValueError as exc:
        raise ValueError(f"line {lineno}: {exc}") from None
    path = Path(audio_path.strip())
    if not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise ValueError(f"line {lineno}: audio file not found: {path}")
    return utt_id.strip(), path, lang, caption, text.strip()


def ingest_manifest(path, cfg, vocab: Vocabulary | None = None,
                    tables: dict | None = None,
                    backend_id: str = "") -> list[TrainingExample]:
    """Parse, load, resample, tokenize, and mel-ify every manifest line.

    Every bad line is reported; any error aborts the run.
    """
    manifest = Path(path)
    if not manifest.exists():
        raise FileNotFoundError(f"manifest not found: {manifest}")
    vocab = vocab or frontend.default_vocabulary()
    tables = tables or frontend.default_tables()
    examples: list[TrainingExample] = []
    errors: list[str] = []
    for lineno, raw in enumerate(
        manifest.read_text(encoding="utf-8").splitlines(), start=1
    ):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            utt_id, audio_path, lang, caption, text = _parse_line(
                line, lineno, manifest.parent
            )
            waveform = load_audio(audio_path, cfg.sample_rate)
            sequence = frontend.tokenize(text, lang, vocab, tables)
            mel = mel_from_config(waveform, cfg)
            prompt_text = build_prompt(caption)
            examples.append(TrainingExample(
                utterance_id=utt_id,
                text=text,
                language=lang,
                caption=caption,
                audio_path=audio_path,
                waveform=waveform,
                sequence=sequence,
                mel=mel,
                prompt_text=prompt_text,
                prompt_key=cache_key(backend_id, prompt_text),
            ))
        except (ValueError, FileNotFoundError) as exc:
            msg = str(exc)
            errors.append(msg if msg.startswith("line ") else f"line {lineno}: {msg}")
    if errors:
        raise ManifestError(
            "manifest contains invalid lines:\n" + "\n".join(errors)
        )
    return examples


@dataclass
class Batch:
    phoneme_ids: torch.Tensor    # (B, L_max)
    style_ids: torch.Tensor
    token_lengths: torch.Tensor
    mel: torch.Tensor            # (B, n_mels, T_max)
    frame_lengths: torch.Tensor
    waveform: torch.Tensor       # (B, S_max)
    prompt_emb: torch.Tensor     # (B, prompt_dim)


def collate(examples: list[TrainingExample],
            prompt_vectors: dict[str, np.ndarray]) -> Batch:
    """Zero-pad to the batch maxima. Padded token positions use id 0 and
    are excluded from every reduction by the length masks."""
    B = len(examples)
    L = max(len(e.sequence) for e in examples)
    T = max(e.mel.shape[-1] for e in examples)
    S = max(e.waveform.shape[0] for e in examples)
    n_mels = examples[0].mel.shape[0]
    phoneme_ids = torch.zeros(B, L, dtype=torch.long)
    style_ids = torch.zeros(B, L, dtype=torch.long)
    token_lengths = torch.zeros(B, dtype=torch.long)
    mel = torch.zeros(B, n_mels, T)
    frame_lengths = torch.zeros(B, dtype=torch.long)
    waveform = torch.zeros(B, S)
    prompts = []
    for b, ex in enumerate(examples):
        n = len(ex.sequence)
        phoneme_ids[b, :n] = torch.tensor(ex.sequence.phoneme_ids)
        style_ids[b, :n] = torch.tensor(ex.sequence.style_ids)
        token_lengths[b] = n
        t = ex.mel.shape[-1]
        mel[b, :, :t] = ex.mel
        frame_lengths[b] = t
        waveform[b, :ex.waveform.shape[0]] = ex.waveform
        prompts.append(torch.from_numpy(
            np.asarray(prompt_vectors[ex.prompt_key], dtype=np.float32)
        ))
    return Batch(
        phoneme_ids=phoneme_ids,
        style_ids=style_ids,
        token_lengths=token_lengths,
        mel=mel,
        frame_lengths=frame_lengths,
        waveform=waveform,
        prompt_emb=torch.stack(prompts),
    )


# ---- bundled synthetic mini-corpus ------------------------------------

_TOY_UTTERANCES = [
    ("toy01", "en", "adult", "male", "neutral", "the sun is warm"),
    ("toy02", "en", "adult", "female", "happy", "a little bird can sing"),
    ("toy03", "en", "youngadult", "female", "happy", "we walk by the river"),
    ("toy04", "en", "teenager", "male", "sad", "the night is cold and dark"),
    ("toy05", "en", "child", "female", "surprise", "look at the big moon"),
    ("toy06", "en", "adult", "male", "angry", "open the door now"),
    ("toy07", "en", "youngadult", "male", "neutral", "rain on the green hill"),
    ("toy08", "zh", "adult", "female", "neutral", "你好"),
    ("toy09", "zh", "youngadult", "male", "happy", "我爱中国"),
    ("toy10", "zh", "adult", "female", "sad", "天上有月"),
]


def _toy_waveform(index: int, rate: int) -> np.ndarray:
    """Deterministic pseudo-speech: a handful of harmonic segments with a
    moving fundamental and an amplitude envelope, plus faint noise."""
    rng = np.random.Generator(np.random.PCG64(1000 + index))
    duration = 0.9 + 0.05 * (index % 5)
    n = int(duration * rate)
    t = np.arange(n) / rate
    f0 = 110.0 + 25.0 * index + 20.0 * np.sin(2 * np.pi * (0.8 + 0.2 * index) * t)
    phase = 2 * np.pi * np.cumsum(f0) / rate
    wav = np.zeros(n)
    for k, amp in enumerate((1.0, 0.5, 0.3, 0.15), start=1):
        wav += amp * np.sin(k * phase)
    envelope = 0.4 + 0.6 * np.abs(np.sin(2 * np.pi * (2.0 + 0.3 * index) * t))
    fade = np.minimum(1.0, np.minimum(t, duration - t) / 0.05)
    wav = wav * envelope * fade
    wav += 0.01 * rng.standard_normal(n)
    return (0.8 * wav / np.max(np.abs(wav))).astype(np.float32)


def write_toy_corpus(directory, sample_rate: int = 22050) -> Path:
    """Create the 10-utterance mini-corpus; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, (utt_id, lang, age, gender, emotion, text) in enumerate(_TOY_UTTERANCES):
        wav = _toy_waveform(i, sample_rate)
        wav_path = directory / f"{utt_id}.wav"
        wavfile.write(wav_path, sample_rate, (wav * 32767.0).astype(np.int16))
        lines.append(f"{utt_id}|{wav_path.name}|{lang}|{age}|{gender}|{emotion}|{text}")
    manifest = directory / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest
