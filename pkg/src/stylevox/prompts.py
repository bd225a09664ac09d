"""Paralinguistic prompt handling: caption templating, sentence-embedding
backends, and a persistent embedding cache.

The caption template is literal ("A adult male ...": no article fixing),
and the young-adult age category renders as "young". Embeddings come from
a pluggable backend: a pretrained sentence encoder in production, or a
deterministic hash-to-vector stub for tests and CI.
"""

from __future__ import annotations

import fcntl
import hashlib
import logging
import struct
import unicodedata
import zlib
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Protocol

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_EMBEDDING_DIM = 768


class Age(str, Enum):
    CHILD = "child"
    TEENAGER = "teenager"
    YOUNGADULT = "youngadult"
    ADULT = "adult"


class Gender(str, Enum):
    MALE = "male"
    FEMALE = "female"


class Emotion(str, Enum):
    NEUTRAL = "neutral"
    HAPPY = "happy"
    SAD = "sad"
    ANGRY = "angry"
    SURPRISE = "surprise"


# Display forms used inside the caption; youngadult shortens to "young".
_AGE_DISPLAY = {
    Age.CHILD: "child",
    Age.TEENAGER: "teenager",
    Age.YOUNGADULT: "young",
    Age.ADULT: "adult",
}


@dataclass(frozen=True)
class StyleCaptionFields:
    age: Age
    gender: Gender
    accent: str
    emotion: Emotion


@dataclass(frozen=True)
class PromptEmbedding:
    vector: np.ndarray  # float32, shape (dim,)
    source_text: str
    backend_id: str

    def __post_init__(self):
        if not np.all(np.isfinite(self.vector)):
            raise ValueError("prompt embedding contains non-finite entries")


def build_prompt(fields: StyleCaptionFields) -> str:
    return (
        f"A {_AGE_DISPLAY[fields.age]} {fields.gender.value} is speaking "
        f"{fields.accent} with {fields.emotion.value} emotion."
    )


class MissingBackendError(RuntimeError):
    """The requested encoder backend is not installed/available."""


class EncodeError(RuntimeError):
    """The backend was available but failed to produce an embedding."""


class EncoderBackend(Protocol):
    backend_id: str
    dim: int

    def encode(self, text: str) -> np.ndarray: ...


class HashEmbeddingBackend:
    """Deterministic test backend: sha256 of (backend_id, text) seeds an RNG
    that draws `dim` standard normals, L2-normalized. No model weights needed.
    """

    def __init__(self, dim: int = DEFAULT_EMBEDDING_DIM):
        self.dim = dim
        self.backend_id = f"hash-v1-d{dim}"

    def encode(self, text: str) -> np.ndarray:
        digest = hashlib.sha256(
            f"{self.backend_id}\x00{text}".encode("utf-8")
        ).digest()
        seed = int.from_bytes(digest[:8], "little")
        rng = np.random.Generator(np.random.PCG64(seed))
        vec = rng.standard_normal(self.dim).astype(np.float32)
        norm = float(np.linalg.norm(vec))
        return vec / norm


class SentenceEncoderBackend:
    """Production backend wrapping a pretrained sentence encoder."""

    def __init__(self, model_name: str = "sentence-transformers/all-mpnet-base-v2"):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise MissingBackendError(
                "sentence-transformers is not installed; install the 'mpnet' "
                "extra or use HashEmbeddingBackend"
            ) from exc
        try:
            self._model = SentenceTransformer(model_name)
        except Exception as exc:
            raise MissingBackendError(f"could not load {model_name}: {exc}") from exc
        self.backend_id = f"st:{model_name}"
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, text: str) -> np.ndarray:
        try:
            vec = self._model.encode(text, convert_to_numpy=True)
        except Exception as exc:
            raise EncodeError(f"sentence encoder failed on {text!r}: {exc}") from exc
        return np.asarray(vec, dtype=np.float32)


def encode_prompt(text: str, backend: EncoderBackend) -> PromptEmbedding:
    if not text:
        raise ValueError("prompt text must be non-empty")
    vec = np.asarray(backend.encode(text), dtype=np.float32)
    return PromptEmbedding(vector=vec, source_text=text, backend_id=backend.backend_id)


def cache_key(backend_id: str, text: str) -> str:
    canonical = unicodedata.normalize("NFC", text)
    return hashlib.sha256(f"{backend_id}\x00{canonical}".encode("utf-8")).hexdigest()


_MAGIC = b"SVXCACHE"
_VERSION = 1


class PromptCache:
    """Append-only embedding cache, persistent across processes.

    File layout: 8 magic bytes, u32 version, then entries of
        u32 key_len | key utf-8
        u32 backend_len | backend_id utf-8
        u32 source_len | source_text utf-8
        u32 dim | dim float32 little-endian
        u32 crc32 over everything above (per entry)
    Corrupted or truncated entries are reported and skipped. Writers take
    an exclusive flock; readers never lock (entries are immutable).
    """

    def __init__(self, path):
        self.path = Path(path)
        if not self.path.exists():
            self.path.write_bytes(_MAGIC + struct.pack("<I", _VERSION))
        self._entries: dict[str, PromptEmbedding] = {}
        self._load()

    def _load(self) -> None:
        data = self.path.read_bytes()
        if data[:8] != _MAGIC:
            raise ValueError(f"{self.path} is not an embedding cache (bad magic)")
        (version,) = struct.unpack_from("<I", data, 8)
        if version != _VERSION:
            raise ValueError(f"unsupported cache version {version}")
        offset = 12
        while offset < len(data):
            entry = self._read_entry(data, offset)
            if entry is None:
                break
            key, emb, offset = entry
            if emb is not None:
                self._entries[key] = emb

    @staticmethod
    def _read_entry(data: bytes, offset: int):
        start = offset
        try:
            strings = []
            for _ in range(3):
                (n,) = struct.unpack_from("<I", data, offset)
                offset += 4
                if offset + n > len(data):
                    raise struct.error("truncated")
                strings.append(data[offset:offset + n].decode("utf-8"))
                offset += n
            (dim,) = struct.unpack_from("<I", data, offset)
            offset += 4
            payload = data[offset:offset + 4 * dim]
            if len(payload) != 4 * dim:
                raise struct.error("truncated")
            offset += 4 * dim
            (crc,) = struct.unpack_from("<I", data, offset)
            offset += 4
        except struct.error:
            log.warning("prompt cache: truncated entry at byte %d, skipped", start)
            return None
        if zlib.crc32(data[start:offset - 4]) != crc:
            log.warning("prompt cache: checksum mismatch at byte %d, entry skipped", start)
            return strings[0], None, offset
        key, backend_id, source_text = strings
        vector = np.frombuffer(payload, dtype="<f4").copy()
        return key, PromptEmbedding(vector, source_text, backend_id), offset

    def put(self, key: str, emb: PromptEmbedding) -> None:
        blob = b""
        for s in (key, emb.backend_id, emb.source_text):
            raw = s.encode("utf-8")
            blob += struct.pack("<I", len(raw)) + raw
        payload = np.asarray(emb.vector, dtype="<f4").tobytes()
        blob += struct.pack("<I", emb.vector.shape[0]) + payload
        blob += struct.pack("<I", zlib.crc32(blob))
        with open(self.path, "ab") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            try:
                fh.write(blob)
                fh.flush()
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)
        self._entries[key] = emb

    def get(self, key: str) -> PromptEmbedding | None:
        return self._entries.get(key)

    def get_or_encode(self, text: str, backend: EncoderBackend) -> PromptEmbedding:
        key = cache_key(backend.backend_id, text)
        hit = self.get(key)
        if hit is not None:
            return hit
        emb = encode_prompt(text, backend)
        self.put(key, emb)
        return emb
