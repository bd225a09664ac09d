"""Multilingual text frontend: English and Chinese text to parallel
IPA-phoneme / prosody-style token sequences.

English words are looked up in a CMU-style lexicon, converted to ARPAbet
and mapped to IPA; the stress digit of each vowel is split off into the
style stream. Chinese characters are looked up in a romanization table,
split into initial/final, and the tone digit becomes the style token for
every phoneme of the syllable. Both streams are wrapped in [START]/[END]
and separated by [|] word-boundary markers.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

START = "[START]"
END = "[END]"
WORD_BOUNDARY = "[|]"
SPECIAL_TOKENS = (START, END, WORD_BOUNDARY)

NONE_STYLE = "NONE"

_DATA_PACKAGE = "stylevox.data"


class Language(str, Enum):
    EN = "en"
    ZH = "zh"


class TokenizationError(ValueError):
    """Input text cannot be tokenized (out-of-vocabulary word/character)."""


class VocabularyError(ValueError):
    """Symbol list file is malformed (duplicate symbol, count mismatch)."""


@dataclass(frozen=True)
class Vocabulary:
    """Dense id tables for IPA phonemes and prosody-style markers.

    Both tables end with the three special tokens so that the two streams
    stay structurally parallel.
    """

    phoneme_table: dict[str, int]
    style_table: dict[str, int]

    @property
    def phoneme_size(self) -> int:
        return len(self.phoneme_table)

    @property
    def style_size(self) -> int:
        return len(self.style_table)

    def phoneme_symbol(self, idx: int) -> str:
        return _symbol_for(self.phoneme_table, idx, "phoneme")

    def style_symbol(self, idx: int) -> str:
        return _symbol_for(self.style_table, idx, "style")


@dataclass(frozen=True)
class PhonemeSequence:
    phoneme_ids: tuple[int, ...]
    style_ids: tuple[int, ...]
    language: Language

    def __post_init__(self):
        if len(self.phoneme_ids) != len(self.style_ids):
            raise ValueError(
                f"parallel arrays differ in length: "
                f"{len(self.phoneme_ids)} vs {len(self.style_ids)}"
            )

    def __len__(self) -> int:
        return len(self.phoneme_ids)


@dataclass(frozen=True)
class LexiconEntry:
    word: str
    arpabet: tuple[str, ...]


def _symbol_for(table: dict[str, int], idx: int, kind: str) -> str:
    for sym, i in table.items():
        if i == idx:
            return sym
    raise ValueError(f"{kind} id {idx} out of range (table size {len(table)})")


def _read_symbol_list(path: Path) -> list[str]:
    """One symbol per line; optional '# count: N' header is verified."""
    declared = None
    symbols: list[str] = []
    seen: set[str] = set()
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if body.startswith("count:"):
                declared = int(body.split(":", 1)[1])
            continue
        if line in seen:
            raise VocabularyError(f"duplicate symbol {line!r} in {path}")
        seen.add(line)
        symbols.append(line)
    if not symbols:
        raise VocabularyError(f"no symbols in {path}")
    if declared is not None and declared != len(symbols):
        raise VocabularyError(
            f"{path} declares {declared} symbols but contains {len(symbols)}"
        )
    return symbols


def build_vocabulary(ipa_list_file, style_list_file) -> Vocabulary:
    """Assign dense ids in file order; special tokens appended last."""
    phonemes = _read_symbol_list(Path(ipa_list_file))
    styles = _read_symbol_list(Path(style_list_file))
    phoneme_table = {s: i for i, s in enumerate(phonemes + list(SPECIAL_TOKENS))}
    style_table = {s: i for i, s in enumerate(styles + list(SPECIAL_TOKENS))}
    return Vocabulary(phoneme_table=phoneme_table, style_table=style_table)


def _data_path(name: str) -> Path:
    return Path(resources.files(_DATA_PACKAGE) / name)


def load_kv_table(path) -> dict[str, str]:
    """UTF-8 `KEY<TAB>VALUE` lines; '#' lines are comments."""
    table: dict[str, str] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        key, value = line.split("\t", 1)
        table[key] = value
    return table


def load_lexicon(path) -> dict[str, LexiconEntry]:
    lexicon: dict[str, LexiconEntry] = {}
    for word, syms in load_kv_table(path).items():
        lexicon[word.upper()] = LexiconEntry(word.upper(), tuple(syms.split()))
    return lexicon


def load_split_table(path) -> dict[str, tuple[str, str]]:
    """Pinyin syllable -> (initial, final); '-' marks an empty initial."""
    table = {}
    for pinyin, value in load_kv_table(path).items():
        initial, final = value.split()
        table[pinyin] = ("" if initial == "-" else initial, final)
    return table


def default_vocabulary() -> Vocabulary:
    return build_vocabulary(
        _data_path("phonemes.txt"), _data_path("style_markers.txt")
    )


def default_tables() -> dict:
    """All shipped frontend fixture tables, keyed by role."""
    return {
        "arpabet_to_ipa": load_kv_table(_data_path("arpabet_to_ipa.tsv")),
        "pinyin_initial_to_ipa": load_kv_table(_data_path("pinyin_initial_to_ipa.tsv")),
        "pinyin_final_to_ipa": load_kv_table(_data_path("pinyin_final_to_ipa.tsv")),
        "lexicon": load_lexicon(_data_path("lexicon_en.tsv")),
        "romanization": load_kv_table(_data_path("zh_romanization.tsv")),
        "split_table": load_split_table(_data_path("pinyin_split.tsv")),
    }


_ARPABET_IPA: dict[str, str] | None = None
_PINYIN_INITIAL_IPA: dict[str, str] | None = None
_PINYIN_FINAL_IPA: dict[str, str] | None = None


def _arpabet_ipa() -> dict[str, str]:
    global _ARPABET_IPA
    if _ARPABET_IPA is None:
        _ARPABET_IPA = load_kv_table(_data_path("arpabet_to_ipa.tsv"))
    return _ARPABET_IPA


def _pinyin_initial_ipa() -> dict[str, str]:
    global _PINYIN_INITIAL_IPA
    if _PINYIN_INITIAL_IPA is None:
        _PINYIN_INITIAL_IPA = load_kv_table(_data_path("pinyin_initial_to_ipa.tsv"))
    return _PINYIN_INITIAL_IPA


def _pinyin_final_ipa() -> dict[str, str]:
    global _PINYIN_FINAL_IPA
    if _PINYIN_FINAL_IPA is None:
        _PINYIN_FINAL_IPA = load_kv_table(_data_path("pinyin_final_to_ipa.tsv"))
    return _PINYIN_FINAL_IPA


def _split_stress(symbol: str) -> tuple[str, str | None]:
    if symbol and symbol[-1] in "012":
        return symbol[:-1], symbol[-1]
    return symbol, None


def tokenize_english(
    text: str, lexicon: dict[str, LexiconEntry], vocab: Vocabulary
) -> PhonemeSequence:
    """Lexicon lookup -> ARPAbet -> IPA; vowel stress digits become style ids.

    Out-of-lexicon words are a hard error: no letter-to-sound fallback.
    """
    text = unicodedata.normalize("NFC", text)
    arpabet_ipa = _arpabet_ipa()
    phon: list[int] = [vocab.phoneme_table[START]]
    styl: list[int] = [vocab.style_table[START]]
    none_id = vocab.style_table[NONE_STYLE]
    words = text.split()
    for w_idx, word in enumerate(words):
        if w_idx > 0:
            phon.append(vocab.phoneme_table[WORD_BOUNDARY])
            styl.append(vocab.style_table[WORD_BOUNDARY])
        key = word.upper()
        entry = lexicon.get(key)
        if entry is None:
            raise TokenizationError(f"word not in lexicon: {word!r}")
        for symbol in entry.arpabet:
            base, stress = _split_stress(symbol)
            ipa = arpabet_ipa.get(base)
            if ipa is None:
                raise TokenizationError(
                    f"ARPAbet symbol {base!r} (word {word!r}) has no IPA mapping"
                )
            phon.append(vocab.phoneme_table[ipa])
            if stress is None:
                styl.append(none_id)
            else:
                styl.append(vocab.style_table[f"STRESS{stress}"])
    phon.append(vocab.phoneme_table[END])
    styl.append(vocab.style_table[END])
    return PhonemeSequence(tuple(phon), tuple(styl), Language.EN)


def tokenize_chinese(
    text: str,
    romanization: dict[str, str],
    split_table: dict[str, tuple[str, str]],
    vocab: Vocabulary,
) -> PhonemeSequence:
    """Character -> pinyin-with-tone -> (initial, final) -> IPA.

    The tone digit is stripped from the final and used as the style id of
    every phoneme in the syllable. Each character counts as one word, so
    [|] separates characters.
    """
    text = unicodedata.normalize("NFC", text)
    initial_ipa = _pinyin_initial_ipa()
    final_ipa = _pinyin_final_ipa()
    phon: list[int] = [vocab.phoneme_table[START]]
    styl: list[int] = [vocab.style_table[START]]
    chars = [c for c in text if not c.isspace()]
    for c_idx, char in enumerate(chars):
        if c_idx > 0:
            phon.append(vocab.phoneme_table[WORD_BOUNDARY])
            styl.append(vocab.style_table[WORD_BOUNDARY])
        pinyin_tone = romanization.get(char)
        if pinyin_tone is None:
            raise TokenizationError(f"character not in romanization table: {char!r}")
        if not pinyin_tone[-1].isdigit():
            raise TokenizationError(
                f"romanization {pinyin_tone!r} of {char!r} lacks a tone digit"
            )
        pinyin, tone = pinyin_tone[:-1], pinyin_tone[-1]
        if pinyin not in split_table:
            raise TokenizationError(f"pinyin {pinyin!r} missing from split table")
        initial, final = split_table[pinyin]
        tone_id = vocab.style_table[f"TONE{tone}"]
        syllable_ipa: list[str] = []
        if initial:
            if initial not in initial_ipa:
                raise TokenizationError(f"initial {initial!r} has no IPA mapping")
            syllable_ipa.append(initial_ipa[initial])
        if final not in final_ipa:
            raise TokenizationError(f"final {final!r} has no IPA mapping")
        syllable_ipa.extend(final_ipa[final].split())
        for ipa in syllable_ipa:
            phon.append(vocab.phoneme_table[ipa])
            styl.append(tone_id)
    phon.append(vocab.phoneme_table[END])
    styl.append(vocab.style_table[END])
    return PhonemeSequence(tuple(phon), tuple(styl), Language.ZH)


def sequence_to_text(seq: PhonemeSequence, vocab: Vocabulary) -> str:
    """Render as space-separated IPA with `:digit` tone/stress annotations.

    [START]/[END] are dropped, word boundaries render as '|'. The result
    parses back to the exact id arrays with text_to_sequence.
    """
    start_p = vocab.phoneme_table[START]
    end_p = vocab.phoneme_table[END]
    boundary_p = vocab.phoneme_table[WORD_BOUNDARY]
    none_s = vocab.style_table[NONE_STYLE]
    parts: list[str] = []
    for pid, sid in zip(seq.phoneme_ids, seq.style_ids):
        if pid in (start_p, end_p):
            continue
        if pid == boundary_p:
            parts.append("|")
            continue
        sym = vocab.phoneme_symbol(pid)
        if sid == none_s:
            parts.append(sym)
        else:
            style = vocab.style_symbol(sid)  # raises on out-of-range ids
            parts.append(f"{sym}:{style[-1]}")
    return " ".join(parts)


def text_to_sequence(
    rendered: str, vocab: Vocabulary, language: Language
) -> PhonemeSequence:
    """Inverse of sequence_to_text for the given language's marker family."""
    marker = "TONE" if language is Language.ZH else "STRESS"
    phon = [vocab.phoneme_table[START]]
    styl = [vocab.style_table[START]]
    for token in rendered.split():
        if token == "|":
            phon.append(vocab.phoneme_table[WORD_BOUNDARY])
            styl.append(vocab.style_table[WORD_BOUNDARY])
            continue
        if ":" in token:
            sym, digit = token.rsplit(":", 1)
            style_sym = f"{marker}{digit}"
        else:
            sym, style_sym = token, NONE_STYLE
        phon.append(vocab.phoneme_table[sym])
        styl.append(vocab.style_table[style_sym])
    phon.append(vocab.phoneme_table[END])
    styl.append(vocab.style_table[END])
    return PhonemeSequence(tuple(phon), tuple(styl), language)


def tokenize(text: str, language: Language, vocab: Vocabulary | None = None,
             tables: dict | None = None) -> PhonemeSequence:
    """Tokenize with the shipped fixture tables."""
    vocab = vocab or default_vocabulary()
    tables = tables or default_tables()
    language = Language(language)
    if language is Language.EN:
        return tokenize_english(text, tables["lexicon"], vocab)
    return tokenize_chinese(text, tables["romanization"], tables["split_table"], vocab)
