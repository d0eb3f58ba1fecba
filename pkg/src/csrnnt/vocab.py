"""Output vocabulary with per-symbol language attributes, and transcript tagging.

Symbols carry a language (Mandarin / English / Neutral) and a unit kind. The
reserved layout is fixed: index 0 is the blank, 1 is the Mandarin tag <chn>,
2 is the English tag <eng>; Mandarin characters follow in sorted order, then
English wordpieces in sorted order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

from .errors import DataError, DomainError

CHN_TAG = "<chn>"
ENG_TAG = "<eng>"
BLANK_SURFACE = "<blank>"

BLANK_ID = 0
CHN_ID = 1
ENG_ID = 2

# CJK Unified Ideographs plus extensions A/B and the compatibility block.
_CJK_RANGES = (
    (0x4E00, 0x9FFF),
    (0x3400, 0x4DBF),
    (0x20000, 0x2A6DF),
    (0xF900, 0xFAFF),
)

_ENGLISH_CHARS = frozenset(
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ'-"
)


class Lang(str, Enum):
    MANDARIN = "man"
    ENGLISH = "eng"
    NEUTRAL = "neu"


class Kind(str, Enum):
    BLANK = "blank"
    LANGUAGE_ID = "language_id"
    MANDARIN_CHAR = "mandarin_char"
    ENGLISH_WORDPIECE = "english_wordpiece"


def is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def classify_token_language(token: str) -> Lang:
    """Mandarin if any CJK character, English if all ASCII letters/'/-, else Neutral."""
    if not token:
        raise DomainError("classify_token_language: empty token")
    if any(ch.isspace() for ch in token):
        raise DomainError(f"classify_token_language: token {token!r} contains whitespace")
    if any(is_cjk(ch) for ch in token):
        return Lang.MANDARIN
    if all(ch in _ENGLISH_CHARS for ch in token):
        return Lang.ENGLISH
    return Lang.NEUTRAL


def insert_language_tags(tokens) -> list[str]:
    """Insert <chn>/<eng> before the first token of each language run.

    ``tokens`` is a sequence of (surface, Lang) pairs. Neutral tokens never
    trigger a tag and do not reset the current language. Existing tag tokens
    are recognized and passed through, which makes the operation a no-op on
    its own output.
    """
    out = []
    current = Lang.NEUTRAL
    for surface, lang in tokens:
        if surface == CHN_TAG:
            current = Lang.MANDARIN
            out.append(surface)
            continue
        if surface == ENG_TAG:
            current = Lang.ENGLISH
            out.append(surface)
            continue
        if lang == Lang.MANDARIN and current != Lang.MANDARIN:
            out.append(CHN_TAG)
            current = Lang.MANDARIN
        elif lang == Lang.ENGLISH and current != Lang.ENGLISH:
            out.append(ENG_TAG)
            current = Lang.ENGLISH
        out.append(surface)
    return out


def tag_tokens(tokens: list[str]) -> list[str]:
    """Classify plain token strings and insert language tags."""
    return insert_language_tags(
        [(t, Lang.NEUTRAL if t in (CHN_TAG, ENG_TAG) else classify_token_language(t))
         for t in tokens])


def strip_language_tags(tokens: list[str]) -> list[str]:
    return [t for t in tokens if t not in (CHN_TAG, ENG_TAG)]


@dataclass(frozen=True)
class Symbol:
    surface: str
    lang: Lang
    kind: Kind


class Vocabulary:
    """Ordered symbol table with reserved blank and language-ID entries."""

    def __init__(self, symbols: list[Symbol]):
        if len(symbols) < 3:
            raise DataError("vocabulary must contain blank and both language IDs")
        if symbols[BLANK_ID].kind != Kind.BLANK:
            raise DataError("vocabulary index 0 must be the blank")
        if (symbols[CHN_ID].surface, symbols[ENG_ID].surface) != (CHN_TAG, ENG_TAG):
            raise DataError("vocabulary indices 1 and 2 must be <chn> and <eng>")
        surfaces = [s.surface for s in symbols]
        if len(set(surfaces)) != len(surfaces):
            raise DataError("vocabulary surfaces must be unique")
        if sum(1 for s in symbols if s.kind == Kind.BLANK) != 1:
            raise DataError("vocabulary must contain exactly one blank")
        for s in symbols:
            if s.kind == Kind.MANDARIN_CHAR and s.lang != Lang.MANDARIN:
                raise DataError(f"mandarin_char {s.surface!r} must have Mandarin attr")
            if s.kind == Kind.ENGLISH_WORDPIECE and s.lang != Lang.ENGLISH:
                raise DataError(f"english_wordpiece {s.surface!r} must have English attr")
        self.symbols = symbols
        self._index = {s.surface: i for i, s in enumerate(symbols)}

    def __len__(self):
        return len(self.symbols)

    def __contains__(self, surface: str):
        return surface in self._index

    def id_of(self, surface: str) -> int:
        try:
            return self._index[surface]
        except KeyError:
            raise DataError(f"symbol {surface!r} not in vocabulary") from None

    def surface(self, idx: int) -> str:
        return self.symbols[idx].surface

    def lang(self, idx: int) -> Lang:
        return self.symbols[idx].lang

    def kind(self, idx: int) -> Kind:
        return self.symbols[idx].kind

    def ids_with_lang(self, lang: Lang) -> list[int]:
        return [i for i, s in enumerate(self.symbols)
                if s.lang == lang and s.kind in (Kind.MANDARIN_CHAR, Kind.ENGLISH_WORDPIECE)]

    def to_lines(self) -> list[str]:
        return [f"{i}\t{s.surface}\t{s.lang.value}\t{s.kind.value}"
                for i, s in enumerate(self.symbols)]

    def sha256(self) -> str:
        return hashlib.sha256("\n".join(self.to_lines()).encode("utf-8")).hexdigest()

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for line in self.to_lines():
                f.write(line + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        symbols = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 4:
                    raise DataError(f"{path}:{lineno + 1}: expected 4 tab-separated fields")
                idx, surface, lang, kind = parts
                if int(idx) != len(symbols):
                    raise DataError(f"{path}:{lineno + 1}: index {idx} out of order")
                symbols.append(Symbol(surface, Lang(lang), Kind(kind)))
        return cls(symbols)


def build_vocab(tagged_corpus: list[list[str]], bpe) -> Vocabulary:
    """Collect Mandarin characters and producible English wordpieces.

    ``tagged_corpus`` is a list of token lists with inline <chn>/<eng> tags.
    Tokens that are neither Mandarin character sequences nor English words are
    collected and reported in a DataError rather than silently dropped.
    """
    if not any(tagged_corpus):
        raise DataError("build_vocab: empty corpus")
    man_chars = set()
    alphabet = set()
    untaggable = []
    for utt in tagged_corpus:
        for token in utt:
            if token in (CHN_TAG, ENG_TAG):
                continue
            lang = classify_token_language(token)
            if lang == Lang.MANDARIN and all(is_cjk(ch) for ch in token):
                man_chars.update(token)
            elif lang == Lang.ENGLISH:
                alphabet.update(token)
            else:
                untaggable.append(token)
    if untaggable:
        uniq = sorted(set(untaggable))
        raise DataError(f"build_vocab: {len(uniq)} untaggable symbol(s): {uniq[:20]}")
    pieces = bpe.producible_units(alphabet)
    symbols = [
        Symbol(BLANK_SURFACE, Lang.NEUTRAL, Kind.BLANK),
        Symbol(CHN_TAG, Lang.MANDARIN, Kind.LANGUAGE_ID),
        Symbol(ENG_TAG, Lang.ENGLISH, Kind.LANGUAGE_ID),
    ]
    symbols += [Symbol(ch, Lang.MANDARIN, Kind.MANDARIN_CHAR) for ch in sorted(man_chars)]
    symbols += [Symbol(p, Lang.ENGLISH, Kind.ENGLISH_WORDPIECE) for p in sorted(pieces)]
    return Vocabulary(symbols)


def detokenize(tokens: list[str], marker: str = "</w>") -> list[str]:
    """Join wordpieces back into words; language tags are dropped.

    Mandarin characters pass through as single-character words. English
    pieces accumulate until one carries the end-of-word marker.
    """
    words = []
    buf = ""
    for tok in tokens:
        if tok in (CHN_TAG, ENG_TAG):
            continue
        if len(tok) == 1 and is_cjk(tok):
            if buf:
                words.append(buf)
                buf = ""
            words.append(tok)
            continue
        if tok.endswith(marker):
            words.append(buf + tok[:-len(marker)])
            buf = ""
        else:
            buf += tok
    if buf:
        words.append(buf)
    return [w for w in words if w]


def read_corpus(path) -> dict[str, list[str]]:
    """Read utt_id<TAB>tokens lines into an ordered mapping."""
    utts = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise DataError(f"{path}:{lineno + 1}: missing utt_id<TAB>tokens separator")
            utt_id, text = line.split("\t", 1)
            if utt_id in utts:
                raise DataError(f"{path}:{lineno + 1}: duplicate utterance id {utt_id!r}")
            utts[utt_id] = text.split() if text else []
    return utts


def write_corpus(path, utts: dict[str, list[str]]):
    with open(path, "w", encoding="utf-8") as f:
        for utt_id, tokens in utts.items():
            f.write(f"{utt_id}\t{' '.join(tokens)}\n")
