"""Synthetic bilingual corpus and acoustic features standing in for real speech.

Utterances follow a first-order Markov language process; each token emits a
few frames around a token-specific anchor vector plus Gaussian noise, which
makes the recognition task learnable by a tiny model in minutes. Speed
perturbation is modeled as linear resampling of the frame axis.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DomainError
from .vocab import Lang

FEATURE_MAGIC = b"CSFT"

_CONSONANTS = "bcdfghjklmnpqrstvwz"
_VOWELS = "aeiou"


@dataclass
class SynthConfig:
    seed: int = 42
    num_utterances: int = 2000
    mandarin_vocab: int = 30
    english_vocab: int = 30
    p_switch: float = 0.3
    mandarin_frames_per_token: int = 8
    english_frames_per_char: int = 3
    feat_dim: int = 16
    noise_sigma: float = 0.1
    min_tokens: int = 4
    max_tokens: int = 12

    def __post_init__(self):
        if not 0.0 < self.p_switch < 1.0:
            raise DomainError("p_switch must be in (0, 1)")
        for field in ("num_utterances", "mandarin_vocab", "english_vocab",
                      "mandarin_frames_per_token", "english_frames_per_char",
                      "feat_dim", "min_tokens", "max_tokens"):
            if getattr(self, field) < 1:
                raise DomainError(f"{field} must be >= 1")
        if self.noise_sigma < 0:
            raise DomainError("noise_sigma must be >= 0")

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class SynthUtterance:
    utt_id: str
    tokens: list[str]
    langs: list[Lang]
    features: np.ndarray | None = None


def mandarin_tokens(n: int) -> list[str]:
    return [chr(0x4E00 + i) for i in range(n)]


def english_tokens(n: int) -> list[str]:
    """Deterministic pronounceable words with 1 to 3 syllables."""
    words = []
    for i in range(n):
        syllables = 1 + i % 3
        q = i // 3
        word = "".join(_CONSONANTS[(q + 7 * j) % len(_CONSONANTS)]
                       + _VOWELS[(q + 3 * j) % len(_VOWELS)]
                       for j in range(syllables))
        words.append(word)
    if len(set(words)) != n:
        raise DataError(f"english_tokens: vocabulary of {n} is not unique")
    return words


def synth_vocab(config: SynthConfig) -> dict[str, Lang]:
    vocab = {t: Lang.MANDARIN for t in mandarin_tokens(config.mandarin_vocab)}
    vocab.update({t: Lang.ENGLISH for t in english_tokens(config.english_vocab)})
    return vocab


def token_anchor(config: SynthConfig, token: str) -> np.ndarray:
    """Fixed anchor vector from a seeded hash of the token identity."""
    digest = hashlib.sha256(f"{config.seed}:{token}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    return rng.standard_normal(config.feat_dim)


def _token_duration(config: SynthConfig, token: str, lang: Lang,
                    rng: np.random.Generator) -> int:
    if lang == Lang.MANDARIN:
        mean = config.mandarin_frames_per_token
    else:
        mean = config.english_frames_per_char * len(token)
    return max(1, mean + int(rng.integers(-1, 2)))


def gen_transcript(config: SynthConfig, rng: np.random.Generator):
    """One utterance of the Markov language process: (tokens, langs)."""
    man = mandarin_tokens(config.mandarin_vocab)
    eng = english_tokens(config.english_vocab)
    length = int(rng.integers(config.min_tokens, config.max_tokens + 1))
    lang = Lang.MANDARIN if rng.random() < 0.5 else Lang.ENGLISH
    tokens = []
    langs = []
    for i in range(length):
        if i > 0 and rng.random() < config.p_switch:
            lang = Lang.ENGLISH if lang == Lang.MANDARIN else Lang.MANDARIN
        pool = man if lang == Lang.MANDARIN else eng
        tokens.append(pool[int(rng.integers(0, len(pool)))])
        langs.append(lang)
    return tokens, langs


def gen_features(config: SynthConfig, tokens: list[str],
                 rng: np.random.Generator) -> np.ndarray:
    """Frames for a transcript: anchor per token plus Gaussian noise."""
    vocab = synth_vocab(config)
    frames = []
    for token in tokens:
        lang = vocab.get(token)
        if lang is None:
            raise DomainError(f"gen_features: unknown synthetic token {token!r}")
        duration = _token_duration(config, token, lang, rng)
        anchor = token_anchor(config, token)
        noise = config.noise_sigma * rng.standard_normal((duration, config.feat_dim))
        frames.append(anchor[None, :] + noise)
    return np.concatenate(frames, axis=0) if frames else \
        np.zeros((0, config.feat_dim))


def gen_utterances(config: SynthConfig, prefix: str = "utt") -> list[SynthUtterance]:
    """The full corpus; utterance i uses an RNG seeded with seed XOR i."""
    out = []
    for idx in range(config.num_utterances):
        rng = np.random.default_rng(config.seed ^ idx)
        tokens, langs = gen_transcript(config, rng)
        features = gen_features(config, tokens, rng)
        out.append(SynthUtterance(utt_id=f"{prefix}{idx:06d}", tokens=tokens,
                                  langs=langs, features=features))
    return out


def perturb_features(features: np.ndarray, rate: float) -> np.ndarray:
    """Resample the frame axis to round(T / rate) frames by linear interpolation."""
    features = np.asarray(features)
    T = features.shape[0]
    if T < 2:
        raise DomainError("perturb_features: need at least 2 frames")
    if not 0.5 < rate < 2.0:
        raise DomainError(f"perturb_features: rate {rate} outside (0.5, 2)")
    if rate == 1.0:
        return features.copy()
    T2 = int(round(T / rate))
    if T2 < 2:
        return features[:1].copy()
    positions = np.arange(T2) * (T - 1) / (T2 - 1)
    lower = np.floor(positions).astype(int)
    frac = positions - lower
    upper = np.minimum(lower + 1, T - 1)
    return (1.0 - frac)[:, None] * features[lower] + frac[:, None] * features[upper]


# ---------------------------------------------------------------------------
# Feature files: magic CSFT, u32 T, u32 F, then T*F little-endian float32
# ---------------------------------------------------------------------------


def write_features(path, features: np.ndarray):
    features = np.asarray(features)
    T, F = features.shape
    with open(path, "wb") as f:
        f.write(FEATURE_MAGIC)
        f.write(struct.pack("<II", T, F))
        f.write(np.ascontiguousarray(features, dtype="<f4").tobytes())


def read_features(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != FEATURE_MAGIC:
            raise DataError(f"{path}: bad feature magic {magic!r}")
        T, F = struct.unpack("<II", f.read(8))
        raw = f.read(4 * T * F)
        if len(raw) != 4 * T * F:
            raise DataError(f"{path}: truncated feature file")
    return np.frombuffer(raw, dtype="<f4").reshape(T, F).copy()


def write_manifest(path, entries: dict[str, str]):
    with open(path, "w", encoding="utf-8") as f:
        for utt_id, feature_path in entries.items():
            f.write(f"{utt_id}\t{feature_path}\n")


def read_manifest(path) -> dict[str, str]:
    entries = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise DataError(f"{path}:{lineno + 1}: missing tab separator")
            utt_id, feature_path = line.split("\t", 1)
            entries[utt_id] = feature_path
    return entries
