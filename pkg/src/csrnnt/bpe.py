"""Byte-pair encoding for English tokens, learned greedily from word counts.

Words are split into characters plus a separate end-of-word marker unit;
merges fuse the most frequent adjacent pair, ties broken by lexicographic
order of the pair. Mandarin text never goes through BPE.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .errors import DataError, DomainError

END_MARKER = "</w>"


@dataclass
class BpeModel:
    merges: list[tuple[str, str]] = field(default_factory=list)
    alphabet: set[str] = field(default_factory=set)
    marker: str = END_MARKER

    def producible_units(self, extra_alphabet=()) -> set[str]:
        """Every unit an encode call can emit over the known alphabet."""
        units = set(self.alphabet) | set(extra_alphabet) | {self.marker}
        units.update(left + right for left, right in self.merges)
        return units


def word_to_units(word: str, marker: str = END_MARKER) -> list[str]:
    return list(word) + [marker]


def bpe_learn(corpus: Counter | dict[str, int], num_merges: int) -> BpeModel:
    """Greedy highest-frequency pair merging over a word multiset.

    Stops early when no adjacent pair occurs at least twice.
    """
    if num_merges < 0:
        raise DomainError("bpe_learn: num_merges must be >= 0")
    counts = Counter(corpus)
    if not counts:
        raise DataError("bpe_learn: empty corpus")
    alphabet = set()
    for word in counts:
        alphabet.update(word)
    sequences = {word: word_to_units(word) for word in counts}

    merges = []
    for _ in range(num_merges):
        pair_counts = Counter()
        for word, units in sequences.items():
            n = counts[word]
            for a, b in zip(units, units[1:]):
                pair_counts[(a, b)] += n
        if not pair_counts:
            break
        best_count = max(pair_counts.values())
        if best_count < 2:
            break
        best = min(p for p, c in pair_counts.items() if c == best_count)
        merges.append(best)
        for word, units in sequences.items():
            sequences[word] = _apply_merge(units, best)
    return BpeModel(merges=merges, alphabet=alphabet)


def _apply_merge(units: list[str], pair: tuple[str, str]) -> list[str]:
    merged = pair[0] + pair[1]
    out = []
    i = 0
    while i < len(units):
        if i + 1 < len(units) and units[i] == pair[0] and units[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(units[i])
            i += 1
    return out


def bpe_encode(model: BpeModel, token: str) -> list[str]:
    """Split a word to character units plus marker, then replay the merges.

    Characters outside the learn-time alphabet simply never participate in a
    merge, so they fall back to single-character units.
    """
    units = word_to_units(token, model.marker)
    for pair in model.merges:
        units = _apply_merge(units, pair)
    return units


def bpe_decode(pieces: list[str], marker: str = END_MARKER) -> str:
    """Concatenate pieces and strip the end-of-word marker."""
    joined = "".join(pieces)
    if joined.endswith(marker):
        joined = joined[:-len(marker)]
    return joined


def save_bpe(model: BpeModel, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"bpe-v1 {len(model.merges)}\n")
        for left, right in model.merges:
            f.write(f"{left} {right}\n")


def load_bpe(path) -> BpeModel:
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        parts = header.split()
        if len(parts) != 2 or parts[0] != "bpe-v1":
            raise DataError(f"{path}: bad BPE header {header!r}")
        declared = int(parts[1])
        merges = []
        for lineno, line in enumerate(f):
            line = line.rstrip("\n")
            if not line:
                continue
            pair = line.split(" ")
            if len(pair) != 2:
                raise DataError(f"{path}:{lineno + 2}: expected 'left right'")
            merges.append((pair[0], pair[1]))
    if len(merges) != declared:
        raise DataError(f"{path}: header declares {declared} merges, found {len(merges)}")
    alphabet = set()
    for left, right in merges:
        for unit in (left, right):
            if unit != END_MARKER and not unit.endswith(END_MARKER):
                alphabet.update(unit)
    return BpeModel(merges=merges, alphabet=alphabet)
