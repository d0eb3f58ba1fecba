"""Mixed error rate: word-level English, character-level Mandarin.

Mandarin tokens are expanded to single characters before alignment; English
and Neutral tokens are scored as whole units. The rate denominator is the
reference unit count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DataError
from .vocab import Lang, classify_token_language, is_cjk


@dataclass(frozen=True)
class ScoringUnit:
    text: str
    lang: Lang
    source: int  # index of the originating token


def tokenize_mixed(tokens: list[str]) -> list[ScoringUnit]:
    """Split Mandarin tokens into characters; keep other tokens whole."""
    units = []
    for idx, tok in enumerate(tokens):
        lang = classify_token_language(tok)
        if lang == Lang.MANDARIN:
            units.extend(ScoringUnit(ch, Lang.MANDARIN, idx) for ch in tok)
        else:
            units.append(ScoringUnit(tok, lang, idx))
    return units


def align_units(ref: list[ScoringUnit], hyp: list[ScoringUnit]):
    """Minimal-cost alignment ops: (kind, ref_index, hyp_index).

    Backtrace ties prefer substitution over insertion over deletion.
    """
    R, H = len(ref), len(hyp)
    dist = [[0] * (H + 1) for _ in range(R + 1)]
    for i in range(1, R + 1):
        dist[i][0] = i
    for j in range(1, H + 1):
        dist[0][j] = j
    for i in range(1, R + 1):
        ri = ref[i - 1].text
        row = dist[i]
        prev = dist[i - 1]
        for j in range(1, H + 1):
            diag = prev[j - 1] + (0 if ri == hyp[j - 1].text else 1)
            row[j] = min(diag, row[j - 1] + 1, prev[j] + 1)

    ops = []
    i, j = R, H
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] \
                and ref[i - 1].text == hyp[j - 1].text:
            ops.append(("match", i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + 1:
            ops.append(("sub", i - 1, j - 1))
            i, j = i - 1, j - 1
        elif j > 0 and dist[i][j] == dist[i][j - 1] + 1:
            ops.append(("ins", None, j - 1))
            j -= 1
        else:
            ops.append(("del", i - 1, None))
            i -= 1
    ops.reverse()
    return ops


def edit_distance(ref: list[ScoringUnit], hyp: list[ScoringUnit]):
    """(substitutions, insertions, deletions) of the minimal alignment."""
    ops = align_units(ref, hyp)
    s = sum(1 for kind, _, _ in ops if kind == "sub")
    i = sum(1 for kind, _, _ in ops if kind == "ins")
    d = sum(1 for kind, _, _ in ops if kind == "del")
    return s, i, d


@dataclass
class MerReport:
    mer: float
    man_err: float
    eng_err: float
    substitutions: int
    insertions: int
    deletions: int
    ref_units: int
    man_ref_units: int
    eng_ref_units: int

    def lines(self) -> list[str]:
        return [
            f"MER {self.mer:.2f}",
            f"MAN_ERR {self.man_err:.2f}",
            f"ENG_ERR {self.eng_err:.2f}",
            f"S {self.substitutions} I {self.insertions} D {self.deletions}",
        ]

    def __str__(self):
        return "\n".join(self.lines())


def _rate(errors: int, denom: int) -> float:
    if denom == 0:
        return 0.0 if errors == 0 else math.inf
    return 100.0 * errors / denom


def mer_score(refs: dict[str, list[str]], hyps: dict[str, list[str]]) -> MerReport:
    """Corpus-level MER with a per-language breakdown.

    ``refs`` and ``hyps`` map utterance ids to token lists; language-ID tokens
    must already be stripped from the hypotheses. Substitutions and deletions
    are attributed to the reference unit's language, insertions to the
    inserted hypothesis unit's language.
    """
    missing = sorted(set(refs) - set(hyps))
    extra = sorted(set(hyps) - set(refs))
    if missing or extra:
        raise DataError(f"mer_score: utterance ids differ; missing from hyps: "
                        f"{missing[:10]}, extra in hyps: {extra[:10]}")
    totals = {"sub": 0, "ins": 0, "del": 0}
    per_lang_err = {Lang.MANDARIN: 0, Lang.ENGLISH: 0}
    per_lang_ref = {Lang.MANDARIN: 0, Lang.ENGLISH: 0}
    ref_units_total = 0
    for utt_id in refs:
        ref_units = tokenize_mixed(refs[utt_id])
        hyp_units = tokenize_mixed(hyps[utt_id])
        ref_units_total += len(ref_units)
        for unit in ref_units:
            if unit.lang in per_lang_ref:
                per_lang_ref[unit.lang] += 1
        for kind, ri, hi in align_units(ref_units, hyp_units):
            if kind == "match":
                continue
            totals[kind] += 1
            lang = hyp_units[hi].lang if kind == "ins" else ref_units[ri].lang
            if lang in per_lang_err:
                per_lang_err[lang] += 1
    errors = totals["sub"] + totals["ins"] + totals["del"]
    return MerReport(
        mer=_rate(errors, ref_units_total),
        man_err=_rate(per_lang_err[Lang.MANDARIN], per_lang_ref[Lang.MANDARIN]),
        eng_err=_rate(per_lang_err[Lang.ENGLISH], per_lang_ref[Lang.ENGLISH]),
        substitutions=totals["sub"],
        insertions=totals["ins"],
        deletions=totals["del"],
        ref_units=ref_units_total,
        man_ref_units=per_lang_ref[Lang.MANDARIN],
        eng_ref_units=per_lang_ref[Lang.ENGLISH],
    )
