"""Beam-search decoding with optional language-ID posterior re-weighting.

The search is breadth-first over frames. Within a frame, hypotheses may emit
up to max_symbols_per_frame labels before taking the blank that advances to
the next frame; hypotheses with identical emitted sequences are merged by
log-sum-exp at each frame boundary. Joint evaluations are batched across the
beam and prediction-network states are computed only for pruned survivors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import nn
from .errors import DataError, DomainError
from .transducer import TransducerModel, embed_with_language_constraint, encode, \
    prediction_start
from .vocab import BLANK_ID, CHN_ID, ENG_ID, Kind, Lang, Vocabulary, \
    strip_language_tags

LAMBDA_MODES = ("off", "fixed", "prob")


@dataclass
class DecodeConfig:
    beam_size: int = 8
    lambda_mode: str = "off"
    lam: float = 0.2
    max_symbols_per_frame: int = 5

    def __post_init__(self):
        if self.beam_size < 1:
            raise DomainError("beam_size must be >= 1")
        if self.lambda_mode not in LAMBDA_MODES:
            raise DomainError(f"lambda_mode must be one of {LAMBDA_MODES}")
        if not math.isfinite(self.lam) or self.lam < 0:
            raise DomainError("lambda must be finite and >= 0")
        if self.max_symbols_per_frame < 1:
            raise DomainError("max_symbols_per_frame must be >= 1")


@dataclass
class Hypothesis:
    """One beam entry: emitted prefix, score, and prediction-network state."""

    tokens: tuple[int, ...]
    log_prob: float
    pred_out: np.ndarray = None
    pred_state: list = None
    current_language: Lang = Lang.NEUTRAL
    lid_posterior: float = 0.0


def language_boost_mask(vocab: Vocabulary, language: Lang) -> np.ndarray:
    """1.0 for boostable symbols of the language; blank and IDs stay 0."""
    mask = np.zeros(len(vocab))
    for i in range(len(vocab)):
        if vocab.kind(i) in (Kind.MANDARIN_CHAR, Kind.ENGLISH_WORDPIECE) \
                and vocab.lang(i) == language:
            mask[i] = 1.0
    return mask


def _boost_and_renorm(log_probs: np.ndarray, mask: np.ndarray,
                      lam: float) -> np.ndarray:
    boosted = log_probs + math.log1p(lam) * mask
    shift = boosted.max()
    return boosted - (shift + math.log(np.exp(boosted - shift).sum()))


def reweight_posteriors(log_probs: np.ndarray, current_language: Lang,
                        config: DecodeConfig, vocab: Vocabulary,
                        recorded_posterior: float = 0.0) -> np.ndarray:
    """Boost same-language symbols by (1 + lambda) and renormalize.

    Blank and language-ID symbols are never boosted. In "prob" mode the
    effective lambda is the posterior recorded at the most recent language-ID
    emission. With lambda 0, mode "off", or a Neutral current language the
    input is returned unchanged (bit-identical).
    """
    log_probs = np.asarray(log_probs, dtype=np.float64)
    if log_probs.shape != (len(vocab),):
        raise DomainError(f"log_probs length {log_probs.shape} does not match "
                          f"vocabulary size {len(vocab)}")
    total = np.exp(log_probs).sum()
    if not np.isfinite(total) or abs(total - 1.0) > 1e-6:
        raise DomainError(f"reweight_posteriors: input is not a distribution "
                          f"(exp-sum {total})")
    if config.lambda_mode == "off" or current_language == Lang.NEUTRAL:
        return log_probs
    lam = config.lam if config.lambda_mode == "fixed" else recorded_posterior
    if lam == 0.0:
        return log_probs
    return _boost_and_renorm(log_probs, language_boost_mask(vocab, current_language),
                             lam)


def _merge(pool: dict, hyp: Hypothesis):
    existing = pool.get(hyp.tokens)
    if existing is None:
        pool[hyp.tokens] = hyp
    elif hyp.log_prob > existing.log_prob:
        pool[hyp.tokens] = replace(hyp, log_prob=float(np.logaddexp(
            existing.log_prob, hyp.log_prob)))
    else:
        existing.log_prob = float(np.logaddexp(existing.log_prob, hyp.log_prob))


def _sorted_hyps(hyps) -> list[Hypothesis]:
    return sorted(hyps, key=lambda h: (-h.log_prob, h.tokens))


def _materialize(model: TransducerModel, survivors, emb_all: np.ndarray):
    """Batched prediction-network step for pruned candidate expansions."""
    x = emb_all[[cand[3] for cand in survivors]]
    layer_outputs = []
    for li, layer in enumerate(model.prediction):
        H = np.stack([cand[2].pred_state[li][0] for cand in survivors])
        C = np.stack([cand[2].pred_state[li][1] for cand in survivors])
        H, C = nn.lstm_step_batch(layer, x, (H, C))
        layer_outputs.append((H, C))
        x = H
    hyps = []
    for b, (score, tokens, parent, k, step_logp) in enumerate(survivors):
        lang = parent.current_language
        posterior = parent.lid_posterior
        if k == CHN_ID:
            lang, posterior = Lang.MANDARIN, math.exp(step_logp)
        elif k == ENG_ID:
            lang, posterior = Lang.ENGLISH, math.exp(step_logp)
        state = [(h_arr[b], c_arr[b]) for h_arr, c_arr in layer_outputs]
        hyps.append(Hypothesis(tokens=tokens, log_prob=score, pred_out=x[b],
                               pred_state=state, current_language=lang,
                               lid_posterior=posterior))
    return hyps


def beam_search_decode(model: TransducerModel, features: np.ndarray,
                       config: DecodeConfig, vocab: Vocabulary) -> list[Hypothesis]:
    """N-best decoding; returns up to beam_size hypotheses, best first."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] == 0:
        return [Hypothesis(tokens=(), log_prob=0.0)]
    c = model.config
    enc_out = encode(model, features)
    w1 = np.asarray(model.joint_w1, dtype=np.float64)
    w2 = np.asarray(model.out_w, dtype=np.float64)
    b1 = np.asarray(model.joint_b1, dtype=np.float64)
    b2 = np.asarray(model.out_b, dtype=np.float64)
    enc_proj = enc_out @ w1[:c.enc_dim]
    w1_pred = w1[c.enc_dim:]
    masks = {Lang.MANDARIN: language_boost_mask(vocab, Lang.MANDARIN),
             Lang.ENGLISH: language_boost_mask(vocab, Lang.ENGLISH)}
    emb_all = np.stack([embed_with_language_constraint(model, k)
                        for k in range(len(vocab))])
    n_labels = len(vocab) - 1

    def reweight_row(row, hyp):
        if config.lambda_mode == "off" or hyp.current_language == Lang.NEUTRAL:
            return row
        lam = config.lam if config.lambda_mode == "fixed" else hyp.lid_posterior
        if lam == 0.0:
            return row
        return _boost_and_renorm(row, masks[hyp.current_language], lam)

    start_out, start_state = prediction_start(model)
    kept = [Hypothesis(tokens=(), log_prob=0.0, pred_out=start_out,
                       pred_state=start_state)]

    for t in range(enc_out.shape[0]):
        finished: dict[tuple, Hypothesis] = {}
        frontier = kept
        for level in range(config.max_symbols_per_frame + 1):
            pred_stack = np.stack([h.pred_out for h in frontier])
            hidden = np.tanh(enc_proj[t] + pred_stack @ w1_pred + b1)
            logits = hidden @ w2 + b2
            shift = logits.max(axis=1, keepdims=True)
            dists = logits - (shift + np.log(np.exp(logits - shift)
                                             .sum(axis=1, keepdims=True)))
            rows = []
            for b, hyp in enumerate(frontier):
                row = reweight_row(dists[b], hyp)
                rows.append(row)
                _merge(finished, replace(
                    hyp, log_prob=float(hyp.log_prob + row[BLANK_ID])))
            if level == config.max_symbols_per_frame:
                break
            candidates = []
            for b, hyp in enumerate(frontier):
                row = rows[b]
                scores = hyp.log_prob + row
                if n_labels > config.beam_size:
                    top = np.argpartition(-scores[1:],
                                          config.beam_size - 1)[:config.beam_size] + 1
                else:
                    top = range(1, len(vocab))
                for k in top:
                    k = int(k)
                    candidates.append((float(scores[k]), hyp.tokens + (k,),
                                       hyp, k, float(row[k])))
            candidates.sort(key=lambda cand: (-cand[0], cand[1]))
            frontier = _materialize(model, candidates[:config.beam_size], emb_all)
        kept = _sorted_hyps(finished.values())[:config.beam_size]
    return kept


def collapse_alignment(alignment, blank: int = BLANK_ID) -> list:
    """Remove blanks from an alignment; labels keep their order and repeats."""
    return [a for a in alignment if a != blank]


def strip_language_ids(tokens: list[str]) -> list[str]:
    """Drop <chn>/<eng> from a surface token sequence."""
    return strip_language_tags(tokens)


# ---------------------------------------------------------------------------
# N-best file format: utt_id<TAB>rank<TAB>log_prob<TAB>tokens
# ---------------------------------------------------------------------------


def write_nbest(path, nbest: dict[str, list[Hypothesis]], vocab: Vocabulary):
    with open(path, "w", encoding="utf-8") as f:
        for utt_id, hyps in nbest.items():
            for rank, hyp in enumerate(hyps, start=1):
                text = " ".join(vocab.surface(i) for i in hyp.tokens)
                f.write(f"{utt_id}\t{rank}\t{float(hyp.log_prob)!r}\t{text}\n")


def read_nbest(path) -> dict[str, list[tuple[float, list[str]]]]:
    """Read an N-best file into utt_id -> [(log_prob, tokens), ...] in rank order."""
    out: dict[str, list[tuple[float, list[str]]]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno + 1}: expected 4 tab-separated fields")
            utt_id, rank, log_prob, text = parts
            hyps = out.setdefault(utt_id, [])
            if int(rank) != len(hyps) + 1:
                raise DataError(f"{path}:{lineno + 1}: rank {rank} out of order")
            hyps.append((float(log_prob), text.split() if text else []))
    return out
