"""Language models for N-best rescoring: count-based n-gram and a recurrent LM.

The n-gram model uses interpolated absolute discounting with a fixed discount
per order; setting the discount to 0 turns it into plain relative frequencies,
which is what the hand-computed tests use. The recurrent LM reuses the LSTM
kernels and scores a sequence as the sum of next-token log-probabilities.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import DataError, DomainError
from .transducer import load_checkpoint, save_checkpoint

START = "<s>"
END = "</s>"
UNK = "<unk>"

RNNLM_MAGIC = b"CSLM"


class NgramModel:
    """Backoff n-gram model with interpolated absolute discounting."""

    def __init__(self, order: int, discount: float = 0.75):
        if order < 1:
            raise DomainError("ngram order must be >= 1")
        if not 0.0 <= discount < 1.0:
            raise DomainError("discount must be in [0, 1)")
        self.order = order
        self.discount = discount
        # counts[k][(ctx...)] = Counter(next word); k = context length + 1
        self.counts = {k: {} for k in range(1, order + 1)}
        self.totals = {k: {} for k in range(1, order + 1)}
        self.vocab: list[str] = []
        self._vocab_set: set[str] = set()

    def _add(self, k, ctx, word):
        table = self.counts[k]
        if ctx not in table:
            table[ctx] = Counter()
        table[ctx][word] += 1
        self.totals[k][ctx] = self.totals[k].get(ctx, 0) + 1

    def fit(self, corpus: list[list[str]]):
        if not any(corpus):
            raise DataError("ngram_train: empty corpus")
        seen = set()
        for sentence in corpus:
            padded = [START] * (self.order - 1) + list(sentence) + [END]
            for i in range(self.order - 1, len(padded)):
                word = padded[i]
                seen.add(word)
                for k in range(1, self.order + 1):
                    ctx = tuple(padded[i - k + 1:i])
                    self._add(k, ctx, word)
        self.vocab = sorted(seen)
        if UNK not in seen:
            self.vocab.append(UNK)
        self._vocab_set = set(self.vocab)
        return self

    def conditional(self, word: str, context) -> float:
        """p(word | context) with interpolation down to a uniform floor."""
        if word not in self._vocab_set:
            word = UNK
        ctx = tuple(w if w in self._vocab_set or w == START else UNK
                    for w in context)[max(0, len(context) - self.order + 1):]
        return self._interp(word, ctx)

    def _interp(self, word, ctx):
        k = len(ctx) + 1
        counter = self.counts[k].get(ctx)
        if not counter:
            # Unobserved context: fall straight through to the shorter one.
            if k > 1:
                return self._interp(word, ctx[1:])
            return 1.0 / len(self.vocab) if self.discount > 0 else 0.0
        total = self.totals[k][ctx]
        d = self.discount
        head = max(counter.get(word, 0) - d, 0.0) / total
        backoff_mass = d * len(counter) / total
        if backoff_mass == 0.0:
            return head
        lower = self._interp(word, ctx[1:]) if k > 1 else 1.0 / len(self.vocab)
        return head + backoff_mass * lower

    def logprob(self, tokens: list[str]) -> float:
        """Sum of conditional log-probs including the end-of-sentence term."""
        ctx = (START,) * (self.order - 1)
        total = 0.0
        for tok in list(tokens) + [END]:
            p = self.conditional(tok, ctx)
            total += math.log(p) if p > 0 else -math.inf
            mapped = tok if tok in self._vocab_set else UNK
            ctx = (ctx + (mapped,))[1:] if self.order > 1 else ()
        return total

    def contexts(self):
        """Every observed (context, next-word counter, total) triple."""
        for k in range(1, self.order + 1):
            for ctx, counter in self.counts[k].items():
                yield ctx, counter, self.totals[k][ctx]


def ngram_train(corpus: list[list[str]], order: int = 4,
                discount: float = 0.75) -> NgramModel:
    return NgramModel(order, discount).fit(corpus)


def ngram_logprob(model, tokens: list[str]) -> float:
    return model.logprob(tokens)


# ---------------------------------------------------------------------------
# ARPA-style file: order | log10prob | tokens | log10backoff
# ---------------------------------------------------------------------------

_DUMMY_LOG10 = -99.0  # context-only entries (<s> grams) that are never predicted


def save_ngram(model: NgramModel, path):
    """Write precomputed interpolated probabilities with backoff weights."""
    bows = {}
    for ctx, counter, total in model.contexts():
        if len(ctx) >= 1:
            bows[ctx] = model.discount * len(counter) / total
    entries = {k: {} for k in range(1, model.order + 1)}
    for ctx, counter, _ in model.contexts():
        k = len(ctx) + 1
        for word in counter:
            entries[k][ctx + (word,)] = model.conditional(word, ctx)
    # Contexts that never occur as predicted grams still need a backoff line.
    for ctx in bows:
        if ctx not in entries.get(len(ctx), {}):
            entries.setdefault(len(ctx), {})[ctx] = None
    if model.discount > 0:
        entries[1][(UNK,)] = model.conditional(UNK, ())
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"csrnnt-arpa-v1 order={model.order} "
                f"discount={model.discount!r} vocab={len(model.vocab)}\n")
        for k in sorted(entries):
            for gram in sorted(entries[k]):
                p = entries[k][gram]
                log10p = _DUMMY_LOG10 if p is None or p <= 0 else math.log10(p)
                line = f"{k}\t{log10p!r}\t{' '.join(gram)}"
                bow = bows.get(gram)
                if bow is not None and k < model.order:
                    bow_log10 = math.log10(bow) if bow > 0 else _DUMMY_LOG10
                    line += f"\t{bow_log10!r}"
                f.write(line + "\n")


class NgramLookup:
    """Query interface over a saved ARPA-style file.

    An absent backoff entry means weight 1 (the context was never observed);
    the -99 sentinel marks an observed context with zero backoff mass, which
    only arises with discount 0 and makes unseen continuations impossible.
    """

    LN10 = math.log(10.0)

    def __init__(self, order, discount, probs, bows, vocab_size):
        self.order = order
        self.discount = discount
        self.probs = probs    # gram tuple -> log10 prob
        self.bows = bows      # gram tuple -> log10 backoff weight
        self.vocab_size = vocab_size

    def _known(self, word):
        return (word,) in self.probs or word == START

    def _lookup(self, word, ctx):
        gram = ctx + (word,)
        if gram in self.probs:
            return self.probs[gram] * self.LN10
        if not ctx:
            return -math.inf
        bow = self.bows.get(ctx)
        if bow is None:
            return self._lookup(word, ctx[1:])
        if bow == _DUMMY_LOG10:
            return -math.inf
        return bow * self.LN10 + self._lookup(word, ctx[1:])

    def conditional_log(self, word, ctx):
        if not self._known(word):
            word = UNK
        ctx = tuple(w if self._known(w) else UNK for w in ctx)
        return self._lookup(word, ctx[max(0, len(ctx) - self.order + 1):])

    def logprob(self, tokens: list[str]) -> float:
        ctx = (START,) * (self.order - 1)
        total = 0.0
        for tok in list(tokens) + [END]:
            total += self.conditional_log(tok, ctx)
            mapped = tok if self._known(tok) else UNK
            ctx = (ctx + (mapped,))[1:] if self.order > 1 else ()
        return total


def load_ngram(path) -> NgramLookup:
    probs = {}
    bows = {}
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split()
        if not header or header[0] != "csrnnt-arpa-v1":
            raise DataError(f"{path}: bad n-gram header")
        fields = dict(part.split("=", 1) for part in header[1:])
        order = int(fields["order"])
        discount = float(fields["discount"])
        vocab_size = int(fields["vocab"])
        for lineno, line in enumerate(f):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) not in (3, 4):
                raise DataError(f"{path}:{lineno + 2}: expected 3 or 4 fields")
            gram = tuple(parts[2].split(" "))
            if len(gram) != int(parts[0]):
                raise DataError(f"{path}:{lineno + 2}: order mismatch")
            if float(parts[1]) != _DUMMY_LOG10:
                probs[gram] = float(parts[1])
            if len(parts) == 4:
                bows[gram] = float(parts[3])
    return NgramLookup(order, discount, probs, bows, vocab_size)


# ---------------------------------------------------------------------------
# Recurrent LM
# ---------------------------------------------------------------------------


class RnnLm:
    """Single-layer LSTM language model over a closed token vocabulary."""

    def __init__(self, vocab: list[str], emb_dim: int = 32, hidden_dim: int = 64,
                 rng: np.random.Generator | None = None, dtype=np.float64):
        if START not in vocab or UNK not in vocab:
            raise DataError("RnnLm vocabulary must include <s> and <unk>")
        self.vocab = list(vocab)
        self.index = {w: i for i, w in enumerate(self.vocab)}
        self.emb_dim = emb_dim
        self.hidden_dim = hidden_dim
        V = len(self.vocab)
        if rng is None:
            self.embedding = np.zeros((V, emb_dim), dtype=dtype)
            self.lstm = nn.zero_lstm(emb_dim, hidden_dim, dtype)
            self.out_w = np.zeros((hidden_dim, V), dtype=dtype)
        else:
            self.embedding = nn.uniform_init(V, emb_dim, rng, dtype)
            self.lstm = nn.init_lstm(emb_dim, hidden_dim, rng, dtype)
            self.out_w = nn.uniform_init(hidden_dim, V, rng, dtype)
        self.out_b = np.zeros(V, dtype=dtype)

    def named_params(self):
        return {"embedding": self.embedding, "lstm.w": self.lstm.w,
                "lstm.b": self.lstm.b, "out_w": self.out_w, "out_b": self.out_b}

    def _ids(self, tokens):
        unk = self.index[UNK]
        return [self.index.get(t, unk) for t in tokens]

    def _log_probs(self, input_ids):
        x = np.asarray(self.embedding, dtype=np.float64)[input_ids]
        hidden, _, cache = nn.lstm_forward(self.lstm, x)
        logits = hidden @ np.asarray(self.out_w, dtype=np.float64) + self.out_b
        return nn.log_softmax(logits), hidden, cache

    def logprob(self, tokens: list[str]) -> float:
        """Sum of next-token log-probs; the input is <s> then the tokens."""
        if not tokens:
            return 0.0
        targets = self._ids(tokens)
        inputs = [self.index[START]] + targets[:-1]
        log_probs, _, _ = self._log_probs(inputs)
        return float(sum(log_probs[i, t] for i, t in enumerate(targets)))

    def step(self, tokens: list[str], lr: float = 0.01, state: nn.AdamState = None):
        """One Adam step on the summed negative log-likelihood of a sentence."""
        targets = self._ids(tokens)
        if not targets:
            return 0.0, state
        inputs = [self.index[START]] + targets[:-1]
        log_probs, hidden, cache = self._log_probs(inputs)
        loss = -float(sum(log_probs[i, t] for i, t in enumerate(targets)))
        dlogits = np.exp(log_probs)
        for i, t in enumerate(targets):
            dlogits[i, t] -= 1.0
        grads = {
            "out_w": hidden.T @ dlogits,
            "out_b": dlogits.sum(axis=0),
        }
        d_hidden = dlogits @ np.asarray(self.out_w, dtype=np.float64).T
        lstm_grads, d_x, _ = nn.lstm_backward(cache, d_hidden)
        grads["lstm.w"] = lstm_grads["w"]
        grads["lstm.b"] = lstm_grads["b"]
        d_emb = np.zeros_like(np.asarray(self.embedding, dtype=np.float64))
        for row, tok in enumerate(inputs):
            d_emb[tok] += d_x[row]
        grads["embedding"] = d_emb
        if state is None:
            state = nn.AdamState(lr=lr)
        nn.adam_step(state, self.named_params(), grads)
        return loss, state


def rnnlm_train(corpus: list[list[str]], emb_dim: int = 32, hidden_dim: int = 64,
                epochs: int = 5, lr: float = 0.01, seed: int = 0) -> RnnLm:
    if not any(corpus):
        raise DataError("rnnlm_train: empty corpus")
    tokens = sorted({t for sent in corpus for t in sent})
    vocab = [START, UNK] + [t for t in tokens if t not in (START, UNK)]
    rng = np.random.default_rng(seed)
    lm = RnnLm(vocab, emb_dim, hidden_dim, rng)
    state = nn.AdamState(lr=lr)
    for _ in range(epochs):
        for sent in corpus:
            if sent:
                _, state = lm.step(sent, state=state)
    return lm


def rnnlm_logprob(lm: RnnLm, tokens: list[str]) -> float:
    return lm.logprob(tokens)


def save_rnnlm(lm: RnnLm, path):
    meta = {"kind": "rnnlm", "vocab": lm.vocab,
            "emb_dim": lm.emb_dim, "hidden_dim": lm.hidden_dim}
    save_checkpoint(path, RNNLM_MAGIC, meta, lm.named_params())


def load_rnnlm(path) -> RnnLm:
    header, tensors = load_checkpoint(path, RNNLM_MAGIC)
    lm = RnnLm(header["vocab"], header["emb_dim"], header["hidden_dim"],
               rng=None, dtype=np.float32)
    for name, param in lm.named_params().items():
        param[...] = tensors[name]
    return lm


# ---------------------------------------------------------------------------
# Rescoring
# ---------------------------------------------------------------------------


@dataclass
class RescoreConfig:
    lm_weight: float = 0.3
    length_penalty: float = 0.0
    nbest: int = 35

    def __post_init__(self):
        if self.nbest < 1:
            raise DomainError("rescore nbest must be >= 1")


def rescore_nbest(hyps: list[tuple[float, list[str]]], lm,
                  config: RescoreConfig) -> list[tuple[float, float, list[str]]]:
    """Rerank (acoustic_log_prob, tokens) pairs with an LM.

    Returns (combined, acoustic, tokens) triples sorted by combined score,
    best first; equal scores keep the original rank order.
    """
    if not hyps:
        raise DataError("rescore_nbest: empty N-best list")
    scored = []
    for i, (acoustic, tokens) in enumerate(hyps[:config.nbest]):
        combined = acoustic + config.lm_weight * lm.logprob(tokens) \
            + config.length_penalty * len(tokens)
        scored.append((combined, i, acoustic, tokens))
    scored.sort(key=lambda e: (-e[0], e[1]))
    return [(combined, acoustic, tokens) for combined, _, acoustic, tokens in scored]
