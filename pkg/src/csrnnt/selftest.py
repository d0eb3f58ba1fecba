"""Built-in oracle suites runnable from the CLI without test infrastructure.

Each check recomputes expected values through an independent route (explicit
enumeration, finite differences, hand arithmetic) and compares against the
production code path.
"""

from __future__ import annotations

import math

import numpy as np

from . import nn
from .decoder import DecodeConfig, beam_search_decode, reweight_posteriors
from .lm import ngram_train
from .synth import perturb_features
from .transducer import (ModelConfig, enumerate_alignments_oracle, joint_logits,
                         model_forward, model_from_vocab, prediction_start,
                         prediction_step, rnnt_loss)
from .vocab import Kind, Lang, Symbol, Vocabulary


class SelfTestFailure(AssertionError):
    pass


def _require(cond, message):
    if not cond:
        raise SelfTestFailure(message)


def _tiny_vocab(n_mandarin=2, n_english=1):
    symbols = [
        Symbol("<blank>", Lang.NEUTRAL, Kind.BLANK),
        Symbol("<chn>", Lang.MANDARIN, Kind.LANGUAGE_ID),
        Symbol("<eng>", Lang.ENGLISH, Kind.LANGUAGE_ID),
    ]
    for i in range(n_mandarin):
        symbols.append(Symbol(chr(0x4E00 + i), Lang.MANDARIN, Kind.MANDARIN_CHAR))
    for i in range(n_english):
        symbols.append(Symbol(f"w{i}</w>", Lang.ENGLISH, Kind.ENGLISH_WORDPIECE))
    return Vocabulary(symbols)


def check_loss_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(50):
        T = int(rng.integers(1, 5))
        U = int(rng.integers(0, 4))
        V = int(rng.integers(2, 6))
        lp = nn.log_softmax(rng.normal(size=(T, U + 1, V)))
        targets = rng.integers(1, V, size=U)
        loss, _ = rnnt_loss(lp, targets)
        oracle = enumerate_alignments_oracle(lp, targets)
        _require(abs(loss - oracle) <= 1e-10,
                 f"loss {loss} vs enumeration {oracle} at T={T} U={U}")


def check_loss_gradient_finite_differences():
    rng = np.random.default_rng(1)
    lp = nn.log_softmax(rng.normal(size=(3, 3, 4)))
    targets = [1, 3]
    _, grad = rnnt_loss(lp, targets)
    eps = 1e-5
    flat = lp.reshape(-1)
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + eps
        up = rnnt_loss(lp, targets)[0]
        flat[idx] = orig - eps
        down = rnnt_loss(lp, targets)[0]
        flat[idx] = orig
        numeric = (up - down) / (2 * eps)
        analytic = grad.reshape(-1)[idx]
        denom = max(abs(analytic), abs(numeric), 1e-4)
        _require(abs(analytic - numeric) / denom <= 1e-6,
                 f"node gradient mismatch at flat index {idx}")


def check_model_gradients_finite_differences():
    vocab = _tiny_vocab()
    rng = np.random.default_rng(2)
    config = ModelConfig(feat_dim=3, vocab_size=len(vocab), enc_layers=1,
                         enc_dim=4, pred_layers=1, pred_dim=4, joint_dim=4,
                         emb_dim=3, lid_dim=2)
    model = model_from_vocab(config, vocab, rng)
    feats = rng.normal(size=(3, 3))
    targets = [3, 5]
    result = model_forward(model, feats, targets)
    eps = 1e-5
    for name, param in model.named_params().items():
        flat = param.reshape(-1)
        for idx in range(0, flat.size, max(1, flat.size // 8)):
            orig = flat[idx]
            flat[idx] = orig + eps
            up = model_forward(model, feats, targets).loss
            flat[idx] = orig - eps
            down = model_forward(model, feats, targets).loss
            flat[idx] = orig
            numeric = (up - down) / (2 * eps)
            analytic = result.grads[name].reshape(-1)[idx]
            denom = max(abs(analytic), abs(numeric), 1e-3)
            _require(abs(analytic - numeric) / denom <= 1e-4,
                     f"{name}[{idx}]: analytic {analytic} vs numeric {numeric}")


def check_beam_search_matches_exhaustive():
    vocab = _tiny_vocab(n_mandarin=0, n_english=0)
    for seed in range(3):
        rng = np.random.default_rng(10 + seed)
        config = ModelConfig(feat_dim=3, vocab_size=len(vocab), enc_layers=1,
                             enc_dim=4, pred_layers=1, pred_dim=4, joint_dim=4,
                             emb_dim=3, lid_dim=2)
        model = model_from_vocab(config, vocab, rng)
        features = rng.normal(size=(3, 3))
        decode_config = DecodeConfig(beam_size=64, max_symbols_per_frame=1)
        hyps = beam_search_decode(model, features, decode_config, vocab)

        from .transducer import encode
        enc = encode(model, features)
        totals = {}

        def walk(t, tokens, score, out, state):
            if t == enc.shape[0]:
                key = tuple(tokens)
                if key in totals:
                    totals[key] = np.logaddexp(totals[key], score)
                else:
                    totals[key] = score
                return
            dist = nn.log_softmax(joint_logits(model, enc[t], out))
            walk(t + 1, tokens, score + dist[0], out, state)
            for k in range(1, len(vocab)):
                out2, state2 = prediction_step(model, k, state)
                dist2 = nn.log_softmax(joint_logits(model, enc[t], out2))
                walk(t + 1, tokens + [k], score + dist[k] + dist2[0], out2, state2)

        out0, state0 = prediction_start(model)
        walk(0, [], 0.0, out0, state0)
        best = max(totals.items(), key=lambda kv: (kv[1], [-x for x in kv[0]]))
        _require(hyps[0].tokens == best[0],
                 f"beam top-1 {hyps[0].tokens} vs exhaustive {best[0]}")
        _require(abs(hyps[0].log_prob - best[1]) <= 1e-10,
                 f"beam score {hyps[0].log_prob} vs exhaustive {best[1]}")


def check_reweighting_hand_value():
    vocab = _tiny_vocab(n_mandarin=1, n_english=1)
    lp = np.log(np.full(len(vocab), 1.0 / len(vocab)))
    config = DecodeConfig(lambda_mode="fixed", lam=0.2)
    out = reweight_posteriors(lp, Lang.ENGLISH, config, vocab)
    probs = np.exp(out)
    _require(abs(probs.sum() - 1.0) <= 1e-12, "reweighted output not normalized")
    boosted = probs[vocab.id_of("w0</w>")]
    expected = (0.2 * 1.2) / (0.2 * 1.2 + 4 * 0.2)
    _require(abs(boosted - expected) <= 1e-12,
             f"boosted prob {boosted} vs hand value {expected}")


def check_ngram_hand_counts():
    model = ngram_train([["a", "a", "b"]], order=1, discount=0.0)
    _require(abs(model.conditional("a", ()) - 0.5) <= 1e-15, "p(a) != 2/4")
    _require(abs(model.conditional("b", ()) - 0.25) <= 1e-15, "p(b) != 1/4")
    smoothed = ngram_train([["a", "b", "a"], ["b", "c"]], order=2, discount=0.75)
    for ctx, _, _ in smoothed.contexts():
        total = sum(smoothed.conditional(w, ctx) for w in smoothed.vocab)
        _require(abs(total - 1.0) <= 1e-9, f"context {ctx} sums to {total}")


def check_kernels():
    out = nn.log_softmax(np.array([1000.0, 1000.0]))
    _require(abs(np.exp(out).sum() - 1.0) <= 1e-12, "log_softmax not normalized")
    params = nn.zero_lstm(3, 4)
    outputs, _, _ = nn.lstm_forward(params, np.ones((5, 3)))
    _require(np.all(outputs == 0.0), "zero-parameter LSTM must output zeros")
    ramp = np.arange(11.0)[:, None]
    out = perturb_features(ramp, 1.1)
    _require(out.shape[0] == 10, "perturb 1.1 on 11 frames must give 10")
    _require(np.array_equal(perturb_features(ramp, 1.0), ramp),
             "perturb at rate 1.0 must be identity")


ALL_CHECKS = [
    ("loss-vs-enumeration", check_loss_matches_enumeration),
    ("loss-gradient-fd", check_loss_gradient_finite_differences),
    ("model-gradient-fd", check_model_gradients_finite_differences),
    ("beam-vs-exhaustive", check_beam_search_matches_exhaustive),
    ("reweight-hand-value", check_reweighting_hand_value),
    ("ngram-hand-counts", check_ngram_hand_counts),
    ("kernels", check_kernels),
]


def run_all(log=print) -> bool:
    ok = True
    for name, fn in ALL_CHECKS:
        try:
            fn()
        except Exception as e:
            ok = False
            log(f"FAIL {name}: {e}")
        else:
            log(f"PASS {name}")
    return ok
