import itertools
import math

import numpy as np
import pytest

from csrnnt.errors import DataError, DomainError
from csrnnt.lm import (END, START, UNK, NgramModel, RescoreConfig, RnnLm,
                       load_ngram, load_rnnlm, ngram_logprob, ngram_train,
                       rescore_nbest, rnnlm_logprob, rnnlm_train, save_ngram,
                       save_rnnlm)


def test_unigram_hand_counts_without_discount():
    # One sentence "a a b": counts a=2, b=1, </s>=1, 4 tokens total.
    model = ngram_train([["a", "a", "b"]], order=1, discount=0.0)
    assert model.conditional("a", ()) == pytest.approx(0.5)
    assert model.conditional("b", ()) == pytest.approx(0.25)
    assert model.conditional(END, ()) == pytest.approx(0.25)
    # Relative frequency among the words alone is 2/3 vs 1/3.
    pa, pb = model.conditional("a", ()), model.conditional("b", ())
    assert pa / (pa + pb) == pytest.approx(2.0 / 3.0)


def test_unseen_word_zero_without_discount_positive_with():
    corpus = [["a", "a", "b"]]
    plain = ngram_train(corpus, order=1, discount=0.0)
    assert plain.conditional("z", ()) == 0.0
    smoothed = ngram_train(corpus, order=1, discount=0.75)
    assert smoothed.conditional("z", ()) > 0.0


def test_order_defaults_to_four():
    model = ngram_train([["a", "b"]])
    assert model.order == 4


def test_logprob_empty_sequence_is_end_given_start():
    model = ngram_train([["a", "b"], ["a", "c"], []], order=2, discount=0.0)
    # <s> is followed by "a" twice and by </s> once.
    assert model.conditional(END, (START,)) == pytest.approx(1.0 / 3.0)
    assert ngram_logprob(model, []) == pytest.approx(math.log(1.0 / 3.0))
    smoothed = ngram_train([["a", "b"], ["a", "c"]], order=2, discount=0.75)
    expected = math.log(smoothed.conditional(END, (START,)))
    assert ngram_logprob(smoothed, []) == pytest.approx(expected)


def test_logprob_training_sentence_hand_computed():
    model = ngram_train([["a", "a", "b"]], order=1, discount=0.0)
    expected = math.log(0.5) + math.log(0.5) + math.log(0.25) + math.log(0.25)
    assert ngram_logprob(model, ["a", "a", "b"]) == pytest.approx(expected)


def test_bigram_hand_counts_without_discount():
    # Sentences: "a b", "a c", "a b". p(b|a) = 2/3, p(c|a) = 1/3.
    model = ngram_train([["a", "b"], ["a", "c"], ["a", "b"]], order=2, discount=0.0)
    assert model.conditional("b", ("a",)) == pytest.approx(2.0 / 3.0)
    assert model.conditional("c", ("a",)) == pytest.approx(1.0 / 3.0)
    assert model.conditional("a", (START,)) == pytest.approx(1.0)
    assert model.conditional(END, ("b",)) == pytest.approx(1.0)


def test_conditionals_never_exceed_one():
    corpus = [["a", "b", "a"], ["b", "b", "c"], ["c", "a"]]
    model = ngram_train(corpus, order=3, discount=0.75)
    for ctx, counter, _ in model.contexts():
        for w in list(counter) + ["zzz"]:
            assert 0.0 <= model.conditional(w, ctx) <= 1.0 + 1e-12


def test_prefix_logprob_monotone_without_end_term():
    model = ngram_train([["a", "b", "c"], ["a", "c"]], order=2, discount=0.75)
    seq = ["a", "b", "c", "a", "zzz"]
    prev = 0.0
    ctx = (START,)
    for tok in seq:
        p = model.conditional(tok, ctx)
        total = prev + math.log(p)
        assert total <= prev
        prev = total
        ctx = (tok if tok in model._vocab_set else UNK,)


def test_context_probabilities_sum_to_one():
    corpus = [["a", "b", "a"], ["b", "c", "a"], ["a", "a"]]
    for discount in (0.0, 0.75):
        model = ngram_train(corpus, order=3, discount=discount)
        for ctx, _, _ in model.contexts():
            total = sum(model.conditional(w, ctx) for w in model.vocab)
            assert abs(total - 1.0) <= 1e-9, (discount, ctx, total)


def test_logprob_always_finite_with_discount():
    model = ngram_train([["a", "b"], ["b", "c"]], order=4, discount=0.75)
    for seq in ([], ["a"], ["zzz"], ["a", "zzz", "b", "qqq"], ["c", "c", "c"]):
        assert math.isfinite(ngram_logprob(model, seq))


def test_empty_corpus_and_bad_order():
    with pytest.raises(DataError):
        ngram_train([[]], order=2)
    with pytest.raises(DomainError):
        NgramModel(0)


def test_arpa_file_roundtrip(tmp_path):
    corpus = [["a", "b", "a", "c"], ["b", "c"], ["a", "b", "b"]]
    for discount in (0.75, 0.0):
        model = ngram_train(corpus, order=3, discount=discount)
        path = tmp_path / f"lm_{discount}.arpa"
        save_ngram(model, path)
        loaded = load_ngram(path)
        assert loaded.order == 3
        sequences = [["a", "b"], ["b", "c", "a"], [], ["a", "a", "a"], ["zzz", "b"]]
        for seq in sequences:
            expected = ngram_logprob(model, seq)
            got = loaded.logprob(seq)
            if math.isfinite(expected):
                assert got == pytest.approx(expected, abs=1e-10), (discount, seq)
            else:
                assert got == -math.inf


def test_arpa_header_format(tmp_path):
    model = ngram_train([["a", "b"]], order=2, discount=0.75)
    path = tmp_path / "lm.arpa"
    save_ngram(model, path)
    first = path.read_text(encoding="utf-8").splitlines()[0]
    assert first.startswith("csrnnt-arpa-v1 order=2 discount=0.75")


# -- recurrent LM -------------------------------------------------------------


def test_zero_weight_rnnlm_is_uniform():
    vocab = [START, UNK, "a", "b", "c"]
    lm = RnnLm(vocab, emb_dim=4, hidden_dim=5, rng=None)
    for seq in (["a"], ["a", "b"], ["c", "c", "a", "b"]):
        expected = -len(seq) * math.log(len(vocab))
        assert rnnlm_logprob(lm, seq) == pytest.approx(expected, abs=1e-12)


def test_rnnlm_overfits_one_sentence():
    sentence = ["a", "b", "c", "a"]
    lm = rnnlm_train([sentence], emb_dim=8, hidden_dim=16, epochs=150,
                     lr=0.05, seed=0)
    per_token = rnnlm_logprob(lm, sentence) / len(sentence)
    assert math.exp(-per_token) < 1.5


def test_rnnlm_deterministic():
    lm = rnnlm_train([["a", "b"], ["b", "a"]], epochs=2, seed=1)
    x = rnnlm_logprob(lm, ["a", "b", "a"])
    y = rnnlm_logprob(lm, ["a", "b", "a"])
    assert x == y


def test_rnnlm_oov_maps_to_unk():
    lm = rnnlm_train([["a", "b"]], epochs=1, seed=2)
    assert rnnlm_logprob(lm, ["zzz"]) == rnnlm_logprob(lm, [UNK])


def test_rnnlm_checkpoint_roundtrip(tmp_path):
    lm = rnnlm_train([["a", "b", "c"], ["c", "a"]], epochs=3, seed=3)
    path = tmp_path / "lm.cslm"
    save_rnnlm(lm, path)
    assert path.read_bytes()[:4] == b"CSLM"
    loaded = load_rnnlm(path)
    seq = ["a", "c", "b"]
    # float32 storage: compare after quantizing the trained model the same way.
    for name, param in lm.named_params().items():
        np.testing.assert_array_equal(loaded.named_params()[name],
                                      param.astype(np.float32))
    assert loaded.logprob(seq) == loaded.logprob(seq)


# -- rescoring ----------------------------------------------------------------


class FixedLm:
    def __init__(self, table):
        self.table = table

    def logprob(self, tokens):
        return self.table[tuple(tokens)]


def test_rescore_zero_weight_is_identity():
    hyps = [(-1.0, ["a"]), (-2.0, ["b"]), (-3.0, ["c"])]
    lm = FixedLm({("a",): -100.0, ("b",): 0.0, ("c",): 0.0})
    out = rescore_nbest(hyps, lm, RescoreConfig(lm_weight=0.0, length_penalty=0.0))
    assert [tokens for _, _, tokens in out] == [["a"], ["b"], ["c"]]
    assert [acoustic for _, acoustic, _ in out] == [-1.0, -2.0, -3.0]


def test_rescore_promotes_lm_favored_hypothesis():
    # combined = acoustic + 0.5 * lm: a -> -1 + 0.5*-8 = -5; b -> -1.5 + 0.5*-1 = -2
    hyps = [(-1.0, ["a"]), (-1.5, ["b"])]
    lm = FixedLm({("a",): -8.0, ("b",): -1.0})
    out = rescore_nbest(hyps, lm, RescoreConfig(lm_weight=0.5))
    assert out[0][2] == ["b"]
    assert out[0][0] == pytest.approx(-2.0)
    assert out[1][0] == pytest.approx(-5.0)


def test_rescore_ties_keep_original_rank():
    hyps = [(-1.0, ["a"]), (-1.0, ["b"]), (-1.0, ["c"])]
    lm = FixedLm({("a",): -2.0, ("b",): -2.0, ("c",): -2.0})
    out = rescore_nbest(hyps, lm, RescoreConfig(lm_weight=1.0))
    assert [tokens for _, _, tokens in out] == [["a"], ["b"], ["c"]]


def test_rescore_length_penalty_and_nbest_cut():
    hyps = [(-1.0, ["a", "a", "a"]), (-1.0, ["b"]), (-0.1, ["c"])]
    lm = FixedLm({("a", "a", "a"): 0.0, ("b",): 0.0, ("c",): 0.0})
    out = rescore_nbest(hyps, lm, RescoreConfig(lm_weight=0.0, length_penalty=0.5,
                                                nbest=2))
    assert len(out) == 2  # the third hypothesis is beyond N
    assert out[0][2] == ["a", "a", "a"]  # 3 tokens * 0.5 beats 1 * 0.5


def test_rescore_default_nbest_is_35():
    assert RescoreConfig().nbest == 35


def test_rescore_empty_is_error():
    with pytest.raises(DataError):
        rescore_nbest([], FixedLm({}), RescoreConfig())
