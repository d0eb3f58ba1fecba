import pytest
from hypothesis import given, strategies as st

from csrnnt.bpe import BpeModel, bpe_learn
from csrnnt.errors import DataError, DomainError
from csrnnt.vocab import (BLANK_ID, CHN_ID, CHN_TAG, ENG_ID, ENG_TAG, Kind,
                          Lang, Vocabulary, build_vocab,
                          classify_token_language, detokenize,
                          insert_language_tags, strip_language_tags,
                          tag_tokens)


def test_classify_single_cjk():
    assert classify_token_language("我") == Lang.MANDARIN


def test_classify_ascii_word():
    assert classify_token_language("singing") == Lang.ENGLISH


def test_classify_digits_neutral():
    assert classify_token_language("123") == Lang.NEUTRAL


def test_classify_apostrophe_hyphen():
    assert classify_token_language("can't") == Lang.ENGLISH
    assert classify_token_language("spur-of-the-moment") == Lang.ENGLISH


def test_classify_mixed_has_cjk_wins():
    assert classify_token_language("abc我") == Lang.MANDARIN


def test_classify_empty_raises():
    with pytest.raises(DomainError):
        classify_token_language("")


def classified(tokens):
    return [(t, classify_token_language(t)) for t in tokens]


def test_tags_monolingual_one_leading_tag():
    out = insert_language_tags(classified("我 去 学校".split()))
    assert out == ["<chn>", "我", "去", "学校"]


def test_tags_at_each_switch():
    out = insert_language_tags(classified("我 喜欢 singing 和 dancing".split()))
    assert out == ["<chn>", "我", "喜欢", "<eng>", "singing", "<chn>", "和",
                   "<eng>", "dancing"]


def test_tags_empty_input():
    assert insert_language_tags([]) == []


def test_tags_neutral_transparent():
    out = insert_language_tags(classified("我 123 学校 456 go".split()))
    assert out == ["<chn>", "我", "123", "学校", "456", "<eng>", "go"]


def test_tags_idempotent_on_tagged_text():
    tokens = "我 喜欢 singing 和 dancing".split()
    once = tag_tokens(tokens)
    twice = tag_tokens(once)
    assert once == twice


def test_strip_recovers_input():
    tokens = "我 喜欢 singing 和 dancing".split()
    assert strip_language_tags(tag_tokens(tokens)) == tokens


@given(st.lists(st.sampled_from("我 你 好 go stop sing 7 42".split()), max_size=30))
def test_tag_count_equals_switches_plus_one(tokens):
    tagged = tag_tokens(tokens)
    n_tags = sum(1 for t in tagged if t in (CHN_TAG, ENG_TAG))
    langs = [classify_token_language(t) for t in tokens]
    non_neutral = [l for l in langs if l != Lang.NEUTRAL]
    switches = sum(1 for a, b in zip(non_neutral, non_neutral[1:]) if a != b)
    expected = switches + (1 if non_neutral else 0)
    assert n_tags == expected
    assert strip_language_tags(tagged) == tokens


def trivial_bpe():
    return BpeModel(merges=[], alphabet=set("go"))


def test_build_vocab_reserved_layout():
    vocab = build_vocab([["<chn>", "我", "<eng>", "go"]], trivial_bpe())
    assert vocab.surface(BLANK_ID) == "<blank>"
    assert vocab.surface(CHN_ID) == CHN_TAG
    assert vocab.surface(ENG_ID) == ENG_TAG
    assert vocab.kind(BLANK_ID) == Kind.BLANK
    surfaces = {vocab.surface(i) for i in range(len(vocab))}
    assert surfaces == {"<blank>", CHN_TAG, ENG_TAG, "我", "g", "o", "</w>"}
    assert vocab.lang(vocab.id_of("我")) == Lang.MANDARIN
    assert vocab.lang(vocab.id_of("g")) == Lang.ENGLISH


def test_build_vocab_empty_corpus():
    with pytest.raises(DataError):
        build_vocab([[]], trivial_bpe())


def test_build_vocab_reports_untaggable():
    with pytest.raises(DataError, match="123"):
        build_vocab([["<chn>", "我", "123"]], trivial_bpe())


def test_build_vocab_stable_ordering():
    corpus = [["<chn>", "你", "我", "<eng>", "ba", "ab"]]
    model = bpe_learn({"ba": 2, "ab": 2}, 0)
    v1 = build_vocab(corpus, model)
    v2 = build_vocab(list(reversed(corpus)), model)
    assert v1.to_lines() == v2.to_lines()
    man = [s.surface for s in v1.symbols if s.kind == Kind.MANDARIN_CHAR]
    assert man == sorted(man)


def test_vocab_save_load_roundtrip(tmp_path):
    vocab = build_vocab([["<chn>", "我", "<eng>", "go"]], trivial_bpe())
    path = tmp_path / "vocab.tsv"
    vocab.save(path)
    loaded = Vocabulary.load(path)
    assert loaded.to_lines() == vocab.to_lines()
    assert loaded.sha256() == vocab.sha256()


def test_detokenize_words():
    assert detokenize(["<chn>", "我", "去", "<eng>", "sch", "ool", "</w>"]) == \
        ["我", "去", "school"]
    assert detokenize(["go", "</w>", "股"]) == ["go", "股"]
    assert detokenize([]) == []
