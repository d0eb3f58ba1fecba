import math

import pytest
from hypothesis import given, strategies as st

from csrnnt.errors import DataError
from csrnnt.metrics import (MerReport, ScoringUnit, align_units, edit_distance,
                            mer_score, tokenize_mixed)
from csrnnt.vocab import Lang


def units(*texts):
    return tokenize_mixed(list(texts))


def test_tokenize_mixed_splits_mandarin():
    out = tokenize_mixed(["我去", "school"])
    assert [(u.text, u.lang) for u in out] == [
        ("我", Lang.MANDARIN), ("去", Lang.MANDARIN), ("school", Lang.ENGLISH)]
    assert [u.source for u in out] == [0, 0, 1]


def test_tokenize_mixed_english_unchanged():
    out = tokenize_mixed(["all", "english", "here"])
    assert [u.text for u in out] == ["all", "english", "here"]
    assert all(u.lang == Lang.ENGLISH for u in out)


def test_tokenize_mixed_empty():
    assert tokenize_mixed([]) == []


def test_tokenize_mixed_neutral_whole():
    out = tokenize_mixed(["123", "我"])
    assert [(u.text, u.lang) for u in out] == [
        ("123", Lang.NEUTRAL), ("我", Lang.MANDARIN)]


def test_edit_distance_identical():
    assert edit_distance(units("我", "去", "school"), units("我", "去", "school")) \
        == (0, 0, 0)


def test_edit_distance_one_deletion():
    assert edit_distance(units("我去", "school"), units("我", "school")) == (0, 0, 1)


def test_edit_distance_empty_ref():
    assert edit_distance([], units("a", "b", "c")) == (0, 3, 0)
    assert edit_distance(units("a", "b"), []) == (0, 0, 2)


def test_edit_distance_substitution_preferred_on_ties():
    ops = align_units(units("a", "b"), units("c"))
    kinds = [k for k, _, _ in ops]
    assert kinds.count("sub") == 1
    assert kinds.count("del") == 1
    assert kinds.count("ins") == 0


def test_edit_distance_symmetry_swaps_ins_del():
    a = units("我", "like", "雨")
    b = units("我", "love", "the", "雨")
    s1, i1, d1 = edit_distance(a, b)
    s2, i2, d2 = edit_distance(b, a)
    assert s1 + i1 + d1 == s2 + i2 + d2
    assert (i1, d1) == (d2, i2)


@given(st.lists(st.sampled_from(["我", "go", "好", "stop", "雨"]), max_size=8),
       st.lists(st.sampled_from(["我", "go", "好", "stop", "雨"]), max_size=8),
       st.lists(st.sampled_from(["我", "go", "好", "stop", "雨"]), max_size=8))
def test_edit_distance_triangle_inequality(xs, ys, zs):
    a, b, c = tokenize_mixed(xs), tokenize_mixed(ys), tokenize_mixed(zs)
    ab = sum(edit_distance(a, b))
    bc = sum(edit_distance(b, c))
    ac = sum(edit_distance(a, c))
    assert ac <= ab + bc


def test_mer_perfect_is_zero():
    refs = {"u1": ["我", "like", "雨"], "u2": ["go", "home"]}
    report = mer_score(refs, dict(refs))
    assert report.mer == 0.0
    assert (report.substitutions, report.insertions, report.deletions) == (0, 0, 0)


def test_mer_single_deletion_hand_value():
    refs = {"u1": ["我去", "school"]}  # 3 scoring units
    hyps = {"u1": ["我", "school"]}
    report = mer_score(refs, hyps)
    assert report.mer == pytest.approx(100.0 / 3.0)
    assert report.deletions == 1
    assert "MER 33.33" in str(report)


def test_mer_breakdown_by_language():
    # Reference units: 我(man), 去(man), go(eng), home(eng).
    refs = {"u": ["我去", "go", "home"]}
    hyps = {"u": ["我去", "go", "out"]}  # substitute an English word
    report = mer_score(refs, hyps)
    assert report.man_err == 0.0
    assert report.eng_err == pytest.approx(50.0)
    assert report.mer == pytest.approx(25.0)


def test_mer_insertion_attributed_to_hyp_language():
    refs = {"u": ["go"]}
    hyps = {"u": ["go", "我"]}
    report = mer_score(refs, hyps)
    assert report.insertions == 1
    assert report.man_err == math.inf  # no Mandarin reference units
    assert report.eng_err == 0.0


def test_mer_id_mismatch_lists_ids():
    with pytest.raises(DataError, match="u2"):
        mer_score({"u1": ["a"], "u2": ["b"]}, {"u1": ["a"]})
    with pytest.raises(DataError, match="u3"):
        mer_score({"u1": ["a"]}, {"u1": ["a"], "u3": ["b"]})


def test_report_lines_format():
    report = MerReport(mer=12.5, man_err=10.0, eng_err=20.0, substitutions=3,
                       insertions=1, deletions=2, ref_units=48,
                       man_ref_units=30, eng_ref_units=18)
    assert report.lines() == ["MER 12.50", "MAN_ERR 10.00", "ENG_ERR 20.00",
                              "S 3 I 1 D 2"]


@given(st.lists(st.sampled_from(["我", "go", "好好", "stop"]), max_size=10))
def test_mer_self_is_zero(tokens):
    report = mer_score({"u": tokens}, {"u": list(tokens)})
    assert report.mer == 0.0
