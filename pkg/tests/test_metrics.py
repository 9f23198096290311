import functools
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segspell.metrics import align, format_report, ler, score_corpus


@functools.lru_cache(maxsize=None)
def edit_distance_oracle(ref, hyp):
    """Independent memoized recursion; no shared code with align()."""
    if not ref:
        return len(hyp)
    if not hyp:
        return len(ref)
    return min(edit_distance_oracle(ref[1:], hyp[1:]) + (ref[0] != hyp[0]),
               edit_distance_oracle(ref[1:], hyp) + 1,
               edit_distance_oracle(ref, hyp[1:]) + 1)


def test_identity():
    dec = align("TULIP", "TULIP")
    assert (dec.deletions, dec.substitutions, dec.insertions) == (0, 0, 0)
    assert ler(dec) == 0.0


def test_road_vs_a():
    # brute-force verified: the only optimal alignments keep the A,
    # deleting R, O, D
    assert edit_distance_oracle("ROAD", "A") == 3
    dec = align("ROAD", "A")
    assert (dec.deletions, dec.substitutions, dec.insertions) == (3, 0, 0)


def test_empty_ref_insertions():
    dec = align("", "AB")
    assert (dec.deletions, dec.substitutions, dec.insertions) == (0, 0, 2)


def test_counts_consistent_with_alignment():
    dec = align("ABCDE", "AXCE")
    assert dec.matches + dec.substitutions + dec.deletions == 5
    assert dec.matches + dec.substitutions + dec.insertions == 4
    assert dec.total_errors == edit_distance_oracle("ABCDE", "AXCE")


def test_backtrace_preference_substitution_over_indel():
    # distance 1 either way; the stated preference picks a substitution
    dec = align("AB", "AC")
    assert dec.substitutions == 1 and dec.deletions == 0 and dec.insertions == 0


def test_exhaustive_short_sweep_against_oracle():
    syms = "ABC"
    strings = [""]
    for n in range(1, 5):
        strings += ["".join(p) for p in itertools.product(syms, repeat=n)]
    assert len(strings) == 121
    for ref in strings:
        for hyp in strings:
            assert align(ref, hyp).total_errors == edit_distance_oracle(ref, hyp)


def test_ler_formula():
    from segspell.metrics import ErrorDecomposition
    dec = ErrorDecomposition(2, 1, 1, 10)
    assert ler(dec) == 40.0
    with pytest.raises(ValueError):
        ler(ErrorDecomposition(0, 0, 0, 0))


def test_corpus_pooling_not_mean_of_rates():
    # one long perfect word and one short wrong word: pooled LER differs
    # from the average of per-word LERs
    pairs = [("AAAAAAAA", "AAAAAAAA"), ("B", "C")]
    scores = score_corpus(pairs)
    per_word_mean = np.mean([w["ler"] for w in scores["words"]])
    assert scores["ler"] == pytest.approx(100.0 / 9)
    assert per_word_mean == pytest.approx(50.0)
    assert scores["ler"] != per_word_mean


def test_decomposition_rates_sum_to_ler():
    pairs = [("TULIP", "TULP"), ("ROAD", "RODE"), ("SUN", "SUNS")]
    s = score_corpus(pairs)
    assert s["D_rate"] + s["S_rate"] + s["I_rate"] == pytest.approx(s["ler"])


def test_two_words_one_substitution_each():
    pairs = [("ABCDE", "ABXDE"), ("FGHIJ", "FGYIJ")]
    s = score_corpus(pairs)
    assert s["ler"] == pytest.approx(20.0)
    assert s["S_rate"] == pytest.approx(20.0)
    assert s["D_rate"] == 0.0 and s["I_rate"] == 0.0


def test_empty_reference_rejected():
    with pytest.raises(ValueError):
        score_corpus([("", "A")])


letters = st.text(alphabet="ABC", min_size=0, max_size=6)


@settings(max_examples=150, deadline=None)
@given(letters, letters)
def test_symmetry_swaps_deletions_insertions(a, b):
    d1 = align(a, b)
    d2 = align(b, a)
    assert d1.total_errors == d2.total_errors
    assert (d1.deletions, d1.insertions) == (d2.insertions, d2.deletions)
    assert d1.substitutions == d2.substitutions


@settings(max_examples=100, deadline=None)
@given(letters, letters, letters)
def test_triangle_inequality(a, b, c):
    assert align(a, c).total_errors <= \
        align(a, b).total_errors + align(b, c).total_errors


def test_report_formatting_tags():
    s = score_corpus([("ROAD", "RODE")])
    text = format_report(s)
    assert "corpus LER" in text
    assert "REF:" in text and "HYP:" in text
