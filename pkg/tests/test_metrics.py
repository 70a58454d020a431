"""Metrics tests: production Levenshtein against a brute-force enumeration
oracle, multi-pronunciation scoring and report aggregation."""

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from g2pstudio.errors import EvalError, ScoreError
from g2pstudio.metrics import WordScore, aggregate, levenshtein, score_word


def enum_edit_distance(a: tuple, b: tuple) -> int:
    """Oracle: exhaustively enumerate edit scripts (delete/insert/substitute),
    returning the cheapest. Exponential; only usable on short sequences."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(
        1 + enum_edit_distance(a[1:], b),
        1 + enum_edit_distance(a, b[1:]),
        (a[0] != b[0]) + enum_edit_distance(a[1:], b[1:]),
    )


seqs = st.lists(st.sampled_from("abcd"), max_size=10).map(tuple)


class TestLevenshtein:
    def test_identity(self):
        assert levenshtein(("k", "æ", "t"), ("k", "æ", "t")) == 0

    def test_pure_insertions(self):
        assert levenshtein((), ("a", "b", "c")) == 3
        assert levenshtein(("a", "b", "c"), ()) == 3

    def test_spec_example(self):
        # one substitution (a -> æ) plus one insertion (s)
        a, b = ("k", "a", "t"), ("k", "æ", "t", "s")
        assert enum_edit_distance(a, b) == 2
        assert levenshtein(a, b) == 2

    def test_multichar_tokens_are_units(self):
        assert levenshtein(("t͡ʃ", "a"), ("t", "ʃ", "a")) == 2

    def test_exhaustive_short_lengths(self):
        # full product space of pairs up to length 2 over 3 symbols
        symbols = "abc"
        pool = [tuple(p) for n in range(3)
                for p in itertools.product(symbols, repeat=n)]
        for a in pool:
            for b in pool:
                assert levenshtein(a, b) == enum_edit_distance(a, b), (a, b)

    @given(seqs, seqs)
    @settings(max_examples=300)
    def test_symmetry(self, a, b):
        assert levenshtein(a, b) == levenshtein(b, a)

    @given(seqs, seqs, seqs)
    @settings(max_examples=300)
    def test_triangle_inequality(self, a, b, c):
        assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)

    @given(st.lists(st.sampled_from("abcd"), max_size=6).map(tuple),
           st.lists(st.sampled_from("abcd"), max_size=6).map(tuple))
    @settings(max_examples=150, deadline=None)
    def test_matches_enumeration_oracle(self, a, b):
        assert levenshtein(a, b) == enum_edit_distance(a, b)

    @given(seqs, seqs)
    @settings(max_examples=200)
    def test_relabeling_invariance(self, a, b):
        mapping = {"a": "z", "b": "y", "c": "x", "d": "w"}
        ra = tuple(mapping[t] for t in a)
        rb = tuple(mapping[t] for t in b)
        assert levenshtein(a, b) == levenshtein(ra, rb)


class TestScoreWord:
    def test_exact_variant_match(self):
        refs = [("a",), ("k", "æ", "t"), ("b",)]
        dist, ref = score_word(("k", "æ", "t"), refs)
        assert dist == 0 and ref == ("k", "æ", "t")

    def test_minimization_over_references(self):
        refs = [("a", "b"), ("a", "b", "c")]
        dist, ref = score_word(("a", "b", "c"), refs)
        assert dist == 0 and ref == ("a", "b", "c")

    def test_tie_break_deterministic(self):
        refs = [("k", "o", "t"), ("k", "a", "t")]
        dist, ref = score_word(("k", "u", "t"), refs)
        assert dist == 1
        # both references are 1 away and equally long: lexicographic order wins
        assert ref == ("k", "a", "t")
        dist2, ref2 = score_word(("k", "u", "t"), list(reversed(refs)))
        assert (dist2, ref2) == (dist, ref)

    def test_shorter_reference_wins_ties(self):
        refs = [("a", "b", "x"), ("a", "x")]
        dist, ref = score_word(("a", "b"), refs)
        assert dist == 1 and ref == ("a", "x")

    def test_duplicate_reference_is_noop(self):
        refs = [("a", "b"), ("c", "d")]
        hyp = ("a", "d")
        assert score_word(hyp, refs) == score_word(hyp, refs + [("c", "d")])

    def test_empty_reference_list(self):
        with pytest.raises(ScoreError):
            score_word(("a",), [])


class TestAggregate:
    @staticmethod
    def _score(word, hyp, ref):
        return WordScore(word=word, hypothesis=hyp, best_reference=ref,
                         distance=levenshtein(hyp, ref))

    def test_all_correct(self):
        scored = [self._score(f"w{i}", ("a", "b"), ("a", "b")) for i in range(5)]
        report = aggregate(scored)
        assert report.wer == 0.0 and report.per == 0.0
        assert report.n_words == 5

    def test_one_of_four_wrong_by_one_edit(self):
        ref = ("p", "q", "r", "s", "t")
        scored = [self._score("w0", ref, ref),
                  self._score("w1", ref, ref),
                  self._score("w2", ref, ref),
                  self._score("w3", ("p", "q", "r", "s", "x"), ref)]
        report = aggregate(scored)
        assert report.wer == pytest.approx(25.0)
        assert report.per == pytest.approx(5.0)  # 1 edit / 20 reference tokens

    def test_single_word_fully_wrong(self):
        ref = ("a", "b", "c", "d")
        report = aggregate([self._score("w", ("x", "y", "z", "q"), ref)])
        assert report.wer == pytest.approx(100.0)
        assert report.per == pytest.approx(100.0)

    def test_wer_zero_iff_per_zero(self):
        for hyp in [("a", "b"), ("a", "x")]:
            report = aggregate([self._score("w", hyp, ("a", "b"))])
            assert (report.wer == 0) == (report.per == 0)

    def test_empty_raises(self):
        with pytest.raises(EvalError):
            aggregate([])

    def test_single_substituted_phoneme_in_four(self):
        ref = ("a", "b", "c", "d")
        report = aggregate([self._score("w", ("a", "x", "c", "d"), ref)])
        assert report.wer == pytest.approx(100.0)
        assert report.per == pytest.approx(25.0)

    def test_json_and_table_render(self):
        report = aggregate([self._score("cat", ("k", "t"), ("k", "æ", "t"))])
        assert '"wer"' in report.to_json()
        table = report.to_table()
        assert "WER" in table and "cat" in table


class TestPerRelabelingInvariance:
    @given(st.lists(st.tuples(
        st.lists(st.sampled_from("abcd"), min_size=1, max_size=6).map(tuple),
        st.lists(st.sampled_from("abcd"), min_size=1, max_size=6).map(tuple),
    ), min_size=1, max_size=8))
    @settings(max_examples=100)
    def test_per_invariant_under_bijection(self, pairs):
        mapping = {"a": "q", "b": "r", "c": "s", "d": "t"}
        direct = aggregate([
            WordScore(word=str(i), hypothesis=h, best_reference=r,
                      distance=levenshtein(h, r))
            for i, (h, r) in enumerate(pairs)
        ])
        relabeled = aggregate([
            WordScore(word=str(i),
                      hypothesis=tuple(mapping[t] for t in h),
                      best_reference=tuple(mapping[t] for t in r),
                      distance=levenshtein(tuple(mapping[t] for t in h),
                                           tuple(mapping[t] for t in r)))
            for i, (h, r) in enumerate(pairs)
        ])
        assert direct.per == pytest.approx(relabeled.per)
        assert direct.wer == pytest.approx(relabeled.wer)
