"""Shared fixtures: deterministic toy language and gradient-check helpers."""

from __future__ import annotations

import numpy as np
import pytest

from g2pstudio.autodiff import Tape, Tensor, backward
from g2pstudio.lexicon import LanguageSpec, Lexicon, LexiconEntry

TOY_LETTERS = "abcdefgh"
# 1:1 letter -> pseudo-phoneme map, learnable by construction
TOY_PHONEMES = {c: c.upper() + "0" for c in TOY_LETTERS}


def make_toy_lexicon(n_entries: int = 200, seed: int = 42,
                     min_len: int = 3, max_len: int = 7) -> Lexicon:
    """Synthetic lexicon whose spelling predicts pronunciation exactly."""
    rng = np.random.default_rng(seed)
    words: set[str] = set()
    while len(words) < n_entries:
        n = rng.integers(min_len, max_len + 1)
        words.add("".join(TOY_LETTERS[i]
                          for i in rng.integers(0, len(TOY_LETTERS), n)))
    spec = LanguageSpec(language_code="xx", alphabet=frozenset(TOY_LETTERS),
                        phoneme_min_count=1)
    entries = [
        LexiconEntry(word=w, pronunciations=(tuple(TOY_PHONEMES[c] for c in w),))
        for w in sorted(words)
    ]
    return Lexicon.from_entries(spec, entries)


@pytest.fixture(scope="session")
def toy_lexicon() -> Lexicon:
    return make_toy_lexicon(200, seed=42)


@pytest.fixture(scope="session")
def tiny_lexicon() -> Lexicon:
    return make_toy_lexicon(24, seed=7)


PLANTED_EXPECTED = {
    "removed_bad_grapheme": 3,
    "removed_rare_phoneme": 1,
    "removed_length_ratio": 2,
    "collapsed_duplicates": 2,
    "stress_symbols_stripped": 2,
    "surviving_entries": 8,
}

PLANTED_RAW_PAIRS = 16


def planted_violation_tsv() -> tuple[str, LanguageSpec]:
    """TSV fixture with exactly 3 bad-grapheme entries, 2 over-length-ratio
    entries, 1 rare-phoneme entry and 2 duplicate (word, pron) pairs, plus
    filler entries keeping every surviving phoneme at count >= 3."""
    lines = [
        "kat\tkat",
        "mat\tmat",
        "sok\tsok",
        "tas\ttas",
        "kom\tkom",
        "mos\tmos",
        "tak\tˈtak",   # stress symbol, stripped
        "sam\tˈsam",   # stress symbol, stripped
        "café\tkat",   # grapheme é outside a-z
        "naïve\tmat",  # grapheme ï outside a-z
        "über\tsok",   # grapheme ü outside a-z
        "go\tkatkatk",      # 7 phonemes > 2.5 x 2 graphemes
        "at\tmatmat",       # 6 phonemes > 2.5 x 2 graphemes
        "zap\tʒat",    # ʒ occurs once across the lexicon (< 3)
        "kat\tkat",         # duplicate pair
        "sok\tsok",         # duplicate pair
    ]
    spec = LanguageSpec(
        language_code="xx",
        alphabet=frozenset("abcdefghijklmnopqrstuvwxyz"),
        stress_symbols=frozenset({"ˈ", "ˌ"}),
        phoneme_min_count=3,
        length_ratio_max=2.5,
    )
    return "\n".join(lines) + "\n", spec


def finite_diff_grads(fn, tensors: list[Tensor], h: float = 1e-5) -> list[np.ndarray]:
    """Central finite differences of a scalar-producing fn, per tensor."""
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = fn().item()
            flat[i] = orig - h
            down = fn().item()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def autodiff_grads(fn, tensors: list[Tensor]) -> list[np.ndarray]:
    """Reverse-mode gradients of a scalar-producing fn(tape) per tensor."""
    for t in tensors:
        t.zero_grad()
    tape = Tape()
    loss = fn(tape)
    backward(tape, loss)
    return [t.grad if t.grad is not None else np.zeros_like(t.data)
            for t in tensors]


def max_rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Element-wise |a-b| / max(|a|, |b|, 1e-2), maximized."""
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-2)
    return float((np.abs(a - b) / denom).max())


def gradcheck(build_fn, tensors: list[Tensor], tol: float = 1e-4) -> float:
    """Compare reverse-mode and finite-difference gradients; returns max error.

    build_fn(tape) must construct the graph and return a scalar loss; with
    tape=None it evaluates the same function without recording.
    """
    ad_grads = autodiff_grads(build_fn, tensors)
    fd_grads = finite_diff_grads(lambda: build_fn(None), tensors)
    err = max(max_rel_error(a, f) for a, f in zip(ad_grads, fd_grads))
    assert err < tol, f"gradient mismatch: max relative error {err:.3e}"
    return err
