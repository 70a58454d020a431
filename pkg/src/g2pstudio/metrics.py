"""Levenshtein distance, PER and WER with multi-pronunciation target selection.

Distances operate on phoneme tokens, never on raw characters, so a
multi-character token such as "t͡ʃ" counts as a single unit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

from .errors import EvalError, ScoreError

PhonemeSequence = Sequence[str]


def levenshtein(a: PhonemeSequence, b: PhonemeSequence) -> int:
    """Minimum number of unit-cost insertions, deletions and substitutions
    transforming token sequence ``a`` into ``b``."""
    if a == b:
        return 0
    n, m = len(a), len(b)
    if n == 0:
        return m
    if m == 0:
        return n
    prev = list(range(m + 1))
    cur = [0] * (m + 1)
    for i in range(1, n + 1):
        cur[0] = i
        ai = a[i - 1]
        for j in range(1, m + 1):
            cost = 0 if ai == b[j - 1] else 1
            cur[j] = min(prev[j] + 1,        # delete a[i-1]
                         cur[j - 1] + 1,     # insert b[j-1]
                         prev[j - 1] + cost) # substitute / match
        prev, cur = cur, prev
    return prev[m]


def score_word(
    hypothesis: PhonemeSequence,
    references: Sequence[PhonemeSequence],
) -> tuple[int, tuple[str, ...]]:
    """Distance to the closest reference.

    Ties are broken deterministically: shorter reference first, then
    lexicographic token order.

    Returns:
        (min distance, chosen reference)
    """
    if not references:
        raise ScoreError("score_word needs at least one reference")
    hyp = tuple(hypothesis)
    best: tuple[int, int, tuple[str, ...]] | None = None
    for ref in references:
        ref_t = tuple(ref)
        key = (levenshtein(hyp, ref_t), len(ref_t), ref_t)
        if best is None or key < best:
            best = key
    assert best is not None
    return best[0], best[2]


@dataclass(frozen=True)
class WordScore:
    word: str
    hypothesis: tuple[str, ...]
    best_reference: tuple[str, ...]
    distance: int


@dataclass(frozen=True)
class EvalReport:
    """WER/PER aggregates plus per-word diagnostics.

    wer: percentage of words whose hypothesis matches no reference exactly.
    per: 100 x (sum of min distances) / (sum of chosen-reference lengths).
    """

    wer: float
    per: float
    n_words: int
    per_word: tuple[WordScore, ...]

    def to_dict(self) -> dict:
        return {
            "wer": self.wer,
            "per": self.per,
            "n_words": self.n_words,
            "per_word": [
                {
                    "word": s.word,
                    "hypothesis": list(s.hypothesis),
                    "best_reference": list(s.best_reference),
                    "edit_distance": s.distance,
                }
                for s in self.per_word
            ],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=indent)

    def to_table(self, max_rows: int | None = 20) -> str:
        """Aligned-columns text table: summary row plus worst offenders."""
        lines = [
            f"{'words':>8}  {'WER %':>8}  {'PER %':>8}",
            f"{self.n_words:>8}  {self.wer:>8.2f}  {self.per:>8.2f}",
        ]
        wrong = [s for s in self.per_word if s.distance > 0]
        wrong.sort(key=lambda s: -s.distance)
        if max_rows is not None:
            wrong = wrong[:max_rows]
        if wrong:
            w = max(len(s.word) for s in wrong)
            lines.append("")
            lines.append(f"{'word':<{w}}  dist  hypothesis | reference")
            for s in wrong:
                lines.append(
                    f"{s.word:<{w}}  {s.distance:>4}  "
                    f"{' '.join(s.hypothesis)} | {' '.join(s.best_reference)}"
                )
        return "\n".join(lines)


def aggregate(scored: Sequence[WordScore]) -> EvalReport:
    """Fold per-word scores into an EvalReport."""
    if not scored:
        raise EvalError("cannot aggregate an empty score list")
    n = len(scored)
    n_wrong = sum(1 for s in scored if s.distance > 0)
    total_dist = sum(s.distance for s in scored)
    total_ref_len = sum(len(s.best_reference) for s in scored)
    wer = 100.0 * n_wrong / n
    per = 100.0 * total_dist / total_ref_len if total_ref_len else 0.0
    return EvalReport(wer=wer, per=per, n_words=n, per_word=tuple(scored))
