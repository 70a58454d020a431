"""Parse, clean, filter and split pronunciation lexicons.

Two ingestion formats are supported: tab-separated "word<TAB>ipa" extracts
and the CMU pronouncing dictionary 0.7b plain-text format. Filtering applies
three rules in a fixed order (foreign graphemes, over-long transcriptions,
rare phonemes); removal counts are reported per entry, duplicate collapsing
is counted per (word, pronunciation) pair at ingestion time.
"""

from __future__ import annotations

import json
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyPronunciation,
    IoError,
    ParseError,
    SplitError,
    VocabError,
)

PhonemeSequence = tuple[str, ...]

TIE_BARS = ("͡", "͜")  # combining double breve above / below

_COMBINING_CATEGORIES = ("Mn", "Mc", "Me")


@dataclass(frozen=True)
class LanguageSpec:
    """Language-level cleaning parameters.

    alphabet: graphemes allowed in orthographic words.
    stress_symbols: symbols dropped from pronunciations during tokenization.
    phoneme_min_count: phonemes rarer than this (strictly) are filtered out.
    length_ratio_max: cap on phonemes-per-grapheme before a transcription is
        considered to hold several pronunciation variants at once.
    """

    language_code: str
    alphabet: frozenset[str]
    stress_symbols: frozenset[str] = frozenset({"ˈ", "ˌ"})
    phoneme_min_count: int = 100
    length_ratio_max: float = 2.5

    def __post_init__(self):
        if not self.alphabet:
            raise ValueError("alphabet must be non-empty")
        if self.phoneme_min_count < 1:
            raise ValueError("phoneme_min_count must be >= 1")
        if not self.length_ratio_max > 1:
            raise ValueError("length_ratio_max must be > 1")
        object.__setattr__(self, "alphabet", frozenset(self.alphabet))
        object.__setattr__(self, "stress_symbols", frozenset(self.stress_symbols))

    def to_dict(self) -> dict:
        return {
            "language_code": self.language_code,
            "alphabet": "".join(sorted(self.alphabet)),
            "stress_symbols": "".join(sorted(self.stress_symbols)),
            "phoneme_min_count": self.phoneme_min_count,
            "length_ratio_max": self.length_ratio_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LanguageSpec":
        return cls(
            language_code=d["language_code"],
            alphabet=frozenset(d["alphabet"]),
            stress_symbols=frozenset(d.get("stress_symbols", "ˈˌ")),
            phoneme_min_count=int(d.get("phoneme_min_count", 100)),
            length_ratio_max=float(d.get("length_ratio_max", 2.5)),
        )

    @classmethod
    def from_json_file(cls, path: str | Path) -> "LanguageSpec":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise IoError(f"cannot read language spec {path}: {e}") from e
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class LexiconEntry:
    """One orthographic word with its distinct pronunciations."""

    word: str
    pronunciations: tuple[PhonemeSequence, ...]
    source: str = "wiktionary_tsv"  # or "cmudict"

    def __post_init__(self):
        if not self.word:
            raise ValueError("word must be non-empty")
        if not self.pronunciations or any(not p for p in self.pronunciations):
            raise ValueError(f"entry {self.word!r} has an empty pronunciation")
        if len(set(self.pronunciations)) != len(self.pronunciations):
            raise ValueError(f"entry {self.word!r} has duplicate pronunciations")


@dataclass(frozen=True)
class Lexicon:
    """An ordered list of entries plus the exact phoneme tally.

    collapsed_duplicates / stress_symbols_stripped are ingestion statistics
    carried along so apply_filters can surface them in its FilterReport.
    """

    spec: LanguageSpec
    entries: tuple[LexiconEntry, ...]
    phoneme_counts: dict[str, int] = field(default_factory=dict)
    collapsed_duplicates: int = 0
    stress_symbols_stripped: int = 0

    @classmethod
    def from_entries(
        cls,
        spec: LanguageSpec,
        entries: Iterable[LexiconEntry],
        collapsed_duplicates: int = 0,
        stress_symbols_stripped: int = 0,
    ) -> "Lexicon":
        entries = tuple(entries)
        return cls(
            spec=spec,
            entries=entries,
            phoneme_counts=dict(_tally(entries)),
            collapsed_duplicates=collapsed_duplicates,
            stress_symbols_stripped=stress_symbols_stripped,
        )

    def __len__(self) -> int:
        return len(self.entries)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "entries": [
                {"word": e.word, "prons": [list(p) for p in e.pronunciations]}
                for e in self.entries
            ],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), ensure_ascii=False), encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path, source: str = "wiktionary_tsv") -> "Lexicon":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as e:
            raise IoError(f"cannot read lexicon {path}: {e}") from e
        spec = LanguageSpec.from_dict(d["spec"])
        entries = [
            LexiconEntry(
                word=ed["word"],
                pronunciations=tuple(tuple(p) for p in ed["prons"]),
                source=ed.get("source", source),
            )
            for ed in d["entries"]
        ]
        return cls.from_entries(spec, entries)


@dataclass(frozen=True)
class FilterReport:
    """Entry-level accounting of one apply_filters pass.

    Removal counts are whole entries, attributed to the rule that removed the
    entry's last surviving pronunciation; collapsed_duplicates counts
    identical (word, pronunciation) pairs merged at ingestion.
    """

    removed_bad_grapheme: int
    removed_rare_phoneme: int
    removed_length_ratio: int
    collapsed_duplicates: int
    stress_symbols_stripped: int
    surviving_entries: int

    def to_dict(self) -> dict:
        return {
            "removed_bad_grapheme": self.removed_bad_grapheme,
            "removed_rare_phoneme": self.removed_rare_phoneme,
            "removed_length_ratio": self.removed_length_ratio,
            "collapsed_duplicates": self.collapsed_duplicates,
            "stress_symbols_stripped": self.stress_symbols_stripped,
            "surviving_entries": self.surviving_entries,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _tally(entries: Iterable[LexiconEntry]) -> Counter:
    counts: Counter = Counter()
    for e in entries:
        for pron in e.pronunciations:
            counts.update(pron)
    return counts


def grapheme_clusters(s: str) -> list[str]:
    """Split a string into grapheme clusters (base char + combining marks)."""
    out: list[str] = []
    for ch in s:
        if out and unicodedata.category(ch) in _COMBINING_CATEGORIES:
            out[-1] += ch
        else:
            out.append(ch)
    return out


def tokenize_ipa(raw: str, spec: LanguageSpec) -> PhonemeSequence:
    """Tokenize an IPA string into phoneme tokens.

    Tokens are grapheme clusters; a tie bar (U+0361/U+035C) joins the next
    cluster into the same token so affricates like "t͡ʃ" stay single units.
    Stress symbols listed in the spec are dropped.
    """
    tokens, _ = _tokenize_counted(raw, spec)
    if not tokens:
        raise EmptyPronunciation(f"nothing left after tokenizing {raw!r}")
    return tokens


def _tokenize_counted(raw: str, spec: LanguageSpec) -> tuple[PhonemeSequence, int]:
    clusters = grapheme_clusters(raw.strip())
    merged: list[str] = []
    join_next = False
    for c in clusters:
        if join_next and merged:
            merged[-1] += c
        else:
            merged.append(c)
        join_next = any(t in c for t in TIE_BARS)
    stripped = 0
    tokens: list[str] = []
    for t in merged:
        if t in spec.stress_symbols:
            stripped += 1
        elif not t.isspace():
            tokens.append(t)
    return tuple(tokens), stripped


def load_wiktionary_tsv(path: str | Path, spec: LanguageSpec) -> Lexicon:
    """Load an unfiltered lexicon from "word<TAB>ipa" lines.

    Repeated words accumulate pronunciation variants; identical
    (word, pronunciation) pairs are collapsed and counted. Words are
    lowercased at ingestion.
    """
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e

    prons_by_word: dict[str, list[PhonemeSequence]] = {}
    collapsed = 0
    stripped_total = 0
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(
                f"line {lineno}: expected 2 tab-separated fields, got {len(fields)}",
                line_number=lineno,
            )
        word, ipa = fields[0].strip().lower(), fields[1]
        if not word:
            raise ParseError(f"line {lineno}: empty word", line_number=lineno)
        tokens, stripped = _tokenize_counted(ipa, spec)
        stripped_total += stripped
        if not tokens:
            raise EmptyPronunciation(f"line {lineno}: empty pronunciation {ipa!r}")
        variants = prons_by_word.setdefault(word, [])
        if tokens in variants:
            collapsed += 1
        else:
            variants.append(tokens)

    entries = [
        LexiconEntry(word=w, pronunciations=tuple(ps), source="wiktionary_tsv")
        for w, ps in prons_by_word.items()
    ]
    return Lexicon.from_entries(
        spec, entries, collapsed_duplicates=collapsed,
        stress_symbols_stripped=stripped_total,
    )


_CMU_VARIANT = re.compile(r"^(.*)\((\d+)\)$")
_CMU_STRESS = re.compile(r"^([A-Z]+)([012])$")


def load_cmudict(path: str | Path, spec: LanguageSpec | None = None) -> Lexicon:
    """Load the CMU pronouncing dictionary (0.7b plain-text format).

    Entries whose word contains digits or any symbol other than the
    apostrophe are discarded; stress digits on vowels are stripped; "(n)"
    variant markers merge into multi-pronunciation entries; words are
    lowercased.
    """
    if spec is None:
        spec = LanguageSpec(
            language_code="en",
            alphabet=frozenset("abcdefghijklmnopqrstuvwxyz'"),
            stress_symbols=frozenset(),
        )
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    text = raw.decode("utf-8", errors="replace")

    prons_by_word: dict[str, list[PhonemeSequence]] = {}
    collapsed = 0
    stripped_total = 0
    for line in text.splitlines():
        if not line.strip() or line.startswith(";;;"):
            continue
        parts = line.split()
        if len(parts) < 2:
            continue
        word, phones = parts[0], parts[1:]
        m = _CMU_VARIANT.match(word)
        if m:
            word = m.group(1)
        if not word or not all(c.isalpha() or c == "'" for c in word):
            continue
        word = word.lower()
        cleaned: list[str] = []
        for ph in phones:
            m = _CMU_STRESS.match(ph)
            if m:
                cleaned.append(m.group(1))
                stripped_total += 1
            else:
                cleaned.append(ph)
        tokens = tuple(cleaned)
        variants = prons_by_word.setdefault(word, [])
        if tokens in variants:
            collapsed += 1
        else:
            variants.append(tokens)

    entries = [
        LexiconEntry(word=w, pronunciations=tuple(ps), source="cmudict")
        for w, ps in prons_by_word.items()
    ]
    return Lexicon.from_entries(
        spec, entries, collapsed_duplicates=collapsed,
        stress_symbols_stripped=stripped_total,
    )


def apply_filters(lex: Lexicon) -> tuple[Lexicon, FilterReport]:
    """Filter a lexicon in a fixed rule order.

    1. Drop entries whose word uses a grapheme outside the spec alphabet.
    2. Drop pronunciations longer than length_ratio_max x grapheme count.
    3. Drop pronunciations containing a phoneme rarer than phoneme_min_count,
       with rare-phoneme counts computed once on the output of rule 2 and
       applied in a single pass (no fixpoint iteration).

    Entries left without pronunciations are dropped and attributed to the
    rule that removed their last one. Worst case, an empty lexicon is
    returned; filtering never raises.
    """
    spec = lex.spec
    removed_bad = 0
    removed_ratio = 0
    removed_rare = 0

    # rule 1: word-level alphabet check
    stage1: list[LexiconEntry] = []
    for e in lex.entries:
        if all(g in spec.alphabet for g in grapheme_clusters(e.word)):
            stage1.append(e)
        else:
            removed_bad += 1

    # rule 2: pronunciation length ratio
    stage2: list[LexiconEntry] = []
    for e in stage1:
        cap = spec.length_ratio_max * len(grapheme_clusters(e.word))
        kept = tuple(p for p in e.pronunciations if len(p) <= cap)
        if kept:
            stage2.append(
                LexiconEntry(word=e.word, pronunciations=kept, source=e.source)
            )
        else:
            removed_ratio += 1

    # rule 3: rare phonemes, single pass over counts taken after rule 2
    counts = _tally(stage2)
    stage3: list[LexiconEntry] = []
    for e in stage2:
        kept = tuple(
            p for p in e.pronunciations
            if all(counts[t] >= spec.phoneme_min_count for t in p)
        )
        if kept:
            stage3.append(
                LexiconEntry(word=e.word, pronunciations=kept, source=e.source)
            )
        else:
            removed_rare += 1

    filtered = Lexicon.from_entries(
        spec, stage3,
        collapsed_duplicates=lex.collapsed_duplicates,
        stress_symbols_stripped=lex.stress_symbols_stripped,
    )
    report = FilterReport(
        removed_bad_grapheme=removed_bad,
        removed_rare_phoneme=removed_rare,
        removed_length_ratio=removed_ratio,
        collapsed_duplicates=lex.collapsed_duplicates,
        stress_symbols_stripped=lex.stress_symbols_stripped,
        surviving_entries=len(stage3),
    )
    return filtered, report


def split_train_test(
    lex: Lexicon, test_fraction: float, seed: int
) -> tuple[Lexicon, Lexicon]:
    """Entry-level random split: all pronunciations of a word land on one side.

    |test| = round(test_fraction x |entries|); deterministic for a fixed seed.
    """
    if not 0 < test_fraction < 1:
        raise SplitError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = len(lex.entries)
    if n < 2:
        raise SplitError(f"need at least 2 entries to split, got {n}")
    n_test = int(round(test_fraction * n))
    order = np.random.default_rng(seed).permutation(n)
    test_idx = set(order[:n_test].tolist())
    train_entries = [e for i, e in enumerate(lex.entries) if i not in test_idx]
    test_entries = [e for i, e in enumerate(lex.entries) if i in test_idx]
    return (
        Lexicon.from_entries(lex.spec, train_entries),
        Lexicon.from_entries(lex.spec, test_entries),
    )


PAD, SOS, EOS, UNK = "<pad>", "<sos>", "<eos>", "<unk>"
SPECIALS = (PAD, SOS, EOS, UNK)
PAD_ID, SOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3


@dataclass(frozen=True)
class Vocab:
    """Bijective token<->id mapping with specials pinned at indices 0-3."""

    tokens: tuple[str, ...]

    def __post_init__(self):
        if self.tokens[:4] != SPECIALS:
            raise VocabError("vocabulary must start with the 4 special tokens")
        object.__setattr__(
            self, "_index", {t: i for i, t in enumerate(self.tokens)}
        )

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, toks: Sequence[str]) -> list[int]:
        idx = self._index
        return [idx.get(t, UNK_ID) for t in toks]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    @classmethod
    def from_symbols(cls, symbols: Iterable[str]) -> "Vocab":
        return cls(tokens=SPECIALS + tuple(sorted(set(symbols))))


def build_vocabularies(lex: Lexicon) -> tuple[Vocab, Vocab]:
    """Grapheme and phoneme vocabularies over a (filtered) lexicon."""
    if not lex.entries:
        raise VocabError("cannot build vocabularies from an empty lexicon")
    graphemes: set[str] = set()
    phonemes: set[str] = set()
    for e in lex.entries:
        graphemes.update(grapheme_clusters(e.word))
        for p in e.pronunciations:
            phonemes.update(p)
    return Vocab.from_symbols(graphemes), Vocab.from_symbols(phonemes)
