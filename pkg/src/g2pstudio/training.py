"""Training loop, early stopping and evaluation orchestration.

The early-stop rule watches a moving-average-smoothed per-step loss: stop
when the trailing window's relative spread (max - min) / max drops below the
threshold. Raw per-step loss is too noisy to ever trigger at desk scale, so
smoothing width is part of the config and logged with it.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from . import metrics
from .errors import ConfigError, EvalError, NumericalError, TrainingDiverged
from .g2p_models import (
    Seq2SeqModel,
    encode_word,
    forward_teacher_forced,
    greedy_decode,
    save_checkpoint,
)
from .lexicon import Lexicon
from .metrics import EvalReport


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int
    batch_size: int | None = None  # None: use the genome's batch gene
    learning_rate: float = 1e-3
    seed: int = 0
    early_stop: bool = True
    early_stop_window: int = 50
    early_stop_threshold: float = 0.01
    early_stop_smooth: int = 10
    checkpoint_every: int | None = None  # epochs
    checkpoint_path: str | None = None

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.early_stop_window < 2:
            raise ConfigError("early_stop_window must be >= 2")
        if self.early_stop_threshold <= 0:
            raise ConfigError("early_stop_threshold must be positive")
        if self.early_stop_smooth < 1:
            raise ConfigError("early_stop_smooth must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")

    def to_dict(self) -> dict:
        return {
            "max_epochs": self.max_epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "early_stop": self.early_stop,
            "early_stop_window": self.early_stop_window,
            "early_stop_threshold": self.early_stop_threshold,
            "early_stop_smooth": self.early_stop_smooth,
        }


@dataclass
class TrainHistory:
    losses: list[float] = field(default_factory=list)
    epoch_means: list[float] = field(default_factory=list)
    batch_fingerprints: list[int] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def steps_run(self) -> int:
        return len(self.losses)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["step", "loss"])
            for i, loss in enumerate(self.losses):
                w.writerow([i, f"{loss:.10g}"])

    def summary(self) -> dict:
        return {
            "steps_run": self.steps_run,
            "epochs_run": len(self.epoch_means),
            "stopped_early": self.stopped_early,
            "final_loss": self.losses[-1] if self.losses else None,
            "epoch_means": self.epoch_means,
        }

    def save_summary(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2))


def should_stop(history: Sequence[float], window: int = 50,
                threshold: float = 0.01) -> bool:
    """True iff the trailing window varies by less than threshold, relatively.

    Variation is (max - min) / max over the last `window` values; decisions
    depend only on that trailing window.
    """
    if window < 2:
        raise ConfigError("window must be >= 2")
    if len(history) < window:
        return False
    tail = history[-window:]
    hi, lo = max(tail), min(tail)
    if hi == 0:
        return bool(hi == lo)
    return bool((hi - lo) / hi < threshold)


def _smoothed(losses: Sequence[float], width: int) -> list[float]:
    """Trailing moving average of the per-step losses."""
    out = []
    acc = 0.0
    for i, x in enumerate(losses):
        acc += x
        if i >= width:
            acc -= losses[i - width]
        out.append(acc / min(i + 1, width))
    return out


def _flatten_samples(model: Seq2SeqModel, lex: Lexicon) -> list[tuple[list[int], list[int]]]:
    """One (grapheme ids, phoneme ids) sample per (word, pronunciation) pair."""
    p_index = {t: i for i, t in enumerate(model.p_vocab.tokens)}
    samples = []
    for entry in lex.entries:
        g_ids = encode_word(model, entry.word)
        for pron in entry.pronunciations:
            missing = [t for t in pron if t not in p_index]
            if missing:
                raise ConfigError(
                    f"phonemes {missing} of {entry.word!r} missing from the "
                    f"model's phoneme vocabulary"
                )
            samples.append((g_ids, [p_index[t] for t in pron]))
    return samples


def train(model: Seq2SeqModel, train_lexicon: Lexicon,
          config: TrainConfig,
          on_step: Callable[[int, float], None] | None = None,
          ) -> tuple[Seq2SeqModel, TrainHistory]:
    """Train in seeded shuffled mini-batches until max_epochs or early stop.

    Deterministic for a fixed seed: epoch shuffling and dropout use RNG
    streams derived from config.seed, so changing neither the data nor the
    seed reproduces bit-identical parameters. Raises TrainingDiverged if the
    loss goes non-finite.
    """
    if not train_lexicon.entries:
        raise ConfigError("training lexicon is empty")
    samples = _flatten_samples(model, train_lexicon)
    batch_size = config.batch_size or model.genome.batch_size
    which = model.genome.optimizer
    shuffle_rng, dropout_rng = [
        np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(2)
    ]

    history = TrainHistory()
    params = model.parameters()
    state: ad.OptimizerState | None = None
    n = len(samples)
    step = 0
    stop = False
    for epoch in range(config.max_epochs):
        order = shuffle_rng.permutation(n)
        history.batch_fingerprints.append(int(order[: min(8, n)].sum()))
        epoch_losses = []
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            words = [samples[i][0] for i in idx]
            targets = [samples[i][1] for i in idx]
            tape = ad.Tape()
            loss = forward_teacher_forced(
                model, words, targets, tape=tape, rng=dropout_rng, training=True
            )
            loss_val = loss.item()
            if not np.isfinite(loss_val):
                raise TrainingDiverged(step)
            ad.backward(tape, loss)
            try:
                state = ad.optimizer_step(params, None, state, which=which,
                                          lr=config.learning_rate)
            except NumericalError as e:
                raise TrainingDiverged(step) from e
            model.zero_grad()
            history.losses.append(loss_val)
            epoch_losses.append(loss_val)
            if on_step is not None:
                on_step(step, loss_val)
            step += 1
            if config.early_stop:
                smoothed = _smoothed(
                    history.losses[-(config.early_stop_window
                                     + config.early_stop_smooth):],
                    config.early_stop_smooth,
                )
                # only consider fully-warmed smoothed values
                warm = smoothed[config.early_stop_smooth - 1:] \
                    if len(history.losses) >= config.early_stop_window \
                    + config.early_stop_smooth - 1 else []
                if should_stop(warm, config.early_stop_window,
                               config.early_stop_threshold):
                    history.stopped_early = True
                    stop = True
                    break
        history.epoch_means.append(float(np.mean(epoch_losses)))
        if config.checkpoint_every and config.checkpoint_path \
                and (epoch + 1) % config.checkpoint_every == 0:
            save_checkpoint(model, config.checkpoint_path)
        if stop:
            break
    if config.checkpoint_path and not config.checkpoint_every:
        save_checkpoint(model, config.checkpoint_path)
    return model, history


def evaluate(model: Seq2SeqModel, test_lexicon: Lexicon,
             train_words: set[str] | None = None) -> EvalReport:
    """Greedy-decode every test word and score with min-distance references.

    Disjointness from the training data is the caller's responsibility; pass
    train_words to have it asserted.
    """
    if not test_lexicon.entries:
        raise EvalError("test lexicon is empty")
    if train_words is not None:
        overlap = train_words & {e.word for e in test_lexicon.entries}
        if overlap:
            raise EvalError(f"test set overlaps training data: {sorted(overlap)[:5]}")
    scored = []
    for entry in test_lexicon.entries:
        hyp = tuple(greedy_decode(model, entry.word))
        dist, ref = metrics.score_word(hyp, entry.pronunciations)
        scored.append(metrics.WordScore(
            word=entry.word, hypothesis=hyp, best_reference=ref, distance=dist
        ))
    return metrics.aggregate(scored)
