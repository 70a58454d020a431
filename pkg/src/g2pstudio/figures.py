"""Matplotlib figures rendered next to the delimited report outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .evolution import GenerationRecord, best_so_far_series  # noqa: E402
from .metrics import EvalReport  # noqa: E402


def save_loss_curve(losses: Sequence[float], path: str | Path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(range(len(losses)), losses, lw=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title("training loss")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_es_progress(records: Sequence[GenerationRecord], path: str | Path) -> Path:
    path = Path(path)
    by_gen: dict[int, list[float]] = {}
    for r in records:
        by_gen.setdefault(r.generation, []).append(r.result.fitness_wer)
    gens = sorted(by_gen)
    mean_wer = [sum(by_gen[g]) / len(by_gen[g]) for g in gens]
    best = best_so_far_series(records)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(gens, mean_wer, marker="o", label="generation mean WER")
    ax.plot(gens, best, marker="s", label="best so far")
    ax.set_xlabel("generation")
    ax.set_ylabel("fitness WER %")
    ax.set_title("evolution-strategy progress")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_eval_histogram(report: EvalReport, path: str | Path) -> Path:
    path = Path(path)
    distances = [s.distance for s in report.per_word]
    hi = max(distances) if distances else 0
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.hist(distances, bins=range(0, hi + 2), align="left", rwidth=0.9)
    ax.set_xlabel("edit distance to best reference")
    ax.set_ylabel("words")
    ax.set_title(f"per-word edit distances (WER {report.wer:.2f}%, "
                 f"PER {report.per:.2f}%)")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
