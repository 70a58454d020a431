"""Evolution strategy over genome space with training-based fitness.

Each generation keeps the fittest fraction unchanged (elitism), admits a
small random sample of the less fit into the parent pool, and refills the
population by uniform per-gene crossover plus per-gene mutation to a
different domain value. Fitness is the word error rate on a holdout that is
fixed once per run and shared by every genome.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import BreedError, ConfigError, TrainingDiverged
from .g2p_models import (
    CnnGenome,
    Genome,
    TransformerGenome,
    build_model,
    gene_domains,
    genome_from_dict,
    genome_to_dict,
    param_count,
)
from .lexicon import Lexicon
from .training import TrainConfig, evaluate, train

log = logging.getLogger(__name__)

DIVERGED_FITNESS = 100.0


@dataclass(frozen=True)
class EsConfig:
    population_size: int = 10
    generations: int = 10
    elite_fraction: float = 0.4
    lessfit_parent_prob: float = 0.1
    mutation_prob_per_gene: float = 0.1
    fitness_epochs: int = 20
    fitness_holdout: int = 500
    train_cap: int = 150_000
    seed: int = 0
    jobs: int = 1
    learning_rate: float = 1e-3
    max_len: int = 64
    fitness_batch_size: int | None = None  # None: genome's batch gene

    def __post_init__(self):
        if self.population_size < 2:
            raise ConfigError("population_size must be >= 2")
        for name in ("elite_fraction", "lessfit_parent_prob", "mutation_prob_per_gene"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ConfigError(f"{name} must be in (0, 1), got {v}")
        if self.generations < 1:
            raise ConfigError("generations must be >= 1")
        if self.fitness_holdout >= self.train_cap:
            raise ConfigError("fitness_holdout must be smaller than train_cap")

    def to_dict(self) -> dict:
        return {
            "population_size": self.population_size,
            "generations": self.generations,
            "elite_fraction": self.elite_fraction,
            "lessfit_parent_prob": self.lessfit_parent_prob,
            "mutation_prob_per_gene": self.mutation_prob_per_gene,
            "fitness_epochs": self.fitness_epochs,
            "fitness_holdout": self.fitness_holdout,
            "train_cap": self.train_cap,
            "seed": self.seed,
            "jobs": self.jobs,
            "learning_rate": self.learning_rate,
        }


@dataclass(frozen=True)
class EvaluatedGenome:
    genome: Genome
    fitness_wer: float
    fitness_per: float
    param_count: int
    generation_born: int

    def rank_key(self) -> tuple[float, int, float]:
        # lower WER first; ties broken by fewer params, then lower PER
        return (self.fitness_wer, self.param_count, self.fitness_per)

    def to_dict(self) -> dict:
        return {
            "genome": genome_to_dict(self.genome),
            "fitness_wer": self.fitness_wer,
            "fitness_per": self.fitness_per,
            "param_count": self.param_count,
            "generation_born": self.generation_born,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluatedGenome":
        return cls(
            genome=genome_from_dict(d["genome"]),
            fitness_wer=d["fitness_wer"],
            fitness_per=d["fitness_per"],
            param_count=d["param_count"],
            generation_born=d["generation_born"],
        )


def derived_seed(run_seed: int, generation: int, slot: int) -> int:
    """Deterministic per-evaluation seed from (run seed, generation, slot)."""
    ss = np.random.SeedSequence([run_seed, generation, slot])
    return int(ss.generate_state(1)[0])


def random_genome(rng: np.random.Generator, architecture: str) -> Genome:
    domains = gene_domains(architecture)
    for _ in range(100):
        genes = {gid: dom[rng.integers(len(dom))] for gid, dom in domains.items()}
        try:
            if architecture == "cnn":
                return CnnGenome.from_genes(genes)
            return TransformerGenome.from_genes(genes)
        except ConfigError:
            continue  # re-roll constraint violations
    raise ConfigError("could not draw a valid genome in 100 attempts")


def init_population(config: EsConfig, architecture: str,
                    rng: np.random.Generator | None = None) -> list[Genome]:
    """population_size genomes, each gene uniform over its domain.

    Duplicates are re-rolled up to 20 times, then allowed.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    population: list[Genome] = []
    seen: set[Genome] = set()
    for _ in range(config.population_size):
        genome = random_genome(rng, architecture)
        for _ in range(20):
            if genome not in seen:
                break
            genome = random_genome(rng, architecture)
        population.append(genome)
        seen.add(genome)
    return population


def breed(parents: Sequence[Genome], rng: np.random.Generator,
          mutation_prob_per_gene: float = 0.1) -> Genome:
    """Uniform per-gene crossover, then per-gene mutation to another value."""
    a, b = parents
    if type(a) is not type(b):
        raise BreedError(f"cannot breed {type(a).__name__} with {type(b).__name__}")
    domains = gene_domains(a.architecture)
    genes_a, genes_b = a.as_genes(), b.as_genes()
    for _ in range(100):
        child = {}
        for gid, dom in domains.items():
            value = genes_a[gid] if rng.random() < 0.5 else genes_b[gid]
            if rng.random() < mutation_prob_per_gene and len(dom) > 1:
                others = [v for v in dom if v != value]
                value = others[rng.integers(len(others))]
            child[gid] = value
        try:
            if a.architecture == "cnn":
                return CnnGenome.from_genes(child)
            return TransformerGenome.from_genes(child)
        except ConfigError:
            continue  # re-roll until the divisibility constraint holds
    raise BreedError("could not breed a valid child in 100 attempts")


def _prepare_fitness_split(lexicon: Lexicon, config: EsConfig) -> tuple[Lexicon, Lexicon]:
    """Cap the lexicon and carve the shared holdout, all seeded by the run."""
    n = len(lexicon.entries)
    if n <= config.fitness_holdout:
        raise ConfigError(
            f"lexicon has {n} entries, need more than fitness_holdout="
            f"{config.fitness_holdout}"
        )
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x51]))
    order = rng.permutation(n)
    capped = [lexicon.entries[i] for i in order[: config.train_cap]]
    holdout = capped[: config.fitness_holdout]
    rest = capped[config.fitness_holdout:]
    return (
        Lexicon.from_entries(lexicon.spec, rest),
        Lexicon.from_entries(lexicon.spec, holdout),
    )


def fitness(genome: Genome, lexicon: Lexicon, config: EsConfig,
            seed: int | None = None, generation_born: int = 0) -> EvaluatedGenome:
    """Train fitness_epochs on the capped split; WER on the shared holdout.

    The split depends only on (lexicon, config.seed), so every genome in a
    run sees the identical holdout. A diverged training run scores the worst
    possible fitness instead of aborting the search.
    """
    from .lexicon import build_vocabularies

    train_lex, holdout_lex = _prepare_fitness_split(lexicon, config)
    g_vocab, p_vocab = build_vocabularies(lexicon)
    model_seed = config.seed if seed is None else seed
    model = build_model(genome, g_vocab, p_vocab, max_len=config.max_len,
                        seed=model_seed)
    n_params = param_count(model)
    tc = TrainConfig(
        max_epochs=config.fitness_epochs,
        batch_size=config.fitness_batch_size,
        learning_rate=config.learning_rate,
        seed=model_seed,
        early_stop=False,
    )
    try:
        train(model, train_lex, tc)
        report = evaluate(model, holdout_lex)
        wer, per = report.wer, report.per
    except TrainingDiverged as e:
        log.warning("genome %s diverged at step %d; fitness set to %.0f",
                    genome_to_dict(genome), e.step, DIVERGED_FITNESS)
        wer = per = DIVERGED_FITNESS
    return EvaluatedGenome(
        genome=genome, fitness_wer=wer, fitness_per=per,
        param_count=n_params, generation_born=generation_born,
    )


FitnessFn = Callable[[Genome, int, int], EvaluatedGenome]


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    slot: int
    result: EvaluatedGenome
    cached: bool

    def to_dict(self) -> dict:
        d = self.result.to_dict()
        d.update({"generation": self.generation, "slot": self.slot,
                  "cached": self.cached})
        return d


def run_es(lexicon: Lexicon | None, architecture: str, config: EsConfig,
           fitness_fn: FitnessFn | None = None,
           ) -> tuple[EvaluatedGenome, list[GenerationRecord]]:
    """Full evolution-strategy search.

    fitness_fn(genome, generation, slot) may replace the training-based
    default (used by tests and rigged searches). Fitness failures are logged
    and scored as worst, never aborting the run. Returns the best evaluated
    genome and the complete generation log (population_size x generations
    records).
    """
    if fitness_fn is None:
        if lexicon is None:
            raise ConfigError("run_es needs a lexicon unless fitness_fn is given")

        def fitness_fn(genome: Genome, generation: int, slot: int) -> EvaluatedGenome:
            return fitness(genome, lexicon, config,
                           seed=derived_seed(config.seed, generation, slot),
                           generation_born=generation)

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xE5]))
    population = init_population(config, architecture,
                                 rng=np.random.default_rng(config.seed))
    cache: dict[Genome, EvaluatedGenome] = {}
    records: list[GenerationRecord] = []

    def evaluate_population(generation: int) -> list[EvaluatedGenome]:
        pending = [(slot, genome) for slot, genome in enumerate(population)
                   if genome not in cache]
        if config.jobs > 1 and len(pending) > 1:
            with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                futures = {
                    slot: pool.submit(fitness_fn, genome, generation, slot)
                    for slot, genome in pending
                }
                fresh = {slot: f.result() for slot, f in futures.items()}
        else:
            fresh = {slot: fitness_fn(genome, generation, slot)
                     for slot, genome in pending}
        results = []
        for slot, genome in enumerate(population):
            cached = genome in cache
            result = cache[genome] if cached else fresh[slot]
            cache.setdefault(genome, result)
            records.append(GenerationRecord(
                generation=generation, slot=slot, result=result, cached=cached
            ))
            results.append(result)
        return results

    n_elite = max(1, int(round(config.elite_fraction * config.population_size)))
    best: EvaluatedGenome | None = None
    for generation in range(config.generations):
        evaluated = evaluate_population(generation)
        ranked = sorted(evaluated, key=EvaluatedGenome.rank_key)
        if best is None or ranked[0].rank_key() < best.rank_key():
            best = ranked[0]
        if generation == config.generations - 1:
            break
        elites = [r.genome for r in ranked[:n_elite]]
        pool = list(elites)
        for r in ranked[n_elite:]:
            if rng.random() < config.lessfit_parent_prob:
                pool.append(r.genome)
        children: list[Genome] = []
        while len(children) < config.population_size - n_elite:
            child = breed((pool[rng.integers(len(pool))],
                           pool[rng.integers(len(pool))]),
                          rng, config.mutation_prob_per_gene)
            # like init_population: re-roll already-seen children up to 20
            # times (fresh parent draws each time), then allow the duplicate
            for _ in range(20):
                if child not in cache and child not in children:
                    break
                child = breed((pool[rng.integers(len(pool))],
                               pool[rng.integers(len(pool))]),
                              rng, config.mutation_prob_per_gene)
            children.append(child)
        population = elites + children
    assert best is not None
    return best, records


def save_generation_log(records: Sequence[GenerationRecord], path: str | Path) -> None:
    """JSON-lines log: one evaluated genome per line."""
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r.to_dict(), ensure_ascii=False) + "\n")


def best_so_far_series(records: Sequence[GenerationRecord]) -> list[float]:
    """Best observed fitness after each generation (non-increasing)."""
    by_gen: dict[int, list[float]] = {}
    for r in records:
        by_gen.setdefault(r.generation, []).append(r.result.fitness_wer)
    series = []
    best = float("inf")
    for gen in sorted(by_gen):
        best = min(best, min(by_gen[gen]))
        series.append(best)
    return series
