"""Genetic algorithm over flat kernel-bank genomes.

A genome is the n kernels' w*w weights laid end to end, every gene in
[-2, 2]. Fitness of a genome = cross-validated weighted error (lower is
better) of the classifier trained on features convolved with that bank.
Folds are fixed once per run so fitness differences reflect kernels only,
and fitness values are cached by genome content.
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import HardivoxError, ValidationError
from .evaluation import FitnessWeights, cross_validate, stratified_folds
from .filters import Dataset, KernelBank, convolve_features, gaussian_bank
from .svm import SvmConfig
from .volumes import FeatureVolume

GENE_RANGE = (-2.0, 2.0)


@dataclass(frozen=True)
class GaConfig:
    """Evolution parameters; defaults match the full-scale configuration."""

    population: int = 500
    generations: int = 100
    wall_clock_budget: float = None  # seconds
    crossover_rate: float = 0.9
    crossover_points: int = 2
    mutation_rate: float = 0.1
    mutation_sigma: float = 0.2
    elites: int = 20
    seed: int = 42
    selection: int = 3  # tournament size
    eval_subsample: int = None  # fitness CV on a stratified subset; None = all
    folds: int = 6

    def __post_init__(self):
        if self.population < 2:
            raise ValidationError(f"population must be >= 2, got {self.population}")
        if not 0 <= self.crossover_rate <= 1:
            raise ValidationError("crossover_rate must be in [0, 1]")
        if not 0 <= self.mutation_rate <= 1:
            raise ValidationError("mutation_rate must be in [0, 1]")
        if not 0 <= self.elites < self.population:
            raise ValidationError("elites must satisfy 0 <= elites < population")
        if self.generations < 1:
            raise ValidationError("generations must be >= 1")
        if self.selection < 1:
            raise ValidationError("tournament size must be >= 1")
        if self.mutation_sigma < 0:
            raise ValidationError("mutation_sigma must be >= 0")
        if self.wall_clock_budget is not None and self.wall_clock_budget <= 0:
            raise ValidationError("wall_clock_budget must be > 0 seconds")
        if self.eval_subsample is not None and self.eval_subsample < 1:
            raise ValidationError("eval_subsample must be >= 1")
        if self.folds < 2:
            raise ValidationError("folds must be >= 2")


@dataclass
class Genome:
    """Flat kernel weights plus a lazily filled fitness."""

    genes: np.ndarray
    cached_fitness: float = None

    def __post_init__(self):
        g = np.asarray(self.genes, dtype=np.float64)
        if g.ndim != 1:
            raise ValidationError(f"genes must be a flat array, got shape {g.shape}")
        lo, hi = GENE_RANGE
        if not np.all(np.isfinite(g)) or np.any(g < lo) or np.any(g > hi):
            raise ValidationError(f"genes must be finite and within [{lo}, {hi}]")
        self.genes = g


def genome_to_bank(genome: Genome, n: int, w: int) -> KernelBank:
    """Kernel i reads genes [i*w*w, (i+1)*w*w) in row-major order."""
    if len(genome.genes) != n * w * w:
        raise ValidationError(
            f"genome length {len(genome.genes)} != n*w*w = {n * w * w}"
        )
    return KernelBank(n=n, w=w, kernels=genome.genes.reshape(n, w, w).copy())


def bank_to_genome(bank: KernelBank) -> Genome:
    return Genome(genes=bank.kernels.reshape(-1).copy())


def initial_population(n: int, w: int, config: GaConfig):
    """1 Gaussian-seeded individual, 50% blended with it, the rest uniform."""
    rng = np.random.default_rng([int(config.seed), 0])
    length = n * w * w
    seed_genes = bank_to_genome(gaussian_bank(n, w)).genes
    pop = [Genome(genes=seed_genes.copy())]
    n_blend = config.population // 2
    lo, hi = GENE_RANGE
    for _ in range(n_blend):
        rand = rng.uniform(lo, hi, size=length)
        pop.append(Genome(genes=(seed_genes + rand) / 2.0))
    while len(pop) < config.population:
        pop.append(Genome(genes=rng.uniform(lo, hi, size=length)))
    return pop


def _rebuild_volume(dataset: Dataset, n: int):
    """Scatter dataset rows back onto a dense grid by (slice, x, y)."""
    prov = dataset.provenance
    Z = int(prov[:, 0].max()) + 1
    X = int(prov[:, 1].max()) + 1
    Y = int(prov[:, 2].max()) + 1
    values = np.zeros((X, Y, Z, n))
    values[prov[:, 1], prov[:, 2], prov[:, 0]] = dataset.features
    return values, (X, Y, Z)


def _stratified_subsample(dataset: Dataset, budget: int, k: int, seed: int):
    """Proportional per-class draw with a floor of 8*k per class, so every
    fold keeps a workable share of even the rarest class."""
    labels = dataset.labels
    total = len(dataset)
    rng = np.random.default_rng([int(seed), 2])
    keep = []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        want = max(int(round(budget * len(members) / total)), min(8 * k, len(members)))
        want = min(want, len(members))
        keep.append(rng.choice(members, size=want, replace=False))
    return np.sort(np.concatenate(keep))


class _FitnessOracle:
    """Evaluates genomes: convolve the full grid, gather the evaluation rows,
    cross-validate with the run's fixed folds. Results cached by content."""

    def __init__(self, dataset, n, w, svm_config, weights, config):
        self.n = n
        self.w = w
        self.svm_config = svm_config
        self.weights = weights
        self.values, dims = _rebuild_volume(dataset, n)
        self.dims = dims
        self.feature_kind = _kind_for_n(n)
        if config.eval_subsample is not None and config.eval_subsample < len(dataset):
            idx = _stratified_subsample(
                dataset, config.eval_subsample, config.folds, config.seed
            )
        else:
            idx = np.arange(len(dataset))
        self.eval_set = Dataset(
            features=dataset.features[idx],
            labels=dataset.labels[idx],
            provenance=dataset.provenance[idx],
        )
        self.folds = stratified_folds(self.eval_set, config.folds, config.seed)
        self.k = config.folds
        self.seed = config.seed
        self.cache = {}
        self.evaluations = 0

    def __call__(self, genome: Genome) -> float:
        if genome.cached_fitness is not None:
            return genome.cached_fitness
        key = genome.genes.tobytes()
        fit = self.cache.get(key)
        if fit is None:
            fit = self._evaluate(genome)
            self.cache[key] = fit
            self.evaluations += 1
        genome.cached_fitness = fit
        return fit

    def _evaluate(self, genome):
        try:
            bank = genome_to_bank(genome, self.n, self.w)
            fv = FeatureVolume(
                dims=self.dims, feature_kind=self.feature_kind, values=self.values
            )
            conv = convolve_features(fv, bank)
            prov = self.eval_set.provenance
            rows = conv.values[prov[:, 1], prov[:, 2], prov[:, 0]]
            ds = Dataset(
                features=rows, labels=self.eval_set.labels, provenance=prov
            )
            report = cross_validate(
                ds,
                self.svm_config,
                self.weights,
                k=self.k,
                seed=self.seed,
                folds=self.folds,
            )
            return report.fitness
        except (HardivoxError, np.linalg.LinAlgError, FloatingPointError):
            return math.inf


def _kind_for_n(n):
    # any registered kind with matching dimensionality keeps FeatureVolume
    # validation happy; the GA never interprets the tag
    from .volumes import FEATURE_DIMS

    for kind, dim in FEATURE_DIMS.items():
        if dim == n:
            return kind
    raise ValidationError(f"no feature kind has dimensionality {n}")


def _tournament(rng, fitnesses, size):
    picks = rng.integers(0, len(fitnesses), size=size)
    best = picks[0]
    for p in picks[1:]:
        if fitnesses[p] < fitnesses[best]:
            best = p
    return best


def _two_point_cross(rng, a, b, points):
    length = len(a)
    child = a.copy()
    if length - 1 < points:
        return child
    cuts = np.sort(rng.choice(np.arange(1, length), size=points, replace=False))
    # swap alternating segments between cut points
    take_b = False
    prev = 0
    for cut in list(cuts) + [length]:
        if take_b:
            child[prev:cut] = b[prev:cut]
        take_b = not take_b
        prev = cut
    return child


def evolve(
    dataset: Dataset,
    n: int,
    w: int,
    svm_config: SvmConfig = SvmConfig(),
    weights: FitnessWeights = FitnessWeights(),
    config: GaConfig = GaConfig(),
    on_generation=None,
):
    """Run the GA; returns (best genome ever, history).

    History rows are (generation, best_fitness, mean_fitness) with mean over
    the finite fitnesses of that generation. `on_generation`, when given, is
    called as on_generation(gen_index, population, fitnesses) after each
    generation's evaluation, e.g. to checkpoint.
    """
    if dataset.n != n:
        raise ValidationError(f"dataset has {dataset.n} features, expected {n}")
    if w < 1 or w % 2 == 0:
        raise ValidationError(f"kernel width must be odd and >= 1, got {w}")
    oracle = _FitnessOracle(dataset, n, w, svm_config, weights, config)
    rng = np.random.default_rng([int(config.seed), 1])
    population = initial_population(n, w, config)
    lo, hi = GENE_RANGE

    start = time.monotonic()
    history = []
    best_genome = None
    best_fitness = math.inf
    for gen in range(config.generations):
        fitnesses = np.array([oracle(g) for g in population])
        order = np.argsort(fitnesses, kind="stable")
        if fitnesses[order[0]] < best_fitness:
            best_fitness = float(fitnesses[order[0]])
            best_genome = Genome(
                genes=population[order[0]].genes.copy(),
                cached_fitness=best_fitness,
            )
        finite = fitnesses[np.isfinite(fitnesses)]
        mean = float(finite.mean()) if len(finite) else math.inf
        history.append((gen, float(fitnesses[order[0]]), mean))
        if on_generation is not None:
            on_generation(gen, population, fitnesses)
        if gen == config.generations - 1:
            break
        if (
            config.wall_clock_budget is not None
            and time.monotonic() - start >= config.wall_clock_budget
        ):
            break

        next_pop = [population[i] for i in order[: config.elites]]
        while len(next_pop) < config.population:
            i = _tournament(rng, fitnesses, config.selection)
            if rng.uniform() < config.crossover_rate:
                j = _tournament(rng, fitnesses, config.selection)
                genes = _two_point_cross(
                    rng,
                    population[i].genes,
                    population[j].genes,
                    config.crossover_points,
                )
            else:
                genes = population[i].genes.copy()
            mutate = rng.uniform(size=len(genes)) < config.mutation_rate
            noise = rng.normal(0.0, config.mutation_sigma, size=len(genes))
            genes[mutate] += noise[mutate]
            np.clip(genes, lo, hi, out=genes)
            next_pop.append(Genome(genes=genes))
        population = next_pop
    return best_genome, history
