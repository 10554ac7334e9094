"""Search over question-prompt combinations.

The elitist genetic algorithm drives the joint and two-step strategies;
random search and simulated annealing are single-candidate baselines.
Section pruning searches section-type masks for a fixed combination.

Every searcher talks to a fitness context exposing ``fitness(individual,
papers)`` and ``llm_calls``; ``PipelineContext`` is the one backed by the
scoring pipeline. Random streams are derived from (seed, stream, ...) so the
result does not depend on evaluation order or worker count.
"""
import csv
import io
import itertools
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from django.conf import settings

from .aggregator import aggregate, surviving
from .corpus import ground_truth
from .exceptions import ConfigError, HspimError, OptimizerError
from .metrics import rmse
from .pipeline import prepare_chunks, score_records
from .questions import SLOT_COUNT, Individual, default_individual, individual_from_dict
from .segmenter import SECTION_TYPES
from .serializers import GARunReportSerializer, first_error

logger = logging.getLogger(__name__)

# Random stream tags
JOINT, COMMON, SPECIFIC, RANDOM, ANNEALING, BATCH = range(6)

ALL_SLOTS = tuple(range(SLOT_COUNT))
COMMON_SLOT = (0,)
SPECIFIC_SLOTS = tuple(range(1, SLOT_COUNT))


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 10
    iterations: int = 5
    mutation_rate: float = 0.10
    elite_count: Optional[int] = None
    seed: int = 0
    batch_size: int = 20
    fixed_batch: bool = False
    target_fitness: Optional[float] = None
    two_step_split: float = 0.5
    workers: int = 1

    def __post_init__(self):
        if self.population_size < 1:
            raise ConfigError('population_size must be at least 1')
        if self.iterations < 1:
            raise ConfigError('iterations must be at least 1')
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ConfigError(f'mutation_rate must lie in [0, 1], got {self.mutation_rate}')
        if self.elite_count is None:
            object.__setattr__(self, 'elite_count', max(1, math.floor(0.2 * self.population_size)))
        if not 1 <= self.elite_count <= self.population_size:
            raise ConfigError(f'elite_count must lie in [1, {self.population_size}], got {self.elite_count}')
        if self.batch_size < 1:
            raise ConfigError('batch_size must be at least 1')
        if not 0.0 < self.two_step_split < 1.0:
            raise ConfigError('two_step_split must lie in (0, 1)')
        if self.workers < 1:
            raise ConfigError('workers must be at least 1')

    @property
    def parent_count(self):
        return math.ceil(self.population_size / 2)

    @classmethod
    def from_settings(cls, **overrides):
        values = dict(settings.HSPIM['GA'])
        values.setdefault('seed', settings.HSPIM['SEED'])
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True)
class PruningConfig:
    subset_size: int = 3

    def __post_init__(self):
        if not 1 <= self.subset_size <= len(SECTION_TYPES):
            raise ConfigError(f'subset_size must lie in [1, {len(SECTION_TYPES)}], got {self.subset_size}')


@dataclass(frozen=True)
class GenerationRecord:
    index: int
    best_fitness: float
    mean_fitness: float
    best_individual: Individual
    phase: str = 'joint'


@dataclass(frozen=True)
class GARunReport:
    strategy: str
    generations: tuple
    best_individual: Optional[Individual]
    best_fitness: Optional[float]
    llm_calls: int


@dataclass(frozen=True)
class PruneResult:
    mask: frozenset
    rmse: float
    evaluated: int
    skipped: int


class PipelineContext:
    """Fitness through the scoring pipeline, memoized per (combination, paper, mask)."""

    def __init__(self, bank, gateway, config):
        self.bank = bank
        self.gateway = gateway
        self.config = config
        self._lock = threading.Lock()
        self._chunks = {}
        self._records = {}

    @property
    def aggregation(self):
        return self.config.aggregation

    @property
    def llm_calls(self):
        return self.gateway.calls

    def chunks(self, paper):
        with self._lock:
            cached = self._chunks.get(paper.id)
        if cached is None:
            cached = prepare_chunks(paper, self.gateway, self.config)
            with self._lock:
                self._chunks[paper.id] = cached
        return cached

    def records(self, individual, paper, section_mask=None):
        key = (individual.slots, paper.id, section_mask)
        with self._lock:
            cached = self._records.get(key)
        if cached is None:
            config = replace(self.config, aggregation=self.aggregation.masked(section_mask))
            cached = score_records(self.chunks(paper), individual, self.bank, self.gateway, config)
            with self._lock:
                self._records[key] = cached
        return cached

    def predict(self, individual, paper):
        mask = self.aggregation.section_mask
        return aggregate(self.records(individual, paper, mask), self.aggregation)

    def fitness(self, individual, papers):
        return fitness(individual, papers, self)


def fitness(individual, papers, ctx):
    """RMSE of the pipeline's predictions against ground truth over ``papers``."""
    papers = list(papers)
    labels = [ground_truth(p).innovation for p in papers]
    workers = getattr(ctx.config, 'workers', 1)
    if workers > 1 and len(papers) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            predicted = list(pool.map(lambda p: ctx.predict(individual, p), papers))
    else:
        predicted = [ctx.predict(individual, p) for p in papers]
    return rmse(predicted, labels)


def crossover(a, b, rng, bank=None):
    """Each slot comes from ``a`` or ``b`` with probability 1/2."""
    if bank is not None and not (a.fits(bank) and b.fits(bank)):
        raise OptimizerError(f'parents {a.slots} and {b.slots} do not both belong to the bank')
    take_a = rng.random(SLOT_COUNT) < 0.5
    return Individual.from_slots(x if pick else y for x, y, pick in zip(a.slots, b.slots, take_a))


def mutate(x, bank, mu, rng, free_slots=ALL_SLOTS):
    """Resample each free slot uniformly from its own set with probability ``mu``."""
    if not 0.0 <= mu <= 1.0:
        raise OptimizerError(f'mutation rate must lie in [0, 1], got {mu}')
    hits = rng.random(SLOT_COUNT) < mu
    draws = [rng.integers(0, size) for size in bank.shape]
    slots = list(x.slots)
    for slot in free_slots:
        if hits[slot]:
            slots[slot] = draws[slot]
    return Individual.from_slots(slots)


def section_masks(size):
    """All masks of ``size`` section types, in lexicographic order of the canonical type order."""
    return [frozenset(combo) for combo in itertools.combinations(SECTION_TYPES, size)]


def _random_slots(bank, rng, base, free_slots):
    slots = list(base.slots)
    for slot in free_slots:
        slots[slot] = rng.integers(0, bank.shape[slot])
    return Individual.from_slots(slots)


class _Batches:
    """Fitness batch per generation: resampled each time, or the first one throughout."""

    def __init__(self, papers, config):
        self.papers = list(papers)
        self.config = config

    def __call__(self, generation):
        if self.config.batch_size >= len(self.papers):
            return self.papers
        if self.config.fixed_batch:
            generation = 0
        rng = np.random.default_rng([self.config.seed, BATCH, generation])
        picked = sorted(rng.choice(len(self.papers), size=self.config.batch_size, replace=False))
        return [self.papers[int(i)] for i in picked]


def _evaluate(population, batch, ctx, workers):
    if workers > 1 and len(population) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda ind: ctx.fitness(ind, batch), population))
    return [ctx.fitness(ind, batch) for ind in population]


def _report(strategy, generations, ctx):
    best = generations[-1] if generations else None
    return GARunReport(
        strategy=strategy,
        generations=tuple(generations),
        best_individual=best.best_individual if best else None,
        best_fitness=best.best_fitness if best else None,
        llm_calls=ctx.llm_calls,
    )


def _evolve(config, bank, population, iterations, batches, ctx, phase, stream, free_slots, trace, offset=0):
    """Run the elitist GA for ``iterations`` generations, appending to ``trace``."""
    size = config.population_size
    for generation in range(iterations):
        index = offset + generation
        scores = _evaluate(population, batches(index), ctx, config.workers)
        ranking = sorted(range(size), key=lambda i: (scores[i], i))
        best = ranking[0]
        trace.append(GenerationRecord(
            index=index,
            best_fitness=float(scores[best]),
            mean_fitness=float(np.mean(scores)),
            best_individual=population[best],
            phase=phase,
        ))
        logger.info('Generation %d (%s): best %.4f mean %.4f individual %s',
                    index, phase, scores[best], np.mean(scores), population[best].slots)
        if config.target_fitness is not None and scores[best] <= config.target_fitness:
            logger.info('Target fitness %.4f reached at generation %d', config.target_fitness, index)
            break
        if generation == iterations - 1:
            break

        elites = [population[i] for i in ranking[:config.elite_count]]
        parents = [population[i] for i in ranking[:config.parent_count]]
        children = []
        for k in range(size - config.elite_count):
            rng = np.random.default_rng([config.seed, stream, index, k])
            a = parents[rng.integers(len(parents))]
            b = parents[rng.integers(len(parents))]
            children.append(mutate(crossover(a, b, rng), bank, config.mutation_rate, rng, free_slots))
        population = elites + children
    return trace


def _initial_population(config, bank, base, stream, free_slots):
    population = [base]
    for k in range(1, config.population_size):
        rng = np.random.default_rng([config.seed, stream, 0, k])
        population.append(_random_slots(bank, rng, base, free_slots))
    return population


def _guarded(strategy, ctx, trace, run):
    try:
        return run()
    except OptimizerError:
        raise
    except HspimError as exc:
        raise OptimizerError(f'{strategy} search aborted: {exc}', partial_report=_report(strategy, trace, ctx)) from exc


def run_joint(config, bank, papers, ctx):
    """Search the common and all specific questions together."""
    trace = []
    batches = _Batches(papers, config)

    def run():
        population = _initial_population(config, bank, default_individual(), JOINT, ALL_SLOTS)
        _evolve(config, bank, population, config.iterations, batches, ctx, 'joint', JOINT, ALL_SLOTS, trace)
        return _report('joint', trace, ctx)

    return _guarded('joint', ctx, trace, run)


def split_iterations(config):
    if config.iterations < 2:
        raise ConfigError('the two-step strategy needs at least 2 iterations')
    first = int(round(config.iterations * config.two_step_split))
    first = min(max(first, 1), config.iterations - 1)
    return first, config.iterations - first


def run_two_step(config, bank, papers, ctx):
    """Optimize the common question first, then the specific questions with it frozen."""
    first, second = split_iterations(config)
    trace = []
    batches = _Batches(papers, config)

    def run():
        population = _initial_population(config, bank, default_individual(), COMMON, COMMON_SLOT)
        _evolve(config, bank, population, first, batches, ctx, 'common', COMMON, COMMON_SLOT, trace)
        winner = trace[-1].best_individual
        population = _initial_population(config, bank, winner, SPECIFIC, SPECIFIC_SLOTS)
        _evolve(config, bank, population, second, batches, ctx, 'specific', SPECIFIC, SPECIFIC_SLOTS, trace,
                offset=trace[-1].index + 1)
        return _report('two_step', trace, ctx)

    return _guarded('two_step', ctx, trace, run)


def prune_sections(subset_size, individual, papers, ctx):
    """Exhaustive search for the section-type mask with the lowest train RMSE."""
    subset_size = PruningConfig(subset_size).subset_size
    papers = list(papers)
    labels = [ground_truth(p).innovation for p in papers]
    try:
        records = [ctx.records(individual, paper) for paper in papers]
    except HspimError as exc:
        raise OptimizerError(f'pruning aborted: {exc}') from exc

    best_mask, best_rmse, evaluated, skipped = None, None, 0, 0
    for mask in section_masks(subset_size):
        if any(not surviving(paper_records, mask) for paper_records in records):
            skipped += 1
            logger.info('Skipping mask %s: some paper has no chunk of these types',
                        [t.value for t in SECTION_TYPES if t in mask])
            continue
        aggregation = ctx.aggregation.masked(mask)
        predicted = [aggregate(paper_records, aggregation) for paper_records in records]
        value = rmse(predicted, labels)
        evaluated += 1
        # strict comparison keeps the lexicographically first of tied masks
        if best_rmse is None or value < best_rmse:
            best_mask, best_rmse = mask, value
    if best_mask is None:
        raise OptimizerError(f'no mask of size {subset_size} leaves every paper a chunk')
    logger.info('Best mask %s with train RMSE %.4f (%d evaluated, %d skipped)',
                [t.value for t in SECTION_TYPES if t in best_mask], best_rmse, evaluated, skipped)
    return PruneResult(mask=best_mask, rmse=best_rmse, evaluated=evaluated, skipped=skipped)


def run_random_search(budget, bank, papers, ctx, config):
    """Evaluate ``budget`` candidates, the default combination first, keeping the best."""
    if budget < 1:
        raise ConfigError('budget must be at least 1')
    trace = []
    batches = _Batches(papers, config)

    def run():
        best, best_fitness = None, None
        for step in range(budget):
            if step == 0:
                candidate = default_individual()
            else:
                rng = np.random.default_rng([config.seed, RANDOM, step])
                candidate = _random_slots(bank, rng, default_individual(), ALL_SLOTS)
            value = ctx.fitness(candidate, batches(step))
            if best_fitness is None or value < best_fitness:
                best, best_fitness = candidate, value
            trace.append(GenerationRecord(step, float(best_fitness), float(value), best, 'random'))
        return _report('random', trace, ctx)

    return _guarded('random', ctx, trace, run)


def _neighbour(individual, bank, rng):
    """Move one slot to a different question."""
    movable = [slot for slot, size in enumerate(bank.shape) if size > 1]
    if not movable:
        return individual
    slot = movable[rng.integers(len(movable))]
    current = individual.slots[slot]
    value = rng.integers(0, bank.shape[slot] - 1)
    slots = list(individual.slots)
    slots[slot] = value + 1 if value >= current else value
    return Individual.from_slots(slots)


def run_simulated_annealing(budget, bank, papers, ctx, config, t0=0.5, alpha=0.9):
    """Annealing from the default combination with temperature ``t0 * alpha**k``."""
    if budget < 1:
        raise ConfigError('budget must be at least 1')
    if t0 < 0 or not 0 < alpha <= 1:
        raise ConfigError('annealing needs t0 >= 0 and alpha in (0, 1]')
    trace = []
    batches = _Batches(papers, config)

    def run():
        current = default_individual()
        current_fitness = ctx.fitness(current, batches(0))
        best, best_fitness = current, current_fitness
        trace.append(GenerationRecord(0, float(best_fitness), float(current_fitness), best, 'annealing'))
        for step in range(1, budget):
            rng = np.random.default_rng([config.seed, ANNEALING, step])
            batch = batches(step)
            if not config.fixed_batch:
                current_fitness = ctx.fitness(current, batch)
            candidate = _neighbour(current, bank, rng)
            value = ctx.fitness(candidate, batch)
            delta = value - current_fitness
            temperature = t0 * alpha ** (step - 1)
            accept = delta <= 0 or (temperature > 0 and rng.random() < math.exp(-delta / temperature))
            if accept:
                current, current_fitness = candidate, value
            if current_fitness < best_fitness:
                best, best_fitness = current, current_fitness
            trace.append(GenerationRecord(step, float(best_fitness), float(current_fitness), best, 'annealing'))
        return _report('annealing', trace, ctx)

    return _guarded('annealing', ctx, trace, run)


def fitness_trace_csv(report):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(['generation', 'phase', 'best_fitness', 'mean_fitness', 'best_individual'])
    for record in report.generations:
        writer.writerow([
            record.index, record.phase, f'{record.best_fitness:.6f}', f'{record.mean_fitness:.6f}',
            '-'.join(str(s) for s in record.best_individual.slots),
        ])
    return buffer.getvalue()


def report_from_dict(data):
    """Rebuild a GARunReport from its JSON form."""
    serializer = GARunReportSerializer(data=data)
    if not serializer.is_valid():
        field, message = first_error(serializer.errors)
        raise OptimizerError(f'invalid optimizer report: {field}: {message}')
    validated = serializer.validated_data
    best = validated['best_individual']
    return GARunReport(
        strategy=validated['strategy'],
        generations=tuple(
            GenerationRecord(
                index=g['index'],
                best_fitness=g['best_fitness'],
                mean_fitness=g['mean_fitness'],
                best_individual=individual_from_dict(g['best_individual']),
                phase=g['phase'],
            )
            for g in validated['generations']
        ),
        best_individual=individual_from_dict(best) if best is not None else None,
        best_fitness=validated['best_fitness'],
        llm_calls=validated['llm_calls'],
    )
