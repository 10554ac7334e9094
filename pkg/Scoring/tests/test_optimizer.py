import logging
from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase

from Scoring.corpus import Paper, RawSection, Review
from Scoring.exceptions import ConfigError, OptimizerError, PipelineError
from Scoring.optimizer import (
    COMMON_SLOT, GAConfig, PipelineContext, _neighbour, crossover, fitness_trace_csv, mutate, prune_sections,
    report_from_dict, run_joint, run_random_search, run_simulated_annealing, run_two_step, section_masks,
    split_iterations,
)
from Scoring.pipeline import PipelineConfig
from Scoring.questions import Individual, default_bank, default_individual
from Scoring.segmenter import SECTION_TYPES, SectionType
from Scoring.serializers import GARunReportSerializer

from .helpers import HammingContext, LabelEchoProvider, fixture_dataset, make_bank, mock_gateway

OPTIMUM = (3, 7, 1, 10, 4, 4, 9, 2, 6, 5)


class QuietTestCase(SimpleTestCase):
    def setUp(self):
        logging.disable(logging.INFO)
        self.addCleanup(logging.disable, logging.NOTSET)


class GAConfigTests(SimpleTestCase):
    def test_defaults(self):
        config = GAConfig()
        self.assertEqual(config.elite_count, 2)
        self.assertEqual(config.parent_count, 5)
        self.assertEqual(GAConfig(population_size=3).elite_count, 1)

    def test_elite_bounds(self):
        self.assertEqual(GAConfig(population_size=1, elite_count=1).elite_count, 1)
        with self.assertRaises(ConfigError):
            GAConfig(population_size=4, elite_count=5)
        with self.assertRaises(ConfigError):
            GAConfig(mutation_rate=1.5)

    def test_split_iterations(self):
        self.assertEqual(split_iterations(GAConfig(iterations=4)), (2, 2))
        self.assertEqual(split_iterations(GAConfig(iterations=10, two_step_split=0.3)), (3, 7))
        with self.assertRaises(ConfigError):
            split_iterations(GAConfig(iterations=1))

    def test_from_settings_overrides(self):
        config = GAConfig.from_settings(population_size=6, seed=9, elite_count=None)
        self.assertEqual((config.population_size, config.seed, config.elite_count), (6, 9, 1))


class OperatorTests(SimpleTestCase):
    def setUp(self):
        self.bank = make_bank()

    def test_crossover_takes_each_slot_from_a_parent(self):
        a = Individual.from_slots((1,) * 10)
        b = Individual.from_slots((2,) * 10)
        rng = np.random.default_rng(5)
        for _ in range(20):
            child = crossover(a, b, rng, self.bank)
            self.assertTrue(set(child.slots) <= {1, 2})

    def test_crossover_rejects_foreign_parents(self):
        with self.assertRaises(OptimizerError):
            crossover(Individual.from_slots((20,) * 10), default_individual(), np.random.default_rng(0), self.bank)

    def test_mutation(self):
        x = Individual.from_slots(OPTIMUM)
        rng = np.random.default_rng(8)
        self.assertEqual(mutate(x, self.bank, 0.0, rng), x)
        for _ in range(20):
            y = mutate(x, self.bank, 1.0, rng, free_slots=COMMON_SLOT)
            self.assertEqual(y.slots[1:], x.slots[1:])
            self.assertTrue(y.fits(self.bank))
        with self.assertRaises(OptimizerError):
            mutate(x, self.bank, -0.1, rng)

    def test_crossover_slot_frequencies(self):
        a = Individual.from_slots((1,) * 10)
        b = Individual.from_slots((2,) * 10)
        rng = np.random.default_rng(13)
        self.assertEqual(crossover(a, a, rng, self.bank), a)
        children = np.array([crossover(a, b, rng).slots for _ in range(10_000)])
        for share in (children == 1).mean(axis=0):
            self.assertAlmostEqual(share, 0.5, delta=0.02)

    def test_mutation_change_rate(self):
        x = Individual.from_slots(OPTIMUM)
        rng = np.random.default_rng(21)
        single = make_bank((1,) * 10)
        self.assertEqual(mutate(default_individual(), single, 1.0, rng), default_individual())
        changed = np.array([mutate(x, self.bank, 0.1, rng).slots for _ in range(20_000)]) != np.array(OPTIMUM)
        for rate in changed.mean(axis=0):
            self.assertAlmostEqual(rate, 0.1 * (1 - 1 / 11), delta=0.01)

    def test_neighbour_moves_one_slot(self):
        rng = np.random.default_rng(4)
        x = Individual.from_slots(OPTIMUM)
        for _ in range(50):
            y = _neighbour(x, self.bank, rng)
            self.assertEqual(sum(a != b for a, b in zip(x.slots, y.slots)), 1)
            self.assertTrue(y.fits(self.bank))

    def test_section_masks(self):
        masks = section_masks(3)
        self.assertEqual(len(masks), 84)
        self.assertEqual(len(set(masks)), 84)
        self.assertEqual(masks[0], frozenset({SectionType.ABSTRACT, SectionType.INTRODUCTION, SectionType.RELATED_WORK}))


class PlantedOptimumTests(QuietTestCase):
    """Elitist GA on a Hamming landscape with a known optimum."""

    def run_ga(self, seed, iterations):
        ctx = HammingContext(OPTIMUM)
        config = GAConfig(
            population_size=10, iterations=iterations, seed=seed, fixed_batch=True, target_fitness=0.0,
        )
        return run_joint(config, make_bank(), [], ctx), ctx

    def test_optimum_found(self):
        found = 0
        for seed in range(100):
            report, _ = self.run_ga(seed, 300)
            found += report.best_fitness == 0.0
            if report.best_fitness == 0.0:
                self.assertEqual(report.best_individual.slots, OPTIMUM)
        self.assertGreaterEqual(found, 95)

    def test_best_fitness_never_increases_under_fixed_batch(self):
        for seed in range(100):
            report, _ = self.run_ga(seed, 50)
            best = [g.best_fitness for g in report.generations]
            self.assertEqual(best, sorted(best, reverse=True))

    def test_reproducible(self):
        first, _ = self.run_ga(7, 40)
        again, _ = self.run_ga(7, 40)
        self.assertEqual(first, again)


class SearcherComparisonTests(QuietTestCase):
    def test_ga_beats_random_search_at_matched_budget(self):
        bank = make_bank()
        wins = 0
        for seed in range(50):
            ga_ctx = HammingContext(OPTIMUM)
            ga = run_joint(GAConfig(population_size=10, iterations=50, seed=seed), bank, [], ga_ctx)
            rs_ctx = HammingContext(OPTIMUM)
            rs = run_random_search(ga_ctx.evaluations, bank, [], rs_ctx, GAConfig(seed=seed))
            self.assertEqual(rs_ctx.evaluations, ga_ctx.evaluations)
            wins += ga.best_fitness <= rs.best_fitness
        self.assertGreaterEqual(wins, 35)


class BaselineTests(QuietTestCase):
    def setUp(self):
        super().setUp()
        self.bank = make_bank()

    def test_random_search_starts_from_default(self):
        ctx = HammingContext(OPTIMUM)
        report = run_random_search(30, self.bank, [], ctx, GAConfig(seed=1))
        self.assertEqual(len(report.generations), 30)
        self.assertEqual(report.generations[0].best_individual, default_individual())
        best = [g.best_fitness for g in report.generations]
        self.assertEqual(best, sorted(best, reverse=True))
        self.assertEqual(report.strategy, 'random')

    def test_hill_climbing_never_accepts_worse(self):
        ctx = HammingContext(OPTIMUM)
        report = run_simulated_annealing(300, self.bank, [], ctx, GAConfig(seed=2, fixed_batch=True), t0=0.0)
        current = [g.mean_fitness for g in report.generations]
        self.assertEqual(current, sorted(current, reverse=True))
        self.assertLessEqual(report.best_fitness, 3.0)

    def test_hot_annealing_accepts_worse_moves(self):
        ctx = HammingContext(OPTIMUM)
        report = run_simulated_annealing(200, self.bank, [], ctx, GAConfig(seed=3), t0=5.0, alpha=1.0)
        current = [g.mean_fitness for g in report.generations]
        self.assertTrue(any(b > a for a, b in zip(current, current[1:])))

    def test_invalid_schedule(self):
        with self.assertRaises(ConfigError):
            run_simulated_annealing(10, self.bank, [], HammingContext(OPTIMUM), GAConfig(), alpha=0.0)
        with self.assertRaises(ConfigError):
            run_random_search(0, self.bank, [], HammingContext(OPTIMUM), GAConfig())


class TwoStepTests(QuietTestCase):
    def test_phases(self):
        config = GAConfig(population_size=6, iterations=6, seed=4)
        report = run_two_step(config, make_bank(), [], HammingContext(OPTIMUM))
        phases = [g.phase for g in report.generations]
        self.assertEqual(phases, ['common'] * 3 + ['specific'] * 3)
        self.assertEqual([g.index for g in report.generations], list(range(6)))
        for record in report.generations[:3]:
            self.assertEqual(record.best_individual.slots[1:], (0,) * 9)
        frozen = report.generations[2].best_individual.common_index
        for record in report.generations[3:]:
            self.assertEqual(record.best_individual.common_index, frozen)


class FailingContext(HammingContext):
    def __init__(self, optimum, fail_at):
        super().__init__(optimum)
        self.fail_at = fail_at

    def fitness(self, individual, papers):
        if self.evaluations >= self.fail_at:
            raise PipelineError('provider unavailable')
        return super().fitness(individual, papers)


class PartialReportTests(QuietTestCase):
    def test_failure_keeps_completed_generations(self):
        config = GAConfig(population_size=4, iterations=5, seed=0)
        with self.assertRaises(OptimizerError) as caught:
            run_joint(config, make_bank(), [], FailingContext(OPTIMUM, fail_at=10))
        partial = caught.exception.partial_report
        self.assertEqual(len(partial.generations), 2)
        self.assertEqual(partial.best_individual, partial.generations[-1].best_individual)


class ReportOutputTests(QuietTestCase):
    def setUp(self):
        super().setUp()
        config = GAConfig(population_size=4, iterations=3, seed=0)
        self.report = run_joint(config, make_bank(), [], HammingContext(OPTIMUM))

    def test_fitness_trace_csv(self):
        lines = fitness_trace_csv(self.report).splitlines()
        self.assertEqual(lines[0], 'generation,phase,best_fitness,mean_fitness,best_individual')
        self.assertEqual(len(lines), 4)
        self.assertTrue(lines[1].startswith('0,joint,'))
        self.assertEqual(len(lines[1].split(',')), 5)

    def test_report_from_serialized_data(self):
        data = GARunReportSerializer(self.report).data
        self.assertEqual(report_from_dict(data), self.report)

    def test_invalid_report(self):
        with self.assertRaises(OptimizerError):
            report_from_dict({'strategy': 'joint'})


def echo_paper(paper_id, review, keep, label, drop=()):
    """Paper with one section per type; sections in ``keep`` carry the paper's label."""
    headings = {
        SectionType.ABSTRACT: 'Abstract',
        SectionType.INTRODUCTION: 'Introduction',
        SectionType.RELATED_WORK: 'Related Work',
        SectionType.APPROACH: 'Approach',
        SectionType.ANALYSIS_THEORY: 'Theory',
        SectionType.EXPERIMENTS: 'Experiments',
        SectionType.EXPERIMENT_ANALYSIS: 'Analysis',
        SectionType.DISCUSSION: 'Discussion',
        SectionType.CONCLUSION: 'Conclusion',
    }
    sections = tuple(
        RawSection(heading, f'LABEL={label}\nSection text.' if t in keep else 'Filler text.')
        for t, heading in headings.items() if t not in drop
    )
    return Paper(id=paper_id, raw_sections=sections, reviews=(review,), split='train')


class PruneSectionsTests(QuietTestCase):
    KEEP = frozenset({SectionType.INTRODUCTION, SectionType.APPROACH, SectionType.CONCLUSION})

    def papers(self, drop=()):
        return [
            echo_paper('e1', Review(4, 4), self.KEEP, 4.0),
            echo_paper('e2', Review(3, 4), self.KEEP, 3.5),
            echo_paper('e3', Review(2, 3), self.KEEP, 2.5, drop=drop),
        ]

    def context(self):
        return PipelineContext(default_bank(), mock_gateway(LabelEchoProvider()), PipelineConfig())

    def test_known_mask_recovered(self):
        first = prune_sections(3, default_individual(), self.papers(), self.context())
        self.assertEqual(first.mask, self.KEEP)
        self.assertAlmostEqual(first.rmse, 0.0)
        self.assertEqual((first.evaluated, first.skipped), (84, 0))
        self.assertEqual(prune_sections(3, default_individual(), self.papers(), self.context()), first)

    def test_masks_without_chunks_skipped(self):
        result = prune_sections(3, default_individual(), self.papers(drop={SectionType.DISCUSSION}), self.context())
        self.assertEqual((result.evaluated, result.skipped), (56, 28))
        self.assertEqual(result.mask, self.KEEP)

    def test_full_mask_matches_unmasked_fitness(self):
        papers = self.papers(drop={SectionType.DISCUSSION})
        papers[0] = replace(papers[0], raw_sections=papers[0].raw_sections + (
            RawSection('Ethics Statement', 'No human subjects were involved.'),
        ))
        ctx = self.context()
        result = prune_sections(9, default_individual(), papers, ctx)
        self.assertEqual(result.mask, frozenset(SECTION_TYPES))
        self.assertEqual((result.evaluated, result.skipped), (1, 0))
        self.assertGreater(result.rmse, 0.0)
        self.assertAlmostEqual(result.rmse, ctx.fitness(default_individual(), papers))
        unmatched = [r for r in ctx.records(default_individual(), papers[0]) if r.section_type is SectionType.UNMATCHED]
        self.assertEqual(len(unmatched), 1)

    def test_every_mask_skipped(self):
        papers = [
            echo_paper('e1', Review(4, 4), self.KEEP, 4.0, drop=SECTION_TYPES[:4]),
            echo_paper('e2', Review(3, 4), self.KEEP, 3.5, drop=SECTION_TYPES[4:]),
        ]
        with self.assertRaises(OptimizerError):
            prune_sections(1, default_individual(), papers, self.context())

    def test_subset_size_range(self):
        with self.assertRaises(ConfigError):
            prune_sections(0, default_individual(), self.papers(), self.context())


class PipelineContextTests(QuietTestCase):
    def test_memoized_fitness(self):
        ctx = PipelineContext(default_bank(), mock_gateway(), PipelineConfig())
        papers = fixture_dataset().by_split('train')[:2]
        value = ctx.fitness(default_individual(), papers)
        calls = ctx.llm_calls
        self.assertGreater(calls, 0)
        self.assertEqual(ctx.fitness(default_individual(), papers), value)
        self.assertEqual(ctx.llm_calls, calls)

    def test_question_for_absent_section_type_is_irrelevant(self):
        keep = frozenset({SectionType.APPROACH})
        papers = [
            echo_paper('a1', Review(4, 4), keep, 4.0, drop={SectionType.DISCUSSION}),
            echo_paper('a2', Review(2, 3), keep, 2.5, drop={SectionType.DISCUSSION}),
        ]
        discussion = 1 + SECTION_TYPES.index(SectionType.DISCUSSION)
        slots = list(OPTIMUM)
        first = Individual.from_slots(slots)
        slots[discussion] = (slots[discussion] + 1) % 11
        second = Individual.from_slots(slots)
        ctx = PipelineContext(default_bank(), mock_gateway(), PipelineConfig(mode='hspim'))
        self.assertEqual(ctx.fitness(first, papers), ctx.fitness(second, papers))

    def test_ga_over_pipeline(self):
        ctx = PipelineContext(default_bank(), mock_gateway(), PipelineConfig(mode='hspim'))
        config = GAConfig(population_size=2, iterations=2, batch_size=2, seed=1)
        report = run_joint(config, default_bank(), fixture_dataset().by_split('train'), ctx)
        self.assertEqual(len(report.generations), 2)
        self.assertEqual(report.llm_calls, ctx.gateway.calls)
        self.assertGreaterEqual(report.best_fitness, 0.0)
