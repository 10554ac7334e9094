from Scoring.aggregator import mask_names
from Scoring.conf import describe_mask, resolve
from Scoring.corpus import load_dataset
from Scoring.exceptions import ConfigError, OptimizerError
from Scoring.gateway import build_gateway
from Scoring.management.base import HspimCommand
from Scoring.optimizer import (
    PipelineContext, fitness_trace_csv, prune_sections, run_joint, run_random_search,
    run_simulated_annealing, run_two_step,
)
from Scoring.questions import default_individual, load_bank, load_individual
from Scoring.serializers import GARunReportSerializer, IndividualSerializer


class Command(HspimCommand):
    help = 'Searches question combinations (or a section mask) on the train split'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        self.add_pipeline_arguments(parser)
        parser.add_argument('--strategy', help='joint, two_step or pruning')
        parser.add_argument('--searcher', help='ga, random or annealing')
        parser.add_argument('--population', type=int)
        parser.add_argument('--iterations', type=int)
        parser.add_argument('--mutation-rate', dest='mutation_rate', type=float)
        parser.add_argument('--elite', type=int)
        parser.add_argument('--batch-size', dest='batch_size', type=int)
        parser.add_argument('--fixed-batch', dest='fixed_batch', action='store_true')
        parser.add_argument('--prune-size', dest='prune_size', type=int)
        parser.add_argument('--apply', action='store_true', help='Re-score the test split with the winner')

    def run(self, **options):
        config = resolve(options, command_defaults={'mode': 'hspim', 'strategy': 'joint', 'split': 'train'})
        if not config.dataset:
            raise ConfigError('--dataset is required')
        dataset = load_dataset(config.dataset, config.format)
        train = [p for p in dataset.by_split(config.split) if p.labeled]
        if not train:
            raise ConfigError(f'no labeled papers in split {config.split!r}')
        bank = load_bank(config.bank)
        gateway = build_gateway(config.provider, config.cache_dir, use_cache=config.use_cache)
        ctx = PipelineContext(bank, gateway, config.pipeline)

        run_dir = self.run_directory(config)
        self.write_json(run_dir / 'config.json', config.as_dict())
        self.stdout.write(f'Optimizing on {len(train)} papers: strategy {config.strategy}, searcher {config.searcher}')

        if config.strategy == 'pruning':
            winner = load_individual(config.individual, bank) if config.individual else default_individual()
            result = prune_sections(config.prune_size, winner, train, ctx)
            mask = result.mask
            self.write_json(run_dir / 'prune.json', {
                'mask': mask_names(mask),
                'rmse': result.rmse,
                'evaluated': result.evaluated,
                'skipped': result.skipped,
                'individual': IndividualSerializer(winner).data,
                'llm_calls': ctx.llm_calls,
            })
            self.stdout.write(f'Winning mask: {describe_mask(mask)} (train RMSE {result.rmse:.4f})')
        else:
            report = self.search(config, bank, train, ctx, run_dir)
            winner, mask = report.best_individual, config.pipeline.aggregation.section_mask
            for generation in report.generations:
                self.stdout.write(
                    f'  generation {generation.index} ({generation.phase}): '
                    f'best {generation.best_fitness:.4f} mean {generation.mean_fitness:.4f}'
                )
            self.write_run_report(report, run_dir)
            self.stdout.write(f'Best fitness {report.best_fitness:.4f} with {winner.slots} '
                              f'({report.llm_calls} provider calls)')

        if config.apply:
            test = dataset.by_split('test')
            if not test:
                raise ConfigError('--apply needs papers in the test split')
            self.stdout.write(f'Re-scoring {len(test)} test papers with the winner')
            self.score_split(test, winner, bank, gateway, config.with_mask(mask), run_dir, prefix='test_')
        self.stdout.write(self.style.SUCCESS('Optimization complete'))

    def search(self, config, bank, train, ctx, run_dir):
        budget = config.ga.population_size * config.ga.iterations
        try:
            if config.strategy == 'two_step':
                return run_two_step(config.ga, bank, train, ctx)
            if config.searcher == 'random':
                return run_random_search(budget, bank, train, ctx, config.ga)
            if config.searcher == 'annealing':
                return run_simulated_annealing(
                    budget, bank, train, ctx, config.ga,
                    t0=float(config.annealing['t0']), alpha=float(config.annealing['alpha']),
                )
            return run_joint(config.ga, bank, train, ctx)
        except OptimizerError as exc:
            if exc.partial_report is not None and exc.partial_report.generations:
                self.write_run_report(exc.partial_report, run_dir)
                self.stdout.write(self.style.WARNING('Wrote the partial report of the aborted search'))
            raise

    def write_run_report(self, report, run_dir):
        self.write_json(run_dir / 'ga_report.json', GARunReportSerializer(report).data)
        self.write_text(run_dir / 'fitness_trace.csv', fitness_trace_csv(report))
        if report.best_individual is not None:
            self.write_json(run_dir / 'best_individual.json', IndividualSerializer(report.best_individual).data)
