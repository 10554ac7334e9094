from Scoring.conf import resolve
from Scoring.corpus import load_dataset
from Scoring.exceptions import ConfigError
from Scoring.gateway import build_gateway
from Scoring.management.base import HspimCommand
from Scoring.questions import load_bank


class Command(HspimCommand):
    help = 'Scores the papers of a split and writes per-paper scores and an evaluation report'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        self.add_pipeline_arguments(parser)
        parser.add_argument('--similarity', action='store_true',
                            help='Also report cosine similarity between reasons and review comments')

    def run(self, **options):
        config = resolve(options)
        if not config.dataset:
            raise ConfigError('--dataset is required')
        dataset = load_dataset(config.dataset, config.format)
        papers = dataset.by_split(config.split)
        if not papers:
            raise ConfigError(f'dataset {dataset.name!r} has no papers in split {config.split!r}')
        bank = load_bank(config.bank)
        individual = self.select_individual(config, bank)
        gateway = build_gateway(config.provider, config.cache_dir, use_cache=config.use_cache)

        run_dir = self.run_directory(config)
        self.write_json(run_dir / 'config.json', config.as_dict())
        self.stdout.write(f'Scoring {len(papers)} papers with mode {config.mode}')
        self.score_split(papers, individual, bank, gateway, config, run_dir)
        self.stdout.write(self.style.SUCCESS(
            f'Scored {len(papers)} papers ({gateway.calls} provider calls, {gateway.cache_hits} cache hits)'
        ))
