from django.conf import settings

from Scoring.corpus import dump_dataset, label_statistics, load_dataset, split_dataset
from Scoring.management.base import HspimCommand


class Command(HspimCommand):
    help = 'Converts a peer-review corpus export into hspim-json and prints label statistics per split'

    def add_arguments(self, parser):
        parser.add_argument('--dataset', required=True, help='Corpus file or directory')
        parser.add_argument('--format', default='hspim-json', help='Reader for the corpus (hspim-json, peerread)')
        parser.add_argument('--out', help='hspim-json file to write')
        parser.add_argument('--train-fraction', dest='train_fraction', type=float,
                            help='Assign papers without a split to train/test with this train share')
        parser.add_argument('--override-splits', dest='override_splits', action='store_true',
                            help='Reassign every paper, not only those without a split')
        parser.add_argument('--seed', type=int)

    def run(self, **options):
        dataset = load_dataset(options['dataset'], options['format'])
        if options.get('train_fraction') is not None:
            seed = options['seed'] if options.get('seed') is not None else settings.HSPIM['SEED']
            dataset = split_dataset(dataset, options['train_fraction'], seed, override=options['override_splits'])
        if options.get('out'):
            dump_dataset(dataset, options['out'])
            self.stdout.write(f'Wrote {options["out"]}')

        labeled = sum(1 for p in dataset.papers if p.labeled)
        self.stdout.write(f'Dataset {dataset.name}: {dataset.n} papers, {labeled} labeled')
        for split, stats in label_statistics(dataset).items():
            self.stdout.write(
                f'  {split:<11} count={stats["count"]:<5} mean={stats["mean"]:.4f} variance={stats["variance"]:.4f}'
            )
        self.stdout.write(self.style.SUCCESS('Ingest complete'))
