import json
import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError
from django.utils import timezone

from Scoring.exceptions import (
    ConfigError, DatasetNotFound, HspimError, QuestionError, UnknownFormat,
)
from Scoring.metrics import cosine_reason_similarity, evaluate_results
from Scoring.pipeline import score_batch
from Scoring.questions import default_individual, load_individual
from Scoring.serializers import EvalReportSerializer, PaperResultSerializer

logger = logging.getLogger(__name__)

# exit 2: the invocation itself is wrong; exit 1: the run failed
USAGE_ERRORS = (ConfigError, DatasetNotFound, UnknownFormat, QuestionError)


class HspimCommand(BaseCommand):
    """Shared flags, error-to-exit-code mapping and artifact writing."""

    def add_arguments(self, parser):
        parser.add_argument('--config', help='JSON file with configuration overrides')
        parser.add_argument('--seed', type=int)
        parser.add_argument('--out', help='Directory that receives run directories')
        parser.add_argument('--run-id', dest='run_id', help='Run directory name (default: timestamp)')

    def add_pipeline_arguments(self, parser):
        parser.add_argument('--dataset')
        parser.add_argument('--format', help='Dataset reader (default hspim-json)')
        parser.add_argument('--split')
        parser.add_argument('--mode', help='sspim, hspim_naive or hspim')
        parser.add_argument('--provider')
        parser.add_argument('--bank', help='Question bank file')
        parser.add_argument('--individual', help='Question combination file (mode hspim)')
        parser.add_argument('--aggregation', help='hspim or hspim_plus')
        parser.add_argument('--norm', help='l1, l2 or linf (hspim_plus)')
        parser.add_argument('--sections', help='Comma-separated section mask')
        parser.add_argument('--no-confidence-weights', dest='no_confidence_weights', action='store_true')
        parser.add_argument('--classify-mode', dest='classify_mode', help='strict or lenient')
        parser.add_argument('--critical-scoring', dest='critical_scoring', action='store_true')
        parser.add_argument('--merge', action='append', help='Section group to merge, e.g. Approach+Experiments')
        parser.add_argument('--unmatched-noise', dest='unmatched_noise', type=float)
        parser.add_argument('--qa-temperature', dest='qa_temperature', type=float)
        parser.add_argument('--score-temperature', dest='score_temperature', type=float)
        parser.add_argument('--workers', type=int)
        parser.add_argument('--cache-dir', dest='cache_dir')
        parser.add_argument('--no-cache', dest='no_cache', action='store_true')

    def handle(self, *args, **options):
        try:
            return self.run(**options)
        except CommandError:
            raise
        except USAGE_ERRORS as exc:
            raise CommandError(str(exc), returncode=2) from exc
        except HspimError as exc:
            logger.error('%s failed: %s', self.__module__.rsplit('.', 1)[-1], exc)
            raise CommandError(str(exc), returncode=1) from exc

    def run(self, **options):
        raise NotImplementedError

    def run_directory(self, config):
        run_id = config.run_id or timezone.now().strftime('%Y%m%d-%H%M%S')
        path = Path(config.out) / run_id
        path.mkdir(parents=True, exist_ok=True)
        return path

    def write_json(self, path, payload):
        Path(path).write_text(json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + '\n',
                              encoding='utf-8')
        self.stdout.write(f'Wrote {path}')

    def write_text(self, path, text):
        Path(path).write_text(text, encoding='utf-8')
        self.stdout.write(f'Wrote {path}')

    def table(self, rows):
        width = max(len(str(label)) for label, _ in rows)
        for label, value in rows:
            if isinstance(value, float):
                value = f'{value:.4f}'
            self.stdout.write(f'  {str(label).ljust(width)}  {value}')

    # Shared by score and optimize --apply

    def select_individual(self, config, bank):
        if config.mode == 'sspim':
            return None
        if config.mode == 'hspim_naive':
            return default_individual()
        if not config.individual:
            raise ConfigError('mode hspim needs --individual (a best_individual.json or ga_report.json)')
        return load_individual(config.individual, bank)

    def score_split(self, papers, individual, bank, gateway, config, run_dir, prefix=''):
        results = score_batch(papers, individual, bank, gateway, config.pipeline)
        self.write_json(run_dir / f'{prefix}scores.json', PaperResultSerializer(results, many=True).data)
        if not any(r.label is not None for r in results):
            self.stdout.write(self.style.WARNING('No labeled papers: skipping evaluation'))
            return None
        report = evaluate_results(results)
        if config.similarity:
            report = report.with_similarity(reason_similarity(papers, results, gateway))
        self.write_json(run_dir / f'{prefix}report.json', EvalReportSerializer(report).data)
        self.table([
            ('papers', report.n),
            ('rmse', report.rmse),
            ('mae', report.mae),
            ('mean predicted', report.mean_predicted),
            ('mean label', report.mean_label),
        ] + ([('cosine similarity', report.cosine_similarity)] if report.cosine_similarity is not None else []))
        return report


def reason_similarity(papers, results, gateway):
    """Cosine similarity of chunk reasons and review comments, over papers that have comments."""
    comments_by_id = {p.id: [r.comment for r in p.reviews if r.comment.strip()] for p in papers}
    reasons, comments = [], []
    for result in results:
        paper_comments = comments_by_id.get(result.paper_id)
        if paper_comments:
            reasons.append([record.score.reason for record in result.records])
            comments.append(paper_comments)
    if not reasons:
        logger.warning('No review comments available: cosine similarity skipped')
        return None
    return cosine_reason_similarity(reasons, comments, gateway)
