import json
from pathlib import Path

from Scoring.exceptions import ConfigError
from Scoring.management.base import HspimCommand
from Scoring.metrics import distribution_summary, predictions_csv, report_from_dict
from Scoring.optimizer import fitness_trace_csv
from Scoring.optimizer import report_from_dict as run_report_from_dict

REPORT_FILES = ('report.json', 'test_report.json', 'ga_report.json')


class Command(HspimCommand):
    help = 'Renders evaluation reports and fitness traces as tables and CSV files'

    def add_arguments(self, parser):
        parser.add_argument('--input', required=True, help='Run directory or report file')
        parser.add_argument('--out', help='Directory for the CSV files (default: next to the input)')

    def run(self, **options):
        path = Path(options['input'])
        if path.is_dir():
            inputs = [path / name for name in REPORT_FILES if (path / name).exists()]
        else:
            inputs = [path] if path.exists() else []
        if not inputs:
            raise ConfigError(f'no report found at {path}')
        out = Path(options['out']) if options.get('out') else (path if path.is_dir() else path.parent)
        out.mkdir(parents=True, exist_ok=True)

        for report_file in inputs:
            try:
                data = json.loads(report_file.read_text(encoding='utf-8'))
            except json.JSONDecodeError as exc:
                raise ConfigError(f'{report_file}: invalid JSON ({exc})') from exc
            if isinstance(data, dict) and 'generations' in data:
                self.render_run_report(report_file, data, out)
            elif isinstance(data, dict) and 'per_paper' in data:
                self.render_eval_report(report_file, data, out)
            else:
                raise ConfigError(f'{report_file}: neither an evaluation nor an optimizer report')
        self.stdout.write(self.style.SUCCESS(f'Rendered {len(inputs)} report(s)'))

    def render_eval_report(self, report_file, data, out):
        report = report_from_dict(data)
        self.stdout.write(f'{report_file.name}:')
        self.table([
            ('papers', report.n),
            ('rmse', report.rmse),
            ('mae', report.mae),
            ('mean predicted', report.mean_predicted),
            ('mean label', report.mean_label),
            ('variance predicted', report.var_predicted),
            ('variance label', report.var_label),
            ('cosine similarity', report.cosine_similarity if report.cosine_similarity is not None else '-'),
        ])
        predicted = distribution_summary([row.predicted for row in report.per_paper])
        labels = distribution_summary([row.label for row in report.per_paper])
        self.stdout.write('  distribution  predicted  label')
        for bucket in predicted['histogram']:
            self.stdout.write(f'  {bucket:<12}  {predicted["histogram"][bucket]:>9}  {labels["histogram"][bucket]:>5}')
        name = report_file.stem.replace('report', 'predictions') + '.csv'
        self.write_text(out / name, predictions_csv(report))

    def render_run_report(self, report_file, data, out):
        report = run_report_from_dict(data)
        self.stdout.write(f'{report_file.name}: strategy {report.strategy}, {report.llm_calls} provider calls')
        for generation in report.generations:
            self.stdout.write(
                f'  {generation.index:>4} {generation.phase:<9} best {generation.best_fitness:.4f} '
                f'mean {generation.mean_fitness:.4f}'
            )
        self.write_text(out / 'fitness_trace.csv', fitness_trace_csv(report))
