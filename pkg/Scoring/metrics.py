import csv
import io
import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .exceptions import KeyMismatch, MetricsError
from .serializers import EvalReportSerializer, first_error

logger = logging.getLogger(__name__)

HISTOGRAM_EDGES = np.arange(1.0, 5.5, 0.5)


@dataclass(frozen=True)
class PaperError:
    id: str
    predicted: float
    label: float
    error: float


@dataclass(frozen=True)
class EvalReport:
    rmse: float
    mae: float
    n: int
    per_paper: tuple
    mean_predicted: float
    mean_label: float
    var_predicted: float
    var_label: float
    cosine_similarity: Optional[float] = None
    # reserved; never computed here
    bertscore: Optional[float] = None

    def with_similarity(self, value):
        return replace(self, cosine_similarity=value)


def rmse(predicted, labels):
    errors = np.asarray(predicted, dtype=float) - np.asarray(labels, dtype=float)
    return float(np.sqrt(np.mean(errors ** 2)))


def evaluate(predictions, labels):
    """RMSE, MAE and per-paper errors for two maps keyed by paper id."""
    only_labeled = set(labels) - set(predictions)
    only_predicted = set(predictions) - set(labels)
    if only_labeled or only_predicted:
        raise KeyMismatch(only_labeled, only_predicted)
    if not predictions:
        raise MetricsError('nothing to evaluate: no predictions')

    ids = sorted(predictions)
    predicted = np.array([predictions[i] for i in ids], dtype=float)
    label = np.array([labels[i] for i in ids], dtype=float)
    errors = predicted - label
    return EvalReport(
        rmse=float(np.sqrt(np.mean(errors ** 2))),
        mae=float(np.mean(np.abs(errors))),
        n=len(ids),
        per_paper=tuple(
            PaperError(id=i, predicted=float(p), label=float(y), error=float(e))
            for i, p, y, e in zip(ids, predicted, label, errors)
        ),
        mean_predicted=float(predicted.mean()),
        mean_label=float(label.mean()),
        var_predicted=float(predicted.var()),
        var_label=float(label.var()),
    )


def evaluate_results(results):
    """Evaluate PaperResult records, ignoring papers without a label."""
    labeled = [r for r in results if r.label is not None]
    skipped = len(results) - len(labeled)
    if skipped:
        logger.info('Skipping %d unlabeled papers in evaluation', skipped)
    return evaluate({r.paper_id: r.predicted for r in labeled}, {r.paper_id: r.label for r in labeled})


def _joined(texts):
    if isinstance(texts, str):
        return texts
    return '\n'.join(t for t in texts if t)


def cosine_reason_similarity(reasons, comments, embedder):
    """Mean over papers of cos(embed(reasons of paper), embed(comments of paper)).

    ``reasons`` and ``comments`` hold one entry per paper, either a text or a
    list of texts which is concatenated before embedding.
    """
    if not reasons or not comments:
        raise MetricsError('cosine similarity needs non-empty reasons and comments')
    if len(reasons) != len(comments):
        raise MetricsError(f'{len(reasons)} reason entries but {len(comments)} comment entries')
    left = [_joined(r) for r in reasons]
    right = [_joined(c) for c in comments]
    vectors = np.asarray(embedder.embed(left + right), dtype=float)
    a, b = vectors[:len(left)], vectors[len(left):]
    norms = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
    if np.any(norms == 0):
        raise MetricsError('embedder returned a zero vector')
    cosines = np.einsum('ij,ij->i', a, b) / norms
    return float(np.clip(cosines.mean(), -1.0, 1.0))


def distribution_summary(values):
    values = np.asarray(values, dtype=float)
    counts, edges = np.histogram(values, bins=HISTOGRAM_EDGES)
    return {
        'mean': float(values.mean()) if values.size else None,
        'variance': float(values.var()) if values.size else None,
        'histogram': {f'{lo:.1f}-{hi:.1f}': int(c) for lo, hi, c in zip(edges[:-1], edges[1:], counts)},
    }


def predictions_csv(report):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(['id', 'predicted', 'label', 'error'])
    for row in report.per_paper:
        writer.writerow([row.id, f'{row.predicted:.6f}', f'{row.label:.6f}', f'{row.error:.6f}'])
    return buffer.getvalue()


def report_from_dict(data):
    serializer = EvalReportSerializer(data=data)
    if not serializer.is_valid():
        field, message = first_error(serializer.errors)
        raise MetricsError(f'invalid evaluation report: {field}: {message}')
    values = dict(serializer.validated_data)
    values['per_paper'] = tuple(PaperError(**row) for row in values['per_paper'])
    return EvalReport(**values)
