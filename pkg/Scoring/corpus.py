"""Peer-review corpora: loading, ground-truth innovation labels and splits."""
import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
from django.conf import settings

from .exceptions import (
    ConfigError, CorpusError, DatasetNotFound, MalformedRecord, MissingReviews, UnknownFormat,
)
from .serializers import DatasetSerializer, PaperSerializer, ReviewSerializer, first_error

logger = logging.getLogger(__name__)

SPLITS = ('train', 'validation', 'test')
READERS = {}


def register_reader(format_id):
    def decorator(func):
        READERS[format_id] = func
        return func
    return decorator


@dataclass(frozen=True)
class Review:
    originality: int
    soundness: int
    comment: str = ''


class RawSection(NamedTuple):
    heading: str
    body: str


@dataclass(frozen=True)
class Paper:
    id: str
    raw_sections: tuple
    reviews: tuple = ()
    split: Optional[str] = None

    @property
    def labeled(self):
        return bool(self.reviews)


@dataclass(frozen=True)
class Dataset:
    name: str
    papers: tuple
    schema_version: str = '1'

    def __post_init__(self):
        if not self.papers:
            raise CorpusError(f'dataset {self.name!r} has no papers')
        ids = [p.id for p in self.papers]
        if len(set(ids)) != len(ids):
            raise CorpusError(f'dataset {self.name!r} has duplicate paper ids')

    @property
    def n(self):
        return len(self.papers)

    def get(self, paper_id):
        for paper in self.papers:
            if paper.id == paper_id:
                return paper
        raise KeyError(paper_id)

    def by_split(self, split):
        if split in (None, 'all'):
            return list(self.papers)
        return [p for p in self.papers if p.split == split]


@dataclass(frozen=True)
class GroundTruthLabel:
    paper_id: str
    innovation: float


def field_map(format_id):
    default = {'originality': 'originality', 'soundness': 'soundness', 'comment': 'comment'}
    return settings.HSPIM['FIELD_MAPS'].get(format_id, default)


def load_dataset(path, format='hspim-json'):
    reader = READERS.get(format)
    if reader is None:
        raise UnknownFormat(f'unknown dataset format {format!r}; registered: {sorted(READERS)}')
    path = Path(path)
    if not path.exists():
        raise DatasetNotFound(f'dataset not found: {path}')
    dataset = reader(path, field_map(format))
    logger.info('Loaded dataset %r (%d papers) from %s', dataset.name, dataset.n, path)
    return dataset


def dump_dataset(dataset, path):
    payload = DatasetSerializer(dataset).data
    Path(path).write_text(json.dumps(payload, ensure_ascii=False, indent=2), encoding='utf-8')


def ground_truth(paper):
    """Mean over reviews of (originality + soundness) / 2."""
    if not paper.reviews:
        raise MissingReviews(paper.id)
    total = math.fsum((r.originality + r.soundness) / 2 for r in paper.reviews)
    return GroundTruthLabel(paper_id=paper.id, innovation=total / len(paper.reviews))


def split_dataset(dataset, train_fraction, seed, override=False):
    """Assign untagged papers (all papers with ``override``) to train/test.

    The assignment depends only on ``seed`` and the order of the papers.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f'train_fraction must lie in (0, 1), got {train_fraction}')
    open_positions = [i for i, p in enumerate(dataset.papers) if override or p.split is None]
    order = np.random.default_rng(seed).permutation(len(open_positions))
    n_train = int(math.floor(train_fraction * len(open_positions) + 0.5))
    assigned = {}
    for rank, k in enumerate(order):
        assigned[open_positions[int(k)]] = 'train' if rank < n_train else 'test'
    papers = tuple(
        replace(p, split=assigned[i]) if i in assigned else p
        for i, p in enumerate(dataset.papers)
    )
    return replace(dataset, papers=papers)


def label_statistics(dataset):
    """Count, mean and variance of ground-truth labels per split (and overall)."""
    groups = {}
    for paper in dataset.papers:
        if not paper.labeled:
            continue
        label = ground_truth(paper).innovation
        groups.setdefault(paper.split or 'unassigned', []).append(label)
        groups.setdefault('all', []).append(label)
    stats = {}
    for split, labels in sorted(groups.items()):
        values = np.asarray(labels)
        stats[split] = {'count': len(labels), 'mean': float(values.mean()), 'variance': float(values.var())}
    return stats


def _paper_from_record(record, fields, position):
    if not isinstance(record, dict):
        raise MalformedRecord(f'#{position}', 'paper', 'expected an object')
    paper_id = str(record.get('id', f'#{position}'))
    reviews = record.get('reviews', [])
    if not isinstance(reviews, list):
        raise MalformedRecord(paper_id, 'reviews', 'expected a list')
    data = dict(record)
    data['reviews'] = [_renamed_review(r, fields) for r in reviews]
    serializer = PaperSerializer(data=data)
    if not serializer.is_valid():
        field, message = first_error(serializer.errors)
        raise MalformedRecord(paper_id, field, message)
    return _paper_from_validated(serializer.validated_data)


def _renamed_review(review, fields):
    if not isinstance(review, dict):
        return review
    renamed = {}
    for name, source in fields.items():
        if source in review:
            renamed[name] = review[source]
    return renamed


def _paper_from_validated(data):
    return Paper(
        id=data['id'],
        raw_sections=tuple(RawSection(s['heading'], s['body']) for s in data['raw_sections']),
        reviews=tuple(Review(**r) for r in data['reviews']),
        split=data['split'],
    )


def _read_json(path):
    try:
        return json.loads(path.read_text(encoding='utf-8'))
    except UnicodeDecodeError as exc:
        raise CorpusError(f'{path}: not valid UTF-8 ({exc})') from exc
    except json.JSONDecodeError as exc:
        raise CorpusError(f'{path}: invalid JSON ({exc})') from exc


@register_reader('hspim-json')
def read_hspim_json(path, fields):
    raw = _read_json(path)
    if not isinstance(raw, dict) or not isinstance(raw.get('papers'), list):
        raise CorpusError(f'{path}: expected an object with a "papers" list')
    papers = tuple(_paper_from_record(r, fields, i) for i, r in enumerate(raw['papers']))
    return Dataset(
        name=str(raw.get('name') or path.stem),
        papers=papers,
        schema_version=str(raw.get('schema_version', '1')),
    )


PEERREAD_SPLITS = (('train', 'train'), ('dev', 'validation'), ('test', 'test'))


@register_reader('peerread')
def read_peerread(path, fields):
    """Read a PeerRead-style directory of ``reviews/`` and ``parsed_pdfs/``."""
    if not path.is_dir():
        raise CorpusError(f'{path}: the peerread reader expects a directory')
    roots = [(path / sub, split) for sub, split in PEERREAD_SPLITS if (path / sub / 'reviews').is_dir()]
    if not roots and (path / 'reviews').is_dir():
        roots = [(path, None)]
    if not roots:
        raise CorpusError(f'{path}: no reviews/ directory found')

    papers = []
    for root, split in roots:
        for review_file in sorted((root / 'reviews').glob('*.json')):
            paper = _peerread_paper(review_file, root / 'parsed_pdfs', split, fields)
            if paper is not None:
                papers.append(paper)
    return Dataset(name=path.name, papers=tuple(papers))


def _peerread_paper(review_file, parsed_dir, split, fields):
    record = _read_json(review_file)
    paper_id = str(record.get('id') or review_file.stem)
    parsed_file = parsed_dir / f'{review_file.stem}.pdf.json'
    metadata = _read_json(parsed_file).get('metadata', {}) if parsed_file.exists() else {}

    sections = []
    abstract = record.get('abstract') or metadata.get('abstractText')
    if abstract:
        sections.append(RawSection('Abstract', abstract))
    for section in metadata.get('sections') or []:
        sections.append(RawSection(section.get('heading') or '', section.get('text') or ''))
    if not any(body.strip() for _, body in sections):
        logger.warning('Skipping paper %s: no section text', paper_id)
        return None

    reviews = []
    for position, raw in enumerate(record.get('reviews') or []):
        serializer = ReviewSerializer(data=_renamed_review(raw, fields))
        if not serializer.is_valid():
            field, _ = first_error(serializer.errors)
            logger.warning('Paper %s: rejected review %d (%s)', paper_id, position, field)
            continue
        reviews.append(Review(**serializer.validated_data))
    return Paper(id=paper_id, raw_sections=tuple(sections), reviews=tuple(reviews), split=split)
