"""Per-chunk QA augmentation and innovation scoring.

A paper flows through segment -> classify -> (compose question, generate QA)
-> score each chunk -> aggregate. ``sspim`` skips the QA turn; ``hspim_naive``
uses the default question combination; ``hspim`` uses the supplied one.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from django.conf import settings

from . import prompts
from .aggregator import AggregationConfig, aggregate, surviving
from .corpus import ground_truth
from .exceptions import ConfigError, GatewayError, NoSurvivingChunks, PipelineError
from .gateway import clamp_score
from .providers import SCORE_KEYS, SCORE_PLUS_KEYS
from .questions import compose, compose_common_only, default_individual
from .segmenter import SectionType, classify, inject_unmatched, merge_sections, segment

logger = logging.getLogger(__name__)

MODES = ('sspim', 'hspim_naive', 'hspim')


@dataclass(frozen=True)
class QAPair:
    question: str
    answer: str

    def __post_init__(self):
        if not self.question.strip() or not self.answer.strip():
            raise PipelineError('a QA pair needs a non-empty question and answer')


@dataclass(frozen=True)
class ChunkScore:
    novelty: float
    confidence: float
    reason: str = ''

    def as_dict(self):
        return {'novelty': self.novelty, 'confidence': self.confidence}


@dataclass(frozen=True)
class ChunkScorePlus:
    novelty: float
    contribution: float
    feasibility: float
    conf_novelty: float
    conf_contribution: float
    conf_feasibility: float
    reason: str = ''

    def as_dict(self):
        return {
            'novelty': self.novelty,
            'contribution': self.contribution,
            'feasibility': self.feasibility,
            'conf_novelty': self.conf_novelty,
            'conf_contribution': self.conf_contribution,
            'conf_feasibility': self.conf_feasibility,
        }


@dataclass(frozen=True)
class ChunkRecord:
    paper_id: str
    index: int
    heading: str
    section_type: SectionType
    score: object
    qa: Optional[QAPair] = None


@dataclass(frozen=True)
class PaperResult:
    paper_id: str
    predicted: float
    label: Optional[float]
    records: tuple


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = 'hspim_naive'
    classify_mode: str = 'lenient'
    qa_temperature: float = 1.0
    score_temperature: float = 0.0
    chunk_char_budget: Optional[int] = 6000
    classify_body_chars: int = 1200
    critical_scoring: bool = False
    merge_groups: tuple = ()
    unmatched_noise: float = 0.0
    noise_seed: int = 0
    workers: int = 1
    aggregation: AggregationConfig = field(default_factory=AggregationConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f'unknown mode {self.mode!r}; expected one of {list(MODES)}')
        if self.classify_mode not in ('strict', 'lenient'):
            raise ConfigError(f'unknown classification mode {self.classify_mode!r}')
        for name in ('qa_temperature', 'score_temperature'):
            if not 0.0 <= getattr(self, name) <= 2.0:
                raise ConfigError(f'{name} must lie in [0, 2]')
        if self.chunk_char_budget is not None and self.chunk_char_budget < 1:
            raise ConfigError('chunk_char_budget must be positive')
        if not 0.0 <= self.unmatched_noise <= 1.0:
            raise ConfigError('unmatched_noise must lie in [0, 1]')
        if self.workers < 1:
            raise ConfigError('workers must be at least 1')

    @property
    def use_qa(self):
        return self.mode != 'sspim'

    @property
    def plus(self):
        return self.aggregation.mode == 'hspim_plus'

    @classmethod
    def from_settings(cls, **overrides):
        hspim = settings.HSPIM
        values = {
            'mode': hspim['MODE'],
            'classify_mode': hspim['CLASSIFY_MODE'],
            'qa_temperature': hspim['QA_TEMPERATURE'],
            'score_temperature': hspim['SCORE_TEMPERATURE'],
            'chunk_char_budget': hspim['CHUNK_CHAR_BUDGET'],
            'classify_body_chars': hspim['CLASSIFY_BODY_CHARS'],
            'workers': hspim['WORKERS'],
            'aggregation': AggregationConfig.from_dict(hspim['AGGREGATION']),
        }
        values.update(overrides)
        return cls(**values)


def _json_hint(keys):
    return {'type': 'object', 'required': list(keys)}


def generate_qa(chunk, question, gateway, qa_temperature=1.0, budget=None):
    """Ask ``question`` about the chunk; the question is echoed back in the pair."""
    if not question or not question.strip():
        raise PipelineError('empty question', paper_id=chunk.paper_id, chunk_index=chunk.index)
    section_type = chunk.section_type or SectionType.UNMATCHED
    user = prompts.QA_USER.format(
        section_type=section_type.value, body=prompts.truncate(chunk.body, budget), question=question,
    )
    try:
        answer = gateway.complete(
            gateway.request(prompts.QA_SYSTEM, user, purpose='qa', temperature=qa_temperature)
        ).text.strip()
    except GatewayError as exc:
        raise PipelineError(str(exc), paper_id=chunk.paper_id, chunk_index=chunk.index) from exc
    return QAPair(question=question, answer=answer)


def _score_request(chunk, qa, gateway, temperature, budget, plus, critical):
    section_type = chunk.section_type or SectionType.UNMATCHED
    keys = (SCORE_PLUS_KEYS if plus else SCORE_KEYS) + ('reason',)
    request = gateway.request(
        prompts.score_system(plus=plus, critical=critical),
        prompts.score_user(section_type.value, prompts.truncate(chunk.body, budget), qa),
        purpose='score_plus' if plus else 'score',
        temperature=temperature,
        json_schema_hint=_json_hint(keys),
    )
    return gateway.complete_json(request, required_keys=keys)


def score_chunk(chunk, qa, gateway, score_temperature=0.0, budget=6000, critical=False):
    record = _score_request(chunk, qa, gateway, score_temperature, budget, False, critical)
    return ChunkScore(
        novelty=clamp_score(record['novelty_score'], 'novelty_score'),
        confidence=clamp_score(record['confidence_score'], 'confidence_score'),
        reason=str(record['reason']),
    )


def score_chunk_plus(chunk, qa, gateway, score_temperature=0.0, budget=6000, critical=False):
    record = _score_request(chunk, qa, gateway, score_temperature, budget, True, critical)
    values = {key: clamp_score(record[key], key) for key in SCORE_PLUS_KEYS}
    return ChunkScorePlus(
        novelty=values['novelty_score'],
        contribution=values['contribution_score'],
        feasibility=values['feasibility_score'],
        conf_novelty=values['novelty_confidence'],
        conf_contribution=values['contribution_confidence'],
        conf_feasibility=values['feasibility_confidence'],
        reason=str(record['reason']),
    )


def chunk_question(chunk, individual, bank):
    # Unmatched chunks only get the common question
    if chunk.section_type in (None, SectionType.UNMATCHED):
        return compose_common_only(individual, bank)
    return compose(individual, chunk.section_type, bank)


def prepare_chunks(paper, gateway, config):
    """Segment and classify a paper, then apply section merging and label noise."""
    chunks = segment(paper)
    chunks = classify(
        chunks, gateway,
        mode=config.classify_mode, body_chars=config.classify_body_chars, workers=config.workers,
    )
    if config.merge_groups:
        chunks = merge_sections(chunks, config.merge_groups)
    if config.unmatched_noise:
        chunks = inject_unmatched(chunks, config.unmatched_noise, seed=config.noise_seed)
    return chunks


def score_records(chunks, individual, bank, gateway, config):
    """Score every chunk that survives the section mask, in chunk order."""
    kept = surviving(chunks, config.aggregation.section_mask)
    if not kept:
        raise NoSurvivingChunks()
    if config.use_qa and individual is None:
        individual = default_individual()
    scorer = score_chunk_plus if config.plus else score_chunk

    def run(chunk):
        qa = None
        try:
            if config.use_qa:
                question = chunk_question(chunk, individual, bank)
                qa = generate_qa(chunk, question, gateway, config.qa_temperature, config.chunk_char_budget)
            score = scorer(
                chunk, qa, gateway,
                score_temperature=config.score_temperature,
                budget=config.chunk_char_budget,
                critical=config.critical_scoring,
            )
        except GatewayError as exc:
            raise PipelineError(str(exc), paper_id=chunk.paper_id, chunk_index=chunk.index) from exc
        return ChunkRecord(
            paper_id=chunk.paper_id,
            index=chunk.index,
            heading=chunk.heading,
            section_type=chunk.section_type,
            score=score,
            qa=qa,
        )

    if config.workers > 1 and len(kept) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(run, kept))
    return [run(chunk) for chunk in kept]


def score_paper(paper, individual, bank, gateway, config):
    """Return (predicted innovation, per-chunk records) for one paper."""
    chunks = prepare_chunks(paper, gateway, config)
    records = score_records(chunks, individual, bank, gateway, config)
    predicted = aggregate(records, config.aggregation)
    logger.debug('Paper %s: %d chunks scored, predicted %.4f', paper.id, len(records), predicted)
    return predicted, records


def score_batch(papers, individual, bank, gateway, config):
    """Score papers concurrently; results come back in input order."""

    def run(paper):
        predicted, records = score_paper(paper, individual, bank, gateway, config)
        label = ground_truth(paper).innovation if paper.labeled else None
        return PaperResult(paper_id=paper.id, predicted=predicted, label=label, records=tuple(records))

    papers = list(papers)
    if config.workers > 1 and len(papers) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(run, papers))
    else:
        results = [run(paper) for paper in papers]
    logger.info('Scored %d papers (%d provider calls so far)', len(results), gateway.calls)
    return results
