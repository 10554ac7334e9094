import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np

from . import prompts
from .exceptions import ClassificationError, GatewayError, SegmentationError

logger = logging.getLogger(__name__)


class SectionType(str, Enum):
    ABSTRACT = 'Abstract'
    INTRODUCTION = 'Introduction'
    RELATED_WORK = 'RelatedWork'
    APPROACH = 'Approach'
    ANALYSIS_THEORY = 'AnalysisTheory'
    EXPERIMENTS = 'Experiments'
    EXPERIMENT_ANALYSIS = 'ExperimentAnalysis'
    DISCUSSION = 'Discussion'
    CONCLUSION = 'Conclusion'
    UNMATCHED = 'Unmatched'

    @classmethod
    def parse(cls, label):
        """Map a free-form label onto a SectionType, or None when it names none."""
        key = ''.join(ch for ch in label.strip().strip('.`"\'*').lower() if ch.isalnum())
        return _LABEL_INDEX.get(key)


SECTION_TYPES = tuple(t for t in SectionType if t is not SectionType.UNMATCHED)

_ALIASES = {
    'methodology': SectionType.APPROACH,
    'method': SectionType.APPROACH,
    'methods': SectionType.APPROACH,
    'model': SectionType.APPROACH,
    'limitations': SectionType.DISCUSSION,
    'limitation': SectionType.DISCUSSION,
}
_LABEL_INDEX = {t.value.lower(): t for t in SectionType}
_LABEL_INDEX.update(_ALIASES)


@dataclass(frozen=True)
class SectionChunk:
    paper_id: str
    index: int
    heading: str
    body: str
    section_type: Optional[SectionType] = None

    def with_type(self, section_type):
        return replace(self, section_type=section_type)


def segment(paper):
    """One chunk per non-empty raw section, in document order."""
    chunks = []
    for heading, body in paper.raw_sections:
        if not body.strip():
            continue
        chunks.append(SectionChunk(paper_id=paper.id, index=len(chunks), heading=heading, body=body))
    if not chunks:
        raise SegmentationError(f'paper {paper.id!r}: every section is empty')
    return chunks


def classify(chunks, gateway, mode='lenient', body_chars=1200, workers=1):
    """Assign a section type to every chunk; count, order and text are preserved."""
    if mode not in ('strict', 'lenient'):
        raise ClassificationError(f'unknown classification mode {mode!r}')
    lenient = mode == 'lenient'

    def label(chunk):
        return chunk.with_type(_classify_one(chunk, gateway, lenient, body_chars))

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(label, chunks))
    return [label(chunk) for chunk in chunks]


def _classify_one(chunk, gateway, lenient, body_chars):
    system = prompts.classify_system(lenient)
    user = prompts.CLASSIFY_USER.format(heading=chunk.heading, body=chunk.body[:body_chars])
    try:
        request = gateway.request(system, user, purpose='classify')
        answer = gateway.complete(request).text
        section_type = _accept(answer, lenient)
        if section_type is None:
            gateway.evict(request)
            retry = f'{user}\n\n{prompts.classify_reprompt(answer, lenient)}'
            request = gateway.request(system, retry, purpose='classify')
            answer = gateway.complete(request).text
            section_type = _accept(answer, lenient)
            if section_type is None:
                gateway.evict(request)
    except GatewayError as exc:
        raise ClassificationError(
            f'paper {chunk.paper_id!r}, chunk {chunk.index}: {exc}',
            paper_id=chunk.paper_id, chunk_index=chunk.index,
        ) from exc

    if section_type is not None:
        return section_type
    if lenient:
        logger.warning('Chunk %s/%d: unusable label %r, marking Unmatched',
                       chunk.paper_id, chunk.index, answer.strip()[:40])
        return SectionType.UNMATCHED
    raise ClassificationError(
        f'paper {chunk.paper_id!r}, chunk {chunk.index}: unusable label {answer.strip()[:40]!r}',
        paper_id=chunk.paper_id, chunk_index=chunk.index,
    )


def _accept(answer, lenient):
    section_type = SectionType.parse(answer)
    if section_type is None:
        # tolerate a trailing explanation after the label
        words = answer.strip().split()
        section_type = SectionType.parse(words[0]) if words else None
    if section_type is SectionType.UNMATCHED and not lenient:
        return None
    return section_type


def inject_unmatched(chunks, fraction, seed=0):
    """Relabel round(fraction * len(chunks)) randomly chosen chunks as Unmatched."""
    if not 0.0 <= fraction <= 1.0:
        raise ClassificationError(f'noise fraction must lie in [0, 1], got {fraction}')
    count = int(np.floor(fraction * len(chunks) + 0.5))
    if count == 0:
        return list(chunks)
    paper_key = int(hashlib.sha256(chunks[0].paper_id.encode('utf-8')).hexdigest()[:8], 16)
    rng = np.random.default_rng([seed, paper_key])
    picked = set(int(i) for i in rng.choice(len(chunks), size=count, replace=False))
    return [c.with_type(SectionType.UNMATCHED) if i in picked else c for i, c in enumerate(chunks)]


def merge_sections(chunks, groups):
    """Concatenate the chunks of each section-type group into one chunk.

    The merged chunk takes the group's first type and the position of the
    group's first chunk; indices are renumbered from 0.
    """
    if not groups:
        return list(chunks)
    owner = {}
    for group in groups:
        for section_type in group:
            owner[section_type] = tuple(group)

    merged = []
    placed = {}
    for chunk in chunks:
        group = owner.get(chunk.section_type)
        if group is None:
            merged.append(chunk)
            continue
        if group in placed:
            position = placed[group]
            head = merged[position]
            merged[position] = replace(
                head,
                heading=f'{head.heading} + {chunk.heading}',
                body=f'{head.body}\n\n{chunk.body}',
            )
            continue
        placed[group] = len(merged)
        merged.append(chunk.with_type(group[0]))
    return [replace(chunk, index=i) for i, chunk in enumerate(merged)]


def dump_chunks(chunks):
    """hspim-chunks-json records for ``chunks``."""
    from .serializers import ChunkSerializer

    return [dict(record) for record in ChunkSerializer(chunks, many=True).data]
