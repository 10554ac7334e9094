"""Paper-level innovation from per-chunk scores.

``hspim`` mode takes the confidence-weighted mean of chunk novelty.
``hspim_plus`` mode takes confidence-weighted means of novelty, contribution and
feasibility separately, then maps the p-norm of that vector linearly back onto
[1, 5] using the norm's extrema over the cube [1, 5]^3.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import AggregationError, ConfigError, NoSurvivingChunks
from .segmenter import SECTION_TYPES, SectionType

SCORE_MIN = 1.0
SCORE_MAX = 5.0

MODES = ('hspim', 'hspim_plus')
NORMS = {'L1': 1, 'L2': 2, 'Linf': np.inf}


def normalize_norm(name):
    """Accept l1/L1, l2/L2, linf/Linf/inf."""
    key = str(name).strip().lower()
    for norm in NORMS:
        if key == norm.lower():
            return norm
    if key == 'inf':
        return 'Linf'
    raise ConfigError(f'unknown norm {name!r}; expected one of {list(NORMS)}')


@dataclass(frozen=True)
class AggregationConfig:
    mode: str = 'hspim'
    norm: str = 'L2'
    section_mask: Optional[frozenset] = None
    use_confidence_weights: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f'unknown aggregation mode {self.mode!r}; expected one of {list(MODES)}')
        if self.norm not in NORMS:
            raise ConfigError(f'unknown norm {self.norm!r}; expected one of {list(NORMS)}')
        if self.section_mask is not None:
            if not self.section_mask:
                raise ConfigError('section mask must not be empty')
            outside = [t for t in self.section_mask if t not in SECTION_TYPES]
            if outside:
                raise ConfigError(f'section mask may only name the nine section types, got {outside}')

    @classmethod
    def from_dict(cls, data):
        mask = data.get('section_mask')
        if mask is not None:
            mask = frozenset(_section_type(name) for name in mask)
        return cls(
            mode=data.get('mode', 'hspim'),
            norm=normalize_norm(data.get('norm', 'L2')),
            section_mask=mask,
            use_confidence_weights=bool(data.get('use_confidence_weights', True)),
        )

    def as_dict(self):
        return {
            'mode': self.mode,
            'norm': self.norm,
            'section_mask': mask_names(self.section_mask),
            'use_confidence_weights': self.use_confidence_weights,
        }

    def masked(self, section_mask):
        return AggregationConfig(self.mode, self.norm, section_mask, self.use_confidence_weights)


def _section_type(name):
    section_type = name if isinstance(name, SectionType) else SectionType.parse(str(name))
    if section_type is None or section_type is SectionType.UNMATCHED:
        raise ConfigError(f'unknown section type {name!r}')
    return section_type


def mask_names(section_mask):
    """Mask as a list of type names in canonical order, or None."""
    if section_mask is None:
        return None
    return [t.value for t in SECTION_TYPES if t in section_mask]


@dataclass(frozen=True)
class AttributeVector:
    novelty: float
    contribution: float
    feasibility: float

    def __post_init__(self):
        for name, value in zip(('novelty', 'contribution', 'feasibility'), self.components):
            if not SCORE_MIN <= value <= SCORE_MAX:
                raise AggregationError(f'{name} {value} lies outside [{SCORE_MIN}, {SCORE_MAX}]')

    @property
    def components(self):
        return (self.novelty, self.contribution, self.feasibility)


def _weighted_mean(values, weights, use_weights, what):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise AggregationError(f'cannot aggregate an empty list of {what} scores')
    if not use_weights:
        result = values.mean()
    else:
        weights = np.asarray(weights, dtype=float)
        total = weights.sum()
        if not total > 0:
            raise AggregationError(f'total {what} confidence must be positive, got {total}')
        result = float(np.dot(weights, values)) / float(total)
    # a convex combination; clip away rounding past the extremes
    return float(np.clip(result, values.min(), values.max()))


def weighted_innovation(scores, use_weights=True):
    """Sum of confidence * novelty over the sum of confidences (plain mean without weights)."""
    scores = list(scores)
    return _weighted_mean(
        [s.novelty for s in scores], [s.confidence for s in scores], use_weights, 'novelty',
    )


def attribute_means(scores, use_weights=True):
    scores = list(scores)
    return AttributeVector(
        novelty=_weighted_mean(
            [s.novelty for s in scores], [s.conf_novelty for s in scores], use_weights, 'novelty'),
        contribution=_weighted_mean(
            [s.contribution for s in scores], [s.conf_contribution for s in scores], use_weights, 'contribution'),
        feasibility=_weighted_mean(
            [s.feasibility for s in scores], [s.conf_feasibility for s in scores], use_weights, 'feasibility'),
    )


def norm_extrema(norm):
    order = NORMS[norm]
    lo = float(np.linalg.norm(np.full(3, SCORE_MIN), ord=order))
    hi = float(np.linalg.norm(np.full(3, SCORE_MAX), ord=order))
    return lo, hi


def pnorm_map(vector, norm='L2'):
    if norm not in NORMS:
        raise ConfigError(f'unknown norm {norm!r}')
    lo, hi = norm_extrema(norm)
    magnitude = float(np.linalg.norm(np.asarray(vector.components, dtype=float), ord=NORMS[norm]))
    mapped = SCORE_MIN + (SCORE_MAX - SCORE_MIN) * (magnitude - lo) / (hi - lo)
    return float(np.clip(mapped, SCORE_MIN, SCORE_MAX))


def surviving(records, section_mask):
    # a mask naming all nine types keeps Unmatched chunks too, same as no mask
    if section_mask is None or section_mask.issuperset(SECTION_TYPES):
        return list(records)
    return [r for r in records if r.section_type in section_mask]


def aggregate(records, config):
    kept = surviving(records, config.section_mask)
    if not kept:
        raise NoSurvivingChunks()
    scores = [r.score for r in kept]
    if config.mode == 'hspim':
        if not all(hasattr(s, 'confidence') for s in scores):
            raise AggregationError('hspim aggregation needs single-attribute chunk scores')
        return weighted_innovation(scores, config.use_confidence_weights)
    if not all(hasattr(s, 'conf_feasibility') for s in scores):
        raise AggregationError('hspim_plus aggregation needs three-attribute chunk scores')
    return pnorm_map(attribute_means(scores, config.use_confidence_weights), config.norm)
