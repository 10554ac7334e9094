"""Two-layer question banks and the question-prompt combination they index."""
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from django.conf import settings

from .exceptions import QuestionError
from .segmenter import SECTION_TYPES, SectionType
from .serializers import IndividualSerializer, QuestionBankSerializer, first_error

logger = logging.getLogger(__name__)

# Slot 0 holds the common question, slots 1..9 the specific questions in SECTION_TYPES order.
SLOT_COUNT = 1 + len(SECTION_TYPES)


@dataclass(frozen=True)
class QuestionBank:
    common: tuple
    specific: dict

    def __post_init__(self):
        if not self.common:
            raise QuestionError('the common question set is empty')
        for section_type in SECTION_TYPES:
            if not self.specific.get(section_type):
                raise QuestionError(f'no specific questions for {section_type.value}')

    @property
    def shape(self):
        """Set sizes per slot: (N_c, N_Abstract, ..., N_Conclusion)."""
        return (len(self.common),) + tuple(len(self.specific[t]) for t in SECTION_TYPES)

    @property
    def search_space_size(self):
        return math.prod(self.shape)

    @classmethod
    def from_dict(cls, data):
        serializer = QuestionBankSerializer(data=data)
        if not serializer.is_valid():
            field, message = first_error(serializer.errors)
            raise QuestionError(f'invalid question bank: {field}: {message}')
        validated = serializer.validated_data
        return cls(
            common=tuple(validated['common']),
            specific={SectionType(name): tuple(texts) for name, texts in validated['specific'].items()},
        )

    def as_dict(self):
        return {
            'common': list(self.common),
            'specific': {t.value: list(self.specific[t]) for t in SECTION_TYPES},
        }


@dataclass(frozen=True)
class Individual:
    """One question-prompt combination: a common index plus one index per section type."""

    common_index: int
    specific_indices: tuple

    def __post_init__(self):
        if len(self.specific_indices) != len(SECTION_TYPES):
            raise QuestionError(
                f'an individual needs {len(SECTION_TYPES)} specific indices, got {len(self.specific_indices)}'
            )

    @property
    def slots(self):
        return (self.common_index,) + tuple(self.specific_indices)

    @classmethod
    def from_slots(cls, slots):
        slots = tuple(int(s) for s in slots)
        return cls(common_index=slots[0], specific_indices=slots[1:])

    def specific(self, section_type):
        return self.specific_indices[SECTION_TYPES.index(section_type)]

    def specific_map(self):
        return dict(zip(SECTION_TYPES, self.specific_indices))

    def fits(self, bank):
        return all(0 <= index < size for index, size in zip(self.slots, bank.shape))

    def as_dict(self):
        return dict(IndividualSerializer(self).data)


def load_bank(path):
    path = Path(path)
    if not path.exists():
        raise QuestionError(f'question bank not found: {path}')
    try:
        data = json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as exc:
        raise QuestionError(f'{path}: invalid JSON ({exc})') from exc
    bank = QuestionBank.from_dict(data)
    logger.debug('Loaded question bank %s with shape %s', path, bank.shape)
    return bank


def default_bank():
    return load_bank(settings.HSPIM['DEFAULT_BANK'])


def default_individual():
    """The naive combination: the first question of every set."""
    return Individual(common_index=0, specific_indices=(0,) * len(SECTION_TYPES))


def check_individual(individual, bank):
    if not individual.fits(bank):
        raise QuestionError(f'individual {individual.slots} is out of range for a bank of shape {bank.shape}')
    return individual


def compose(individual, section_type, bank):
    if section_type not in bank.specific:
        raise QuestionError(f'no specific question set for {getattr(section_type, "value", section_type)}')
    check_individual(individual, bank)
    specific = bank.specific[section_type][individual.specific(section_type)]
    common = bank.common[individual.common_index]
    return f'{specific} {common}'


def compose_common_only(individual, bank):
    if not 0 <= individual.common_index < len(bank.common):
        raise QuestionError(f'common index {individual.common_index} is out of range')
    return bank.common[individual.common_index]


def random_individual(bank, seed):
    """Uniform, independent choice per slot; ``seed`` may be an int or a sequence of ints."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return Individual.from_slots(rng.integers(0, size) for size in bank.shape)


def individual_from_dict(data, bank=None):
    serializer = IndividualSerializer(data=data)
    if not serializer.is_valid():
        field, message = first_error(serializer.errors)
        raise QuestionError(f'invalid individual: {field}: {message}')
    indices = serializer.validated_data['specific_indices']
    try:
        specific = tuple(int(indices[t.value]) for t in SECTION_TYPES)
    except KeyError as exc:
        raise QuestionError(f'invalid individual: missing specific index for {exc.args[0]}') from None
    individual = Individual(common_index=serializer.validated_data['common_index'], specific_indices=specific)
    if bank is not None:
        check_individual(individual, bank)
    return individual


def load_individual(path, bank=None):
    path = Path(path)
    if not path.exists():
        raise QuestionError(f'individual file not found: {path}')
    data = json.loads(path.read_text(encoding='utf-8'))
    # GA reports nest the winner under best_individual
    if 'best_individual' in data:
        data = data['best_individual']
    return individual_from_dict(data, bank)
