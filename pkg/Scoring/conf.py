"""Effective run configuration.

Values are resolved with the precedence command-line flags > ``--config`` JSON
file > command defaults > ``settings.HSPIM``. The resolved configuration is
logged at startup and copied into every run directory.
"""
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from django.conf import settings

from .aggregator import AggregationConfig, mask_names
from .exceptions import ConfigError
from .optimizer import GAConfig
from .pipeline import MODES, PipelineConfig
from .segmenter import SectionType

logger = logging.getLogger(__name__)

STRATEGIES = ('joint', 'two_step', 'pruning')
SEARCHERS = ('ga', 'random', 'annealing')

# flag name -> key inside the nested section it overrides
AGGREGATION_FLAGS = {
    'aggregation': 'mode',
    'norm': 'norm',
    'sections': 'section_mask',
}
GA_FLAGS = {
    'population': 'population_size',
    'iterations': 'iterations',
    'mutation_rate': 'mutation_rate',
    'elite': 'elite_count',
    'batch_size': 'batch_size',
}
FLAT_KEYS = (
    'provider', 'bank', 'dataset', 'format', 'split', 'mode', 'strategy', 'searcher', 'seed', 'out',
    'run_id', 'cache_dir', 'individual', 'prune_size', 'classify_mode', 'qa_temperature',
    'score_temperature', 'workers', 'unmatched_noise', 'merge', 'critical_scoring', 'similarity',
    'no_cache', 'apply',
)
NESTED_KEYS = ('aggregation', 'ga', 'annealing')


@dataclass(frozen=True)
class RunConfig:
    provider: str
    bank: str
    dataset: Optional[str]
    format: str
    split: Optional[str]
    strategy: Optional[str]
    searcher: str
    seed: int
    out: str
    run_id: Optional[str]
    cache_dir: Optional[str]
    use_cache: bool
    individual: Optional[str]
    prune_size: int
    similarity: bool
    apply: bool
    pipeline: PipelineConfig
    ga: GAConfig
    annealing: dict

    def __post_init__(self):
        if self.strategy is not None:
            if self.strategy not in STRATEGIES:
                raise ConfigError(f'unknown strategy {self.strategy!r}; expected one of {list(STRATEGIES)}')
            if self.pipeline.mode != 'hspim':
                raise ConfigError(f'a search strategy needs mode hspim, got {self.pipeline.mode!r}')
        if self.searcher not in SEARCHERS:
            raise ConfigError(f'unknown searcher {self.searcher!r}; expected one of {list(SEARCHERS)}')
        if self.strategy == 'two_step' and self.searcher != 'ga':
            raise ConfigError('the two-step strategy runs with the ga searcher only')

    @property
    def mode(self):
        return self.pipeline.mode

    def as_dict(self):
        pipeline = self.pipeline
        return {
            'provider': self.provider,
            'bank': self.bank,
            'dataset': self.dataset,
            'format': self.format,
            'split': self.split,
            'mode': pipeline.mode,
            'strategy': self.strategy,
            'searcher': self.searcher,
            'seed': self.seed,
            'out': self.out,
            'cache_dir': self.cache_dir,
            'use_cache': self.use_cache,
            'individual': self.individual,
            'prune_size': self.prune_size,
            'similarity': self.similarity,
            'classify_mode': pipeline.classify_mode,
            'qa_temperature': pipeline.qa_temperature,
            'score_temperature': pipeline.score_temperature,
            'chunk_char_budget': pipeline.chunk_char_budget,
            'critical_scoring': pipeline.critical_scoring,
            'merge': ['+'.join(t.value for t in group) for group in pipeline.merge_groups],
            'unmatched_noise': pipeline.unmatched_noise,
            'workers': pipeline.workers,
            'aggregation': pipeline.aggregation.as_dict(),
            'ga': {
                'population_size': self.ga.population_size,
                'iterations': self.ga.iterations,
                'mutation_rate': self.ga.mutation_rate,
                'elite_count': self.ga.elite_count,
                'batch_size': self.ga.batch_size,
                'fixed_batch': self.ga.fixed_batch,
                'two_step_split': self.ga.two_step_split,
            },
            'annealing': dict(self.annealing),
        }

    def with_mask(self, section_mask):
        pipeline = replace(self.pipeline, aggregation=self.pipeline.aggregation.masked(section_mask))
        return replace(self, pipeline=pipeline)


def defaults():
    hspim = settings.HSPIM
    return {
        'provider': hspim['PROVIDER'],
        'bank': hspim['DEFAULT_BANK'],
        'dataset': None,
        'format': 'hspim-json',
        'split': None,
        'mode': hspim['MODE'],
        'strategy': None,
        'searcher': 'ga',
        'seed': hspim['SEED'],
        'out': hspim['OUTPUT_DIR'],
        'run_id': None,
        'cache_dir': None,
        'no_cache': False,
        'individual': None,
        'prune_size': hspim['PRUNE_SIZE'],
        'classify_mode': hspim['CLASSIFY_MODE'],
        'qa_temperature': hspim['QA_TEMPERATURE'],
        'score_temperature': hspim['SCORE_TEMPERATURE'],
        'workers': hspim['WORKERS'],
        'unmatched_noise': 0.0,
        'merge': [],
        'critical_scoring': False,
        'similarity': False,
        'apply': False,
        'aggregation': dict(hspim['AGGREGATION']),
        'ga': dict(hspim['GA']),
        'annealing': dict(hspim['ANNEALING']),
    }


def load_config_file(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f'config file not found: {path}')
    try:
        data = json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as exc:
        raise ConfigError(f'{path}: invalid JSON ({exc})') from exc
    if not isinstance(data, dict):
        raise ConfigError(f'{path}: expected a JSON object')
    unknown = sorted(set(data) - set(FLAT_KEYS) - set(NESTED_KEYS))
    if unknown:
        raise ConfigError(f'{path}: unknown keys {unknown}')
    return data


def _apply_layer(values, layer):
    for key, value in layer.items():
        if key in NESTED_KEYS:
            if not isinstance(value, dict):
                raise ConfigError(f'{key!r} must be an object')
            values[key].update(value)
        else:
            values[key] = value


def _flag_layer(options):
    """Only flags the user actually set: None and False mean 'not given'."""
    layer = {'aggregation': {}, 'ga': {}}
    for key in FLAT_KEYS:
        value = options.get(key)
        if value is None or value is False or value == []:
            continue
        layer[key] = value
    for flag, key in AGGREGATION_FLAGS.items():
        if options.get(flag) is not None:
            layer['aggregation'][key] = options[flag]
    if options.get('no_confidence_weights'):
        layer['aggregation']['use_confidence_weights'] = False
    for flag, key in GA_FLAGS.items():
        if options.get(flag) is not None:
            layer['ga'][key] = options[flag]
    if options.get('fixed_batch'):
        layer['ga']['fixed_batch'] = True
    return layer


def parse_section_list(value):
    if value is None:
        return None
    names = value.split(',') if isinstance(value, str) else list(value)
    types = []
    for name in names:
        section_type = SectionType.parse(str(name))
        if section_type is None or section_type is SectionType.UNMATCHED:
            raise ConfigError(f'unknown section type {name!r}')
        types.append(section_type)
    return frozenset(types)


def parse_merge_groups(groups):
    """'Approach+Experiments' -> (SectionType.APPROACH, SectionType.EXPERIMENTS)."""
    parsed = []
    for group in groups or ():
        members = group.split('+') if isinstance(group, str) else list(group)
        types = []
        for section_type in (next(iter(parse_section_list([m]))) for m in members):
            if section_type not in types:
                types.append(section_type)
        types = tuple(types)
        if len(types) < 2:
            raise ConfigError(f'a merge group needs at least two section types, got {group!r}')
        parsed.append(types)
    return tuple(parsed)


def resolve(options, command_defaults=None):
    """Build the effective RunConfig for a management command."""
    values = defaults()
    if command_defaults:
        _apply_layer(values, command_defaults)
    if options.get('config'):
        _apply_layer(values, load_config_file(options['config']))
    _apply_layer(values, _flag_layer(options))

    if values['mode'] not in MODES:
        raise ConfigError(f'unknown mode {values["mode"]!r}; expected one of {list(MODES)}')
    aggregation = dict(values['aggregation'])
    if isinstance(aggregation.get('section_mask'), str):
        aggregation['section_mask'] = sorted(parse_section_list(aggregation['section_mask']))
    seed = int(values['seed'])
    pipeline = PipelineConfig(
        mode=values['mode'],
        classify_mode=values['classify_mode'],
        qa_temperature=float(values['qa_temperature']),
        score_temperature=float(values['score_temperature']),
        chunk_char_budget=settings.HSPIM['CHUNK_CHAR_BUDGET'],
        classify_body_chars=settings.HSPIM['CLASSIFY_BODY_CHARS'],
        critical_scoring=bool(values['critical_scoring']),
        merge_groups=parse_merge_groups(values['merge']),
        unmatched_noise=float(values['unmatched_noise']),
        noise_seed=seed,
        workers=int(values['workers']),
        aggregation=AggregationConfig.from_dict(aggregation),
    )
    try:
        ga = GAConfig(seed=seed, workers=pipeline.workers, **values['ga'])
    except TypeError as exc:
        raise ConfigError(f'invalid ga section: {exc}') from None
    config = RunConfig(
        provider=values['provider'],
        bank=str(values['bank']),
        dataset=values['dataset'],
        format=values['format'],
        split=values['split'],
        strategy=values['strategy'],
        searcher=values['searcher'],
        seed=seed,
        out=str(values['out']),
        run_id=values['run_id'],
        cache_dir=values['cache_dir'],
        use_cache=not values['no_cache'],
        individual=values['individual'],
        prune_size=int(values['prune_size']),
        similarity=bool(values['similarity']),
        apply=bool(values['apply']),
        pipeline=pipeline,
        ga=ga,
        annealing=dict(values['annealing']),
    )
    logger.info('Effective configuration: %s', json.dumps(config.as_dict(), sort_keys=True))
    return config


def describe_mask(section_mask):
    names = mask_names(section_mask)
    return ', '.join(names) if names else 'all sections'
