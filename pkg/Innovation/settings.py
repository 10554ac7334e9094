"""
Django settings for the Innovation scoring project.

Every tunable is read from the environment (optionally through a ``.env``
file) with a built-in default, so a run can be reproduced from its
effective configuration alone.

For the full list of Django settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""

from pathlib import Path
import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Only used by Django internals; nothing in the engine signs data.
SECRET_KEY = os.getenv('SECRET_KEY', 'django-insecure-innovation-scoring-local-only')

DEBUG = os.getenv('DEBUG', 'True') == 'True'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'Scoring',
]

# No database: datasets, runs and reports are files.
DATABASES = {}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Response cache for the LLM gateway. Entries are keyed by content hash and never expire.
CACHES = {
    'default': {
        'BACKEND': 'django.core.cache.backends.locmem.LocMemCache',
    },
    'completions': {
        'BACKEND': 'django.core.cache.backends.filebased.FileBasedCache',
        'LOCATION': os.getenv('HSPIM_CACHE_DIR', str(BASE_DIR / '.hspim_cache')),
        'TIMEOUT': None,
        'OPTIONS': {'MAX_ENTRIES': int(os.getenv('HSPIM_CACHE_MAX_ENTRIES', '1000000'))},
    },
}


LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'Scoring': {
            'handlers': ['console'],
            'level': os.getenv('HSPIM_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}


# Engine defaults. CLI flags and --config files override these per run.
HSPIM = {
    'DEFAULT_BANK': os.getenv('HSPIM_BANK', str(BASE_DIR / 'Scoring' / 'data' / 'default_bank.json')),
    'OUTPUT_DIR': os.getenv('HSPIM_OUTPUT_DIR', str(BASE_DIR / 'runs')),
    'PROVIDER': os.getenv('HSPIM_PROVIDER', 'mock'),
    'SEED': int(os.getenv('HSPIM_SEED', '42')),
    'MODE': 'hspim_naive',
    'CLASSIFY_MODE': os.getenv('HSPIM_CLASSIFY_MODE', 'lenient'),
    'CLASSIFY_BODY_CHARS': 1200,
    'CHUNK_CHAR_BUDGET': int(os.getenv('HSPIM_CHUNK_CHAR_BUDGET', '6000')),
    'QA_TEMPERATURE': float(os.getenv('HSPIM_QA_TEMPERATURE', '1.0')),
    'SCORE_TEMPERATURE': float(os.getenv('HSPIM_SCORE_TEMPERATURE', '0')),
    'WORKERS': int(os.getenv('HSPIM_WORKERS', '4')),
    'AGGREGATION': {
        'mode': 'hspim',
        'norm': 'L2',
        'section_mask': None,
        'use_confidence_weights': True,
    },
    'GA': {
        'population_size': 10,
        'iterations': 5,
        'mutation_rate': 0.10,
        'elite_count': None,
        'batch_size': 20,
        'fixed_batch': False,
        'two_step_split': 0.5,
    },
    'PRUNE_SIZE': 3,
    'ANNEALING': {'t0': 0.5, 'alpha': 0.9},
    'FIELD_MAPS': {
        'hspim-json': {
            'originality': 'originality',
            'soundness': 'soundness',
            'comment': 'comment',
        },
        'peerread': {
            'originality': 'ORIGINALITY',
            'soundness': 'SOUNDNESS_CORRECTNESS',
            'comment': 'comments',
        },
    },
}

HSPIM_PROVIDERS = {
    'mock': {
        'kind': 'mock',
        'model': 'mock-judge',
        'embedding_model': 'mock-embed',
        'seed': int(os.getenv('HSPIM_MOCK_SEED', '0')),
        'concurrency_limit': 8,
        'retry': {'max_attempts': 3, 'backoff': [0, 0, 0]},
    },
    'openai': {
        'kind': 'http-openai-compatible',
        'endpoint': os.getenv('OPENAI_API_BASE', 'https://api.openai.com/v1'),
        'model': os.getenv('HSPIM_MODEL', 'gpt-4o-mini'),
        'embedding_model': os.getenv('HSPIM_EMBEDDING_MODEL', 'text-embedding-3-small'),
        'credentials_env': 'OPENAI_API_KEY',
        'concurrency_limit': int(os.getenv('HSPIM_CONCURRENCY', '4')),
        'timeout': float(os.getenv('HSPIM_TIMEOUT', '60')),
        'retry': {'max_attempts': 3, 'backoff': [1, 2, 4]},
        'max_calls': None,
    },
}
