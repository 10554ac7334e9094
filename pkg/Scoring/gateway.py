"""Uniform access to chat-completion providers.

The gateway owns retries, the response cache, call accounting and the
concurrency limit. It is safe to share between worker threads.
"""
import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from django.conf import settings
from django.core.cache import caches
from django.core.cache.backends.filebased import FileBasedCache

from . import prompts
from .exceptions import (
    AuthenticationFailed, BudgetExceeded, ConfigError, GatewayError, JSONContractError, TransportError,
)
from .providers import build_provider

logger = logging.getLogger(__name__)

SCORE_MIN = 1.0
SCORE_MAX = 5.0


@dataclass(frozen=True)
class CompletionRequest:
    model: str
    system: str
    user: str
    temperature: float = 0.0
    max_output: int = 1024
    json_schema_hint: Optional[dict] = None
    # classify | qa | score | score_plus | chat; routes mock answers, not part of the cache key
    purpose: str = 'chat'

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigError(f'temperature must lie in [0, 2], got {self.temperature}')
        if self.max_output < 1:
            raise ConfigError('max_output must be positive')


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    latency: float
    cached: bool = False


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff: tuple = (1.0, 2.0, 4.0)

    def delay(self, attempt):
        if not self.backoff:
            return 0.0
        return float(self.backoff[min(attempt, len(self.backoff) - 1)])


@dataclass(frozen=True)
class ProviderConfig:
    kind: str
    endpoint: str = ''
    model: str = ''
    embedding_model: str = ''
    credentials_env: str = ''
    concurrency_limit: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    timeout: float = 60.0
    max_calls: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ('http-openai-compatible', 'mock'):
            raise ConfigError(f'unknown provider kind {self.kind!r}')
        if self.concurrency_limit < 1:
            raise ConfigError('concurrency_limit must be at least 1')
        if self.retry.max_attempts < 1:
            raise ConfigError('retry.max_attempts must be at least 1')

    @classmethod
    def from_settings(cls, name):
        try:
            raw = dict(settings.HSPIM_PROVIDERS[name])
        except KeyError:
            raise ConfigError(f'unknown provider {name!r}; configured: {sorted(settings.HSPIM_PROVIDERS)}') from None
        retry = raw.pop('retry', {}) or {}
        return cls(
            retry=RetryPolicy(
                max_attempts=int(retry.get('max_attempts', 3)),
                backoff=tuple(retry.get('backoff', (1.0, 2.0, 4.0))),
            ),
            **raw,
        )


def cache_key(request):
    """Content hash of (model, system, user, temperature)."""
    payload = json.dumps(
        [request.model, request.system, request.user, float(request.temperature)],
        ensure_ascii=False,
    )
    return 'hspim:' + hashlib.sha256(payload.encode('utf-8')).hexdigest()


def extract_json_object(text):
    """Return the first JSON object embedded in ``text``, or None."""
    decoder = json.JSONDecoder()
    start = text.find('{')
    while start != -1:
        try:
            value, _ = decoder.raw_decode(text, start)
        except json.JSONDecodeError:
            start = text.find('{', start + 1)
            continue
        if isinstance(value, dict):
            return value
        start = text.find('{', start + 1)
    return None


def clamp_score(value, key=''):
    if value < SCORE_MIN or value > SCORE_MAX:
        clamped = min(max(value, SCORE_MIN), SCORE_MAX)
        logger.warning('Clamped %s=%s to %s', key or 'score', value, clamped)
        return clamped
    return value


class Gateway:
    def __init__(self, provider, config, cache=None, use_cache=True, cache_sampled=True, sleep=time.sleep):
        self.provider = provider
        self.config = config
        self.cache = cache
        self.use_cache = use_cache and cache is not None
        self.cache_sampled = cache_sampled
        self._sleep = sleep
        self._semaphore = threading.BoundedSemaphore(config.concurrency_limit)
        self._lock = threading.Lock()
        self.requests = 0
        self.calls = 0
        self.cache_hits = 0

    @property
    def model(self):
        return self.config.model

    def request(self, system, user, purpose='chat', temperature=0.0, json_schema_hint=None, max_output=1024):
        return CompletionRequest(
            model=self.model,
            system=system,
            user=user,
            temperature=temperature,
            max_output=max_output,
            json_schema_hint=json_schema_hint,
            purpose=purpose,
        )

    def complete(self, request):
        with self._lock:
            self.requests += 1
        cacheable = self.use_cache and (request.temperature == 0 or self.cache_sampled)
        key = cache_key(request) if cacheable else None
        if cacheable:
            hit = self.cache.get(key)
            if hit is not None:
                with self._lock:
                    self.cache_hits += 1
                logger.debug('Cache hit %s', key)
                return CompletionResponse(text=hit, latency=0.0, cached=True)

        self._reserve_call()
        started = time.monotonic()
        with self._semaphore:
            text = self._with_retries(self.provider.complete, request)
        latency = time.monotonic() - started
        if not text or not text.strip():
            raise GatewayError(f'empty completion from {self.config.kind} provider')
        if cacheable:
            self.cache.set(key, text, timeout=None)
        return CompletionResponse(text=text, latency=latency, cached=False)

    def evict(self, request):
        """Drop the cached reply for ``request``; callers evict replies that failed validation."""
        if self.use_cache:
            self.cache.delete(cache_key(request))

    def complete_json(self, request, required_keys, numeric_keys=None):
        """Complete ``request`` and return the first JSON object of the reply.

        Numeric keys are parsed as floats. A reply violating the contract is
        answered with one corrective reprompt; a second violation raises.
        """
        if not required_keys:
            raise ConfigError('required_keys must not be empty')
        if numeric_keys is None:
            numeric_keys = [k for k in required_keys if k != 'reason']
        text = self.complete(request).text
        record, problem = self._check_json(text, required_keys, numeric_keys)
        if problem is None:
            return record

        self.evict(request)
        logger.warning('JSON contract violated (%s); reprompting once', problem)
        retry = replace(request, user=f'{request.user}\n\n{prompts.json_reprompt(problem, required_keys)}')
        text = self.complete(retry).text
        record, problem = self._check_json(text, required_keys, numeric_keys)
        if problem is None:
            return record
        self.evict(retry)
        raise JSONContractError(problem, text=text)

    def embed(self, texts):
        texts = list(texts)
        self._reserve_call()
        with self._semaphore:
            vectors = self._with_retries(self.provider.embed, texts, self.config.embedding_model)
        return np.asarray(vectors, dtype=float)

    def _check_json(self, text, required_keys, numeric_keys):
        record = extract_json_object(text)
        if record is None:
            return None, 'no JSON object found'
        missing = [k for k in required_keys if k not in record]
        if missing:
            return None, f'missing keys {missing}'
        parsed = dict(record)
        for key in numeric_keys:
            value = record[key]
            if isinstance(value, bool):
                return None, f'non-numeric value for {key!r}'
            try:
                parsed[key] = float(value)
            except (TypeError, ValueError):
                return None, f'non-numeric value for {key!r}'
            if parsed[key] != parsed[key]:
                return None, f'non-numeric value for {key!r}'
        return parsed, None

    def _reserve_call(self):
        with self._lock:
            if self.config.max_calls is not None and self.calls >= self.config.max_calls:
                raise BudgetExceeded(f'call budget of {self.config.max_calls} exhausted')
            self.calls += 1

    def _with_retries(self, operation, *args):
        policy = self.config.retry
        last_error = None
        for attempt in range(policy.max_attempts):
            try:
                return operation(*args)
            except AuthenticationFailed:
                raise
            except TransportError as exc:
                last_error = exc
                logger.warning('Attempt %d/%d failed: %s', attempt + 1, policy.max_attempts, exc)
                if attempt + 1 < policy.max_attempts:
                    self._sleep(policy.delay(attempt))
        raise TransportError(
            f'request failed after {policy.max_attempts} attempts: {last_error}',
            attempts=policy.max_attempts,
        )


def build_cache(cache_dir=None):
    if cache_dir:
        return FileBasedCache(str(cache_dir), {'TIMEOUT': None, 'OPTIONS': {'MAX_ENTRIES': 1000000}})
    return caches['completions']


def build_gateway(provider_name, cache_dir=None, use_cache=True, cache_sampled=True):
    config = ProviderConfig.from_settings(provider_name)
    provider = build_provider(config)
    cache = build_cache(cache_dir) if use_cache else None
    logger.info('Gateway ready: provider=%s kind=%s model=%s concurrency=%d',
                provider_name, config.kind, config.model, config.concurrency_limit)
    return Gateway(provider, config, cache=cache, use_cache=use_cache, cache_sampled=cache_sampled)
