"""Chat-completion providers behind the gateway.

``MockProvider`` is a pure function of (request, seed) and answers the three
prompt families of the engine with published rules:

* classification: first matching entry of ``HEADING_KEYWORDS`` for the heading,
  otherwise ``Unmatched`` (lenient prompts) or a heading-hash pick (strict prompts);
* QA: ``mock_answer(question, body)``;
* scoring: ``mock_score(material, key)`` per JSON key, where the material is the
  section text, followed by the question and the answer when a QA pair is present.
"""
import hashlib
import json
import logging
import os
import re
from abc import ABC, abstractmethod

import numpy as np
import openai

from . import prompts
from .exceptions import AuthenticationFailed, ConfigError, GatewayError, TransportError

logger = logging.getLogger(__name__)

SCORE_KEYS = ('novelty_score', 'confidence_score')
SCORE_PLUS_KEYS = (
    'novelty_score', 'contribution_score', 'feasibility_score',
    'novelty_confidence', 'contribution_confidence', 'feasibility_confidence',
)
MOCK_EMBEDDING_DIM = 64

# Order matters: the first label whose keyword occurs in the lower-cased heading wins.
HEADING_KEYWORDS = (
    ('Abstract', ('abstract',)),
    ('RelatedWork', ('related work', 'background', 'prior work', 'literature')),
    ('Introduction', ('introduction', 'motivation')),
    ('AnalysisTheory', ('theor', 'proof')),
    ('ExperimentAnalysis', ('experiment analysis', 'analysis', 'results', 'ablation')),
    ('Experiments', ('experiment', 'evaluation', 'setup')),
    ('Approach', ('approach', 'method', 'model', 'framework', 'architecture')),
    ('Discussion', ('discussion', 'limitation')),
    ('Conclusion', ('conclusion', 'future work')),
)

_HEADING = re.compile(r'^Section heading: (.*)$', re.MULTILINE)
_SECTION = re.compile(r'<section>\n(.*?)\n</section>', re.DOTALL)
_QUESTION = re.compile(r'<question>(.*?)</question>', re.DOTALL)
_ANSWER = re.compile(r'<answer>(.*?)</answer>', re.DOTALL)


def digest(text, length=8):
    return hashlib.sha256(text.encode('utf-8')).hexdigest()[:length]


def mock_score(material, key, seed=0):
    """Seeded hash of ``material`` mapped onto {1.0, 1.1, ..., 5.0}."""
    value = int(digest(f'{seed}:{key}:{material}'), 16)
    return 1.0 + (value % 41) / 10.0


def first_sentence(text):
    return re.split(r'(?<=[.!?])\s+', text.strip(), maxsplit=1)[0]


def mock_answer(question, body):
    return f'[{digest(question)}] {first_sentence(body)}'


def mock_label(heading, lenient=True):
    lowered = heading.lower()
    for label, keywords in HEADING_KEYWORDS:
        if any(keyword in lowered for keyword in keywords):
            return label
    if lenient:
        return prompts.UNMATCHED_LABEL
    return prompts.SECTION_LABELS[int(digest(heading), 16) % len(prompts.SECTION_LABELS)]


def scoring_material(body, question=None, answer=None):
    if question is None:
        return body
    return f'{body}\n{question}\n{answer}'


def mock_embedding(text, seed=0, dim=MOCK_EMBEDDING_DIM):
    rng = np.random.default_rng(int(digest(f'{seed}:{text}', 16), 16))
    vector = rng.standard_normal(dim)
    return vector / np.linalg.norm(vector)


class Provider(ABC):
    """One chat-completion backend. Implementations raise gateway errors only."""

    @abstractmethod
    def complete(self, request):
        """Return the raw completion text for ``request``."""

    @abstractmethod
    def embed(self, texts, model):
        """Return one embedding vector per text."""


class MockProvider(Provider):
    def __init__(self, seed=0):
        self.seed = seed

    def complete(self, request):
        if request.purpose == 'classify':
            return self._classify(request)
        if request.purpose == 'qa':
            return self._answer(request)
        if request.purpose in ('score', 'score_plus'):
            return self._score(request)
        return f'mock reply {digest(request.system + request.user)}'

    def embed(self, texts, model):
        return [mock_embedding(text, self.seed) for text in texts]

    def _classify(self, request):
        match = _HEADING.search(request.user)
        heading = match.group(1) if match else ''
        return mock_label(heading, lenient=prompts.UNMATCHED_LABEL in request.system)

    def _answer(self, request):
        question = _QUESTION.search(request.user).group(1)
        return mock_answer(question, _SECTION.search(request.user).group(1))

    def _score(self, request):
        body = _SECTION.search(request.user).group(1)
        question = _QUESTION.search(request.user)
        answer = _ANSWER.search(request.user)
        material = scoring_material(
            body,
            question.group(1) if question else None,
            answer.group(1) if answer else None,
        )
        keys = SCORE_PLUS_KEYS if request.purpose == 'score_plus' else SCORE_KEYS
        record = {key: mock_score(material, key, self.seed) for key in keys}
        record['reason'] = f'mock reason {digest(material)}'
        return json.dumps(record)


class OpenAICompatibleProvider(Provider):
    """Provider for any endpoint speaking the OpenAI chat-completions wire format."""

    def __init__(self, endpoint, credentials_env, timeout=60.0):
        api_key = os.getenv(credentials_env or '', '').strip()
        if not api_key:
            raise AuthenticationFailed(f'missing credentials: environment variable {credentials_env!r} is empty')
        # Retries are owned by the gateway.
        self.client = openai.OpenAI(api_key=api_key, base_url=endpoint or None, timeout=timeout, max_retries=0)

    def complete(self, request):
        kwargs = {
            'model': request.model,
            'messages': [
                {'role': 'system', 'content': request.system},
                {'role': 'user', 'content': request.user},
            ],
            'temperature': request.temperature,
            'max_tokens': request.max_output,
        }
        if request.json_schema_hint is not None:
            kwargs['response_format'] = {'type': 'json_object'}
        with _translated_errors():
            response = self.client.chat.completions.create(**kwargs)
        return response.choices[0].message.content or ''

    def embed(self, texts, model):
        with _translated_errors():
            response = self.client.embeddings.create(model=model, input=list(texts))
        return [item.embedding for item in response.data]


class _translated_errors:
    """Map openai exceptions onto the gateway error hierarchy."""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None:
            return False
        if isinstance(exc, (openai.AuthenticationError, openai.PermissionDeniedError)):
            raise AuthenticationFailed(str(exc)) from exc
        if isinstance(exc, (openai.APIConnectionError, openai.RateLimitError, openai.InternalServerError)):
            raise TransportError(str(exc)) from exc
        if isinstance(exc, openai.OpenAIError):
            raise GatewayError(str(exc)) from exc
        return False


def build_provider(config):
    if config.kind == 'mock':
        return MockProvider(seed=config.seed)
    if config.kind == 'http-openai-compatible':
        return OpenAICompatibleProvider(config.endpoint, config.credentials_env, config.timeout)
    raise ConfigError(f'unknown provider kind {config.kind!r}')
