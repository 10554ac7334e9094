import json
import re
from pathlib import Path

from Scoring.corpus import load_dataset
from Scoring.gateway import Gateway, ProviderConfig, RetryPolicy
from Scoring.providers import MockProvider, Provider, mock_score
from Scoring.questions import QuestionBank
from Scoring.segmenter import SECTION_TYPES

FIXTURES = Path(__file__).resolve().parent / 'fixtures'
CORPUS = FIXTURES / 'corpus.json'


def fixture_dataset():
    return load_dataset(CORPUS)


def mock_config(**overrides):
    values = {
        'kind': 'mock',
        'model': 'mock-judge',
        'embedding_model': 'mock-embed',
        'retry': RetryPolicy(max_attempts=3, backoff=(0.0,)),
    }
    values.update(overrides)
    return ProviderConfig(**values)


def mock_gateway(provider=None, cache=None, **config):
    return Gateway(provider or MockProvider(seed=0), mock_config(**config), cache=cache, sleep=lambda _: None)


def make_bank(sizes=(11,) * 10):
    """Bank with distinct generated texts; ``sizes`` is (N_c, N_1, ..., N_9)."""
    return QuestionBank(
        common=tuple(f'common question {i}' for i in range(sizes[0])),
        specific={
            t: tuple(f'{t.value} question {i}' for i in range(size))
            for t, size in zip(SECTION_TYPES, sizes[1:])
        },
    )


class ScriptedProvider(Provider):
    """Replies from a script; exception instances in the script are raised."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        reply = self.replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return reply

    def embed(self, texts, model):
        raise NotImplementedError


class LabelEchoProvider(MockProvider):
    """Mock judge that reads the novelty from a 'LABEL=x' prefix of the section text.

    Sections without the prefix get novelty 1.0; confidence is always 3.
    """

    _label = re.compile(r'<section>\nLABEL=([0-9.]+)')

    def _score(self, request):
        match = self._label.search(request.user)
        novelty = float(match.group(1)) if match else 1.0
        return json.dumps({'novelty_score': novelty, 'confidence_score': 3.0, 'reason': 'echo'})


class BodyOnlyProvider(MockProvider):
    """Mock judge whose scores depend on the section text only, not on the QA pair."""

    _body = re.compile(r'<section>\n(.*?)\n</section>', re.DOTALL)

    def _score(self, request):
        body = self._body.search(request.user).group(1)
        return json.dumps({
            'novelty_score': mock_score(body, 'novelty_score', self.seed),
            'confidence_score': mock_score(body, 'confidence_score', self.seed),
            'reason': 'body only',
        })


class HammingContext:
    """Synthetic fitness: Hamming distance of an individual to a planted optimum."""

    llm_calls = 0

    def __init__(self, optimum):
        self.optimum = tuple(optimum)
        self.evaluations = 0

    def fitness(self, individual, papers):
        self.evaluations += 1
        return float(sum(a != b for a, b in zip(individual.slots, self.optimum)))
