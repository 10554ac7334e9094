import json
import threading

import numpy as np
from django.core.cache.backends.locmem import LocMemCache
from django.test import SimpleTestCase

from Scoring.exceptions import (
    AuthenticationFailed, BudgetExceeded, ConfigError, GatewayError, JSONContractError, TransportError,
)
from Scoring.gateway import (
    CompletionRequest, Gateway, ProviderConfig, RetryPolicy, cache_key, clamp_score, extract_json_object,
)
from Scoring.pipeline import PipelineConfig, score_batch
from Scoring.providers import MockProvider, OpenAICompatibleProvider, mock_embedding
from Scoring.questions import default_bank

from .helpers import ScriptedProvider, fixture_dataset, mock_config, mock_gateway

KEYS = ('novelty_score', 'confidence_score', 'reason')


def request(user='u', temperature=0.0, **kwargs):
    return CompletionRequest(model='mock-judge', system='s', user=user, temperature=temperature, **kwargs)


def fresh_cache(name):
    return LocMemCache(name, {'TIMEOUT': None})


class CompletionRequestTests(SimpleTestCase):
    def test_temperature_range(self):
        with self.assertRaises(ConfigError):
            request(temperature=2.5)

    def test_cache_key_covers_prompt_and_temperature(self):
        self.assertEqual(cache_key(request()), cache_key(request()))
        self.assertNotEqual(cache_key(request()), cache_key(request(user='v')))
        self.assertNotEqual(cache_key(request()), cache_key(request(temperature=1.0)))
        self.assertEqual(cache_key(request(purpose='qa')), cache_key(request(purpose='score')))


class ProviderConfigTests(SimpleTestCase):
    def test_from_settings(self):
        config = ProviderConfig.from_settings('mock')
        self.assertEqual(config.kind, 'mock')
        self.assertEqual(config.retry.max_attempts, 3)

    def test_unknown_provider(self):
        with self.assertRaises(ConfigError):
            ProviderConfig.from_settings('nope')

    def test_invalid_kind(self):
        with self.assertRaises(ConfigError):
            ProviderConfig(kind='grpc')

    def test_missing_credentials(self):
        with self.assertRaises(AuthenticationFailed):
            OpenAICompatibleProvider('http://localhost:1', 'HSPIM_TEST_UNSET_CREDENTIAL')


class CacheTests(SimpleTestCase):
    def test_identical_request_served_from_cache(self):
        gateway = mock_gateway(cache=fresh_cache('gateway-hit'))
        first = gateway.complete(request())
        second = gateway.complete(request())
        self.assertEqual(first.text, second.text)
        self.assertTrue(second.cached)
        self.assertEqual((gateway.requests, gateway.calls, gateway.cache_hits), (2, 1, 1))

    def test_sampled_requests_skip_cache_when_disabled(self):
        gateway = Gateway(MockProvider(), mock_config(), cache=fresh_cache('gateway-sampled'), cache_sampled=False)
        gateway.complete(request(temperature=1.0))
        gateway.complete(request(temperature=1.0))
        self.assertEqual(gateway.calls, 2)
        gateway.complete(request())
        gateway.complete(request())
        self.assertEqual(gateway.calls, 3)

    def test_no_cache(self):
        gateway = mock_gateway()
        gateway.complete(request())
        gateway.complete(request())
        self.assertEqual(gateway.calls, 2)

    def test_replies_breaking_the_contract_are_not_kept(self):
        cache = fresh_cache('gateway-evict')
        good = json.dumps({'novelty_score': 4, 'confidence_score': 2, 'reason': 'r'})
        provider = ScriptedProvider(['<html>gateway timeout</html>'] * 2 + [good] * 10)
        with self.assertLogs('Scoring.gateway', 'WARNING'):
            with self.assertRaises(JSONContractError):
                mock_gateway(provider, cache=cache).complete_json(request(), KEYS)

        rerun = mock_gateway(provider, cache=cache)
        self.assertEqual(rerun.complete_json(request(), KEYS)['novelty_score'], 4.0)
        self.assertEqual(rerun.calls, 1)

        cached = mock_gateway(provider, cache=cache)
        cached.complete_json(request(), KEYS)
        self.assertEqual((cached.calls, cached.cache_hits), (0, 1))


class InFlightProvider(MockProvider):
    """Mock that records the peak number of concurrent ``complete`` calls."""

    def __init__(self):
        super().__init__(seed=0)
        self._lock = threading.Lock()
        self._pause = threading.Event()
        self.in_flight = 0
        self.peak = 0

    def complete(self, request):
        with self._lock:
            self.in_flight += 1
            self.peak = max(self.peak, self.in_flight)
        try:
            self._pause.wait(0.002)
            return super().complete(request)
        finally:
            with self._lock:
                self.in_flight -= 1


class ConcurrencyLimitTests(SimpleTestCase):
    def test_in_flight_requests_bounded(self):
        provider = InFlightProvider()
        gateway = mock_gateway(provider, cache=fresh_cache('gateway-concurrency'), concurrency_limit=2)
        papers = fixture_dataset().papers
        results = score_batch(papers, None, default_bank(), gateway, PipelineConfig(workers=8))
        self.assertEqual(len(results), len(papers))
        self.assertGreater(gateway.calls, 0)
        self.assertLessEqual(provider.peak, 2)


class RetryTests(SimpleTestCase):
    def gateway(self, provider, delays, **config):
        config.setdefault('retry', RetryPolicy(max_attempts=3, backoff=(1.0, 2.0, 4.0)))
        return Gateway(provider, mock_config(**config), sleep=delays.append)

    def test_transient_failures_retried_with_backoff(self):
        delays = []
        provider = ScriptedProvider([TransportError('reset'), TransportError('reset'), 'ok'])
        with self.assertLogs('Scoring.gateway', 'WARNING'):
            response = self.gateway(provider, delays).complete(request())
        self.assertEqual(response.text, 'ok')
        self.assertEqual(delays, [1.0, 2.0])

    def test_exhausted_retries(self):
        provider = ScriptedProvider([TransportError('reset')] * 3)
        with self.assertLogs('Scoring.gateway', 'WARNING'):
            with self.assertRaises(TransportError) as caught:
                self.gateway(provider, []).complete(request())
        self.assertEqual(caught.exception.attempts, 3)

    def test_authentication_not_retried(self):
        provider = ScriptedProvider([AuthenticationFailed('bad key'), 'unused'])
        with self.assertRaises(AuthenticationFailed):
            self.gateway(provider, []).complete(request())
        self.assertEqual(len(provider.requests), 1)

    def test_call_budget(self):
        gateway = self.gateway(MockProvider(), [], max_calls=1)
        gateway.complete(request(user='a'))
        with self.assertRaises(BudgetExceeded):
            gateway.complete(request(user='b'))

    def test_empty_completion(self):
        with self.assertRaises(GatewayError):
            self.gateway(ScriptedProvider(['  ']), []).complete(request())


class CompleteJsonTests(SimpleTestCase):
    def test_json_wrapped_in_prose(self):
        provider = ScriptedProvider([
            'Here is my review: {"novelty_score": "4", "confidence_score": 3, "reason": "ok"} Thanks!',
        ])
        record = mock_gateway(provider).complete_json(request(), KEYS)
        self.assertEqual(record['novelty_score'], 4.0)
        self.assertEqual(record['reason'], 'ok')

    def test_missing_key_reprompted_once(self):
        provider = ScriptedProvider([
            json.dumps({'novelty_score': 4, 'reason': 'r'}),
            json.dumps({'novelty_score': 4, 'confidence_score': 2, 'reason': 'r'}),
        ])
        with self.assertLogs('Scoring.gateway', 'WARNING'):
            record = mock_gateway(provider).complete_json(request(), KEYS)
        self.assertEqual(record['confidence_score'], 2.0)
        self.assertEqual(len(provider.requests), 2)
        self.assertIn('confidence_score', provider.requests[1].user)

    def test_second_violation_raises(self):
        provider = ScriptedProvider(['no json here', '{"novelty_score": "high", "confidence_score": 1, "reason": ""}'])
        with self.assertLogs('Scoring.gateway', 'WARNING'):
            with self.assertRaises(JSONContractError) as caught:
                mock_gateway(provider).complete_json(request(), KEYS)
        self.assertIn('novelty_score', str(caught.exception))

    def test_extract_json_object(self):
        self.assertEqual(extract_json_object('x {oops} {"a": 1} y'), {'a': 1})
        self.assertIsNone(extract_json_object('[1, 2]'))
        self.assertIsNone(extract_json_object(''))


class ClampTests(SimpleTestCase):
    def test_out_of_range_clamped_with_warning(self):
        with self.assertLogs('Scoring.gateway', 'WARNING'):
            self.assertEqual(clamp_score(7.0, 'novelty_score'), 5.0)
        with self.assertLogs('Scoring.gateway', 'WARNING'):
            self.assertEqual(clamp_score(0.0, 'confidence_score'), 1.0)
        self.assertEqual(clamp_score(3.3), 3.3)


class EmbeddingTests(SimpleTestCase):
    def test_mock_embeddings_are_unit_vectors(self):
        vectors = mock_gateway().embed(['alpha', 'beta'])
        self.assertEqual(vectors.shape, (2, 64))
        np.testing.assert_allclose(np.linalg.norm(vectors, axis=1), [1.0, 1.0])
        np.testing.assert_array_equal(vectors[0], mock_embedding('alpha'))
