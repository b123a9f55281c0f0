import math

import pytest

from trace_adapter.config import AdapterConfig
from trace_adapter.generate import generate_traces
from trace_adapter.runtimes import (
    OpenAICompatRuntime,
    RuntimeFailure,
    steps_from_completion_logprobs,
)


class TestLogprobMapping:
    def test_tokens_and_tail_mass(self):
        payload = {
            "tokens": ["Par", "is"],
            "token_logprobs": [math.log(0.6), math.log(0.9)],
            "top_logprobs": [
                {"Par": math.log(0.6), "Lon": math.log(0.25), "Ber": math.log(0.1)},
                {"is": math.log(0.9), ".": math.log(0.05)},
            ],
        }
        steps = steps_from_completion_logprobs(payload, top_k=3)
        assert [s["token"] for s in steps] == ["Par", "is"]
        first = steps[0]
        assert dict((t, p) for t, p in first["topk"])["Par"] == pytest.approx(0.6)
        assert first["tail_mass"] == pytest.approx(1.0 - 0.95)
        mass = first["tail_mass"] + sum(p for _, p in first["topk"])
        assert mass == pytest.approx(1.0, abs=1e-12)

    def test_chosen_token_forced_into_topk(self):
        payload = {
            "tokens": ["rare"],
            "token_logprobs": [math.log(0.01)],
            "top_logprobs": [
                {"a": math.log(0.5), "b": math.log(0.3), "c": math.log(0.15)}
            ],
        }
        steps = steps_from_completion_logprobs(payload, top_k=3)
        topk = dict((t, p) for t, p in steps[0]["topk"])
        assert "rare" in topk
        assert topk["rare"] == pytest.approx(0.01)

    def test_missing_logprob_rejected(self):
        payload = {"tokens": ["x"], "token_logprobs": [None], "top_logprobs": [{}]}
        with pytest.raises(Exception):
            steps_from_completion_logprobs(payload, top_k=2)


class _FakeResponse:
    def __init__(self, status_code, body=None):
        self.status_code = status_code
        self._body = body or {}

    def raise_for_status(self):
        if self.status_code >= 400:
            raise RuntimeError(f"HTTP {self.status_code}")

    def json(self):
        return self._body


class _FlakySession:
    """Fails `failures` times, then returns a valid completion."""

    def __init__(self, failures):
        self.failures = failures
        self.calls = 0

    def post(self, url, json=None, timeout=None):
        self.calls += 1
        if self.calls <= self.failures:
            return _FakeResponse(503)
        return _FakeResponse(
            200,
            {
                "choices": [
                    {
                        "text": " Paris",
                        "logprobs": {
                            "tokens": ["Paris"],
                            "token_logprobs": [math.log(0.8)],
                            "top_logprobs": [
                                {"Paris": math.log(0.8), "London": math.log(0.1)}
                            ],
                        },
                    }
                ]
            },
        )


class TestRetryBackoff:
    def test_recovers_after_transient_failures(self):
        sleeps = []
        runtime = OpenAICompatRuntime(
            "http://fake", "m", session=_FlakySession(failures=2),
            max_retries=3, backoff_base=0.01, sleeper=sleeps.append,
        )
        text, steps = runtime.greedy("What is the capital of France?", top_k=2)
        assert text == "Paris"
        assert len(sleeps) == 2
        assert sleeps[1] > sleeps[0]  # exponential growth

    def test_exhausted_retries_raise(self):
        runtime = OpenAICompatRuntime(
            "http://fake", "m", session=_FlakySession(failures=99),
            max_retries=2, backoff_base=0.01, sleeper=lambda s: None,
        )
        with pytest.raises(RuntimeFailure):
            runtime.greedy("q", top_k=2)

    def test_failures_become_per_question_error_records(self, monkeypatch):
        import trace_adapter.generate as generate_module

        class _AlwaysDown:
            deterministic = False

            def greedy(self, prompt, top_k):
                raise RuntimeFailure("endpoint unreachable")

            def sample(self, *a, **k):
                raise RuntimeFailure("endpoint unreachable")

        monkeypatch.setattr(generate_module, "build_runtime", lambda config: _AlwaysDown())
        questions = [{"id": "q1", "text": "t", "aliases": ["a"]}]
        traces, correctness, errors = generate_traces(
            questions, AdapterConfig(runtime="tiny")
        )
        assert traces == [] and correctness == []
        assert errors == [{"question_id": "q1", "error": "endpoint unreachable"}]
