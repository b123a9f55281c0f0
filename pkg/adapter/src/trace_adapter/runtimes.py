"""Model runtimes behind one small interface.

Three implementations: a built-in deterministic toy language model (real
probability distributions over a small vocabulary, so traces carry honest
top-k mass), a stub echo runtime for wiring tests, and a client for
OpenAI-compatible completion endpoints with retry/backoff.
"""

from __future__ import annotations

import hashlib
import math
import random
import time

from .config import AdapterConfig, AdapterError


class RuntimeFailure(AdapterError):
    """Raised after retries are exhausted; recorded per question."""


_VOCAB = (
    "river stone maple cloud amber falcon harbor cedar meadow copper "
    "lantern breeze summit willow ember valley comet birch quartz heron "
    "anchor raven tundra lagoon prairie jasper orchid delta mesa fjord "
    "atlas crater nectar sparrow timber zephyr"
).split()


def _unit_hash(*parts: str) -> float:
    """Deterministic float in [0, 1) from the parts."""
    digest = hashlib.blake2b("|".join(parts).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") / 2.0**64


class TinyLMRuntime:
    """Deterministic toy LM: per-position softmax over a small vocabulary.

    Logits are hash-derived from (prompt, position, previous token, word),
    so the model is a pure function of its inputs; sampling adds a seeded
    RNG on top. Spread controls how peaked the distributions are.
    """

    deterministic = True

    def __init__(self, model: str = "tiny-lm-v1", spread: float = 6.0):
        self.model = model
        self.spread = spread

    def _distribution(self, prompt: str, position: int, prev: str) -> list[tuple[str, float]]:
        logits = [
            self.spread * _unit_hash(self.model, prompt, str(position), prev, word)
            for word in _VOCAB
        ]
        peak = max(logits)
        weights = [math.exp(l - peak) for l in logits]
        total = sum(weights)
        return [(word, w / total) for word, w in zip(_VOCAB, weights)]

    def _length(self, prompt: str) -> int:
        return 3 + int(_unit_hash(self.model, prompt, "length") * 4)  # 3..6 tokens

    def greedy(self, prompt: str, top_k: int):
        """(answer text, steps) where steps carry the recorded top-k mass."""
        steps = []
        tokens: list[str] = []
        prev = "<s>"
        for position in range(self._length(prompt)):
            dist = sorted(
                self._distribution(prompt, position, prev),
                key=lambda item: (-item[1], item[0]),
            )
            head = dist[:top_k]
            head_mass = sum(p for _, p in head)
            tail = 1.0 - head_mass
            if abs(tail) < 1e-12:
                tail = 0.0
            chosen, p_chosen = head[0]
            steps.append(
                {
                    "token": chosen,
                    "logprob": math.log(p_chosen),
                    "topk": [[tok, p] for tok, p in head],
                    "tail_mass": tail,
                }
            )
            tokens.append(chosen)
            prev = chosen
        return " ".join(tokens), steps

    def sample(self, prompt: str, index: int, temperature: float, top_p: float,
               seed: int) -> str:
        rng = random.Random(f"{seed}|{prompt}|{index}")
        tokens: list[str] = []
        prev = "<s>"
        for position in range(self._length(prompt)):
            dist = sorted(
                self._distribution(prompt, position, prev),
                key=lambda item: (-item[1], item[0]),
            )
            if temperature <= 0:
                chosen = dist[0][0]
            else:
                weights = [p ** (1.0 / temperature) for _, p in dist]
                total = sum(weights)
                weights = [w / total for w in weights]
                # nucleus truncation
                kept: list[tuple[str, float]] = []
                mass = 0.0
                for (word, _), w in zip(dist, weights):
                    kept.append((word, w))
                    mass += w
                    if mass >= top_p:
                        break
                r = rng.random() * mass
                acc = 0.0
                chosen = kept[-1][0]
                for word, w in kept:
                    acc += w
                    if r <= acc:
                        chosen = word
                        break
            tokens.append(chosen)
            prev = chosen
        return " ".join(tokens)

    def complete_text(self, prompt: str, seed: int) -> str:
        return self.sample(prompt, index=0, temperature=0.7, top_p=0.9, seed=seed)


class StubEchoRuntime:
    """Returns a fixed response; useful for end-to-end wiring tests."""

    deterministic = True

    def __init__(self, text: str = "Classification: Mutable"):
        self.text = text

    def greedy(self, prompt: str, top_k: int):
        tokens = self.text.split() or ["."]
        steps = [
            {"token": tok, "logprob": 0.0, "topk": [[tok, 1.0]], "tail_mass": 0.0}
            for tok in tokens
        ]
        return self.text, steps

    def sample(self, prompt: str, index: int, temperature: float, top_p: float,
               seed: int) -> str:
        return self.text

    def complete_text(self, prompt: str, seed: int) -> str:
        return self.text


def steps_from_completion_logprobs(payload: dict, top_k: int) -> list[dict]:
    """Map an OpenAI-style logprobs block to recorded steps.

    Expects {"tokens": [...], "token_logprobs": [...], "top_logprobs":
    [{token: logprob, ...}, ...]}. The chosen token always enters the
    recorded top-k with exactly exp(its logprob); the tail is whatever
    probability the record leaves unaccounted for.
    """
    tokens = payload["tokens"]
    token_logprobs = payload["token_logprobs"]
    top_logprobs = payload.get("top_logprobs") or [{} for _ in tokens]
    steps = []
    for tok, lp, top in zip(tokens, token_logprobs, top_logprobs):
        if lp is None:
            raise AdapterError(f"runtime returned no logprob for token {tok!r}")
        entries = {str(t): math.exp(float(v)) for t, v in (top or {}).items()}
        entries[str(tok)] = math.exp(float(lp))
        ranked = sorted(entries.items(), key=lambda item: (-item[1], item[0]))[:top_k]
        if str(tok) not in dict(ranked):
            ranked = ranked[: top_k - 1] + [(str(tok), math.exp(float(lp)))]
        head_mass = sum(p for _, p in ranked)
        tail = max(0.0, 1.0 - head_mass)
        steps.append(
            {
                "token": str(tok),
                "logprob": float(lp),
                "topk": [[t, p] for t, p in ranked],
                "tail_mass": tail,
            }
        )
    return steps


class OpenAICompatRuntime:
    """Client for /v1/completions-style endpoints exposing token logprobs.

    Sampling is reproducible only if the endpoint honours a seed; this
    client does not assume so and reports deterministic = False.
    """

    deterministic = False

    def __init__(self, endpoint: str, model: str, top_k: int = 5, session=None,
                 max_retries: int = 4, backoff_base: float = 0.5,
                 sleeper=time.sleep):
        if session is None:
            import requests

            session = requests.Session()
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.top_k = top_k
        self.session = session
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.sleeper = sleeper

    def _post(self, body: dict, seed_tag: str) -> dict:
        jitter = random.Random(seed_tag)
        last_error = None
        for attempt in range(self.max_retries + 1):
            try:
                response = self.session.post(
                    f"{self.endpoint}/completions", json=body, timeout=120
                )
                if response.status_code >= 500 or response.status_code == 429:
                    raise AdapterError(f"HTTP {response.status_code}")
                response.raise_for_status()
                return response.json()
            except Exception as exc:  # noqa: BLE001 — every failure is retryable here
                last_error = exc
                if attempt == self.max_retries:
                    break
                self.sleeper(self.backoff_base * 2**attempt + 0.1 * jitter.random())
        raise RuntimeFailure(f"endpoint failed after {self.max_retries + 1} attempts: {last_error}")

    def greedy(self, prompt: str, top_k: int):
        payload = self._post(
            {
                "model": self.model,
                "prompt": prompt,
                "temperature": 0,
                "logprobs": top_k,
                "max_tokens": 64,
            },
            seed_tag=f"greedy|{prompt}",
        )
        choice = payload["choices"][0]
        steps = steps_from_completion_logprobs(choice["logprobs"], top_k)
        return choice["text"].strip(), steps

    def sample(self, prompt: str, index: int, temperature: float, top_p: float,
               seed: int) -> str:
        payload = self._post(
            {
                "model": self.model,
                "prompt": prompt,
                "temperature": temperature,
                "top_p": top_p,
                "max_tokens": 64,
            },
            seed_tag=f"sample|{prompt}|{index}|{seed}",
        )
        return payload["choices"][0]["text"].strip()

    def complete_text(self, prompt: str, seed: int) -> str:
        return self.sample(prompt, index=0, temperature=0.7, top_p=0.9, seed=seed)


def build_runtime(config: AdapterConfig):
    if config.runtime == "tiny":
        return TinyLMRuntime(model=config.model)
    if config.runtime == "stub-echo":
        return StubEchoRuntime(text=config.stub_text)
    return OpenAICompatRuntime(
        endpoint=config.endpoint,
        model=config.model,
        top_k=config.top_k,
        max_retries=config.max_retries,
        backoff_base=config.backoff_base,
    )
