"""Adapter run configuration."""

from __future__ import annotations

from dataclasses import dataclass, field


class AdapterError(Exception):
    pass


@dataclass(frozen=True)
class AdapterConfig:
    """Settings for one generation run.

    runtime is "tiny" (built-in deterministic toy LM), "stub-echo"
    (fixed-response runtime for wiring tests), or "openai" (an
    OpenAI-compatible completions endpoint; set endpoint/model).
    """

    runtime: str = "tiny"
    endpoint: str | None = None
    model: str = "tiny-lm-v1"
    temperature: float = 0.7
    top_p: float = 0.9
    num_samples: int = 2          # M stochastic samples per question
    top_k: int = 5                # recorded distribution depth per step
    similarity_backend: str = "none"   # none | embedding
    prompt_template: str = "verbal_classify_v1"
    seed: int = 0
    max_in_flight: int = 4
    max_retries: int = 4
    backoff_base: float = 0.5
    stub_text: str = "Classification: Mutable"

    def __post_init__(self):
        if self.num_samples < 0:
            raise AdapterError(f"num_samples must be >= 0, got {self.num_samples}")
        if self.top_k < 1:
            raise AdapterError(f"top_k must be >= 1, got {self.top_k}")
        if self.similarity_backend not in ("none", "embedding"):
            raise AdapterError(
                f"unknown similarity backend {self.similarity_backend!r}"
            )
        if self.runtime not in ("tiny", "stub-echo", "openai"):
            raise AdapterError(f"unknown runtime {self.runtime!r}")
        if self.runtime == "openai" and not self.endpoint:
            raise AdapterError("runtime 'openai' requires an endpoint")
