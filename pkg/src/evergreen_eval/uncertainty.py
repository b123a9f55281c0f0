"""The six uncertainty estimators over recorded generation traces.

Logit-based: perplexity, mean/max token entropy, relevance-weighted entropy
(SAR). Consistency-based: negated lexical similarity and the eigenvalue
score of the normalized Laplacian of a response-similarity graph.

Every score is oriented so that larger means more uncertain. Natural
logarithms throughout.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .corpus import GenerationTrace, TokenStep
from .eigen import symmetric_eigenvalues
from .errors import DegenerateDataError, PreconditionError, ValidationError

TAIL_MODE_BUCKET = "bucket"
TAIL_MODE_SPREAD = "spread"
LAPLACIAN_LIN_CLIPPED = "lin_clipped"
LAPLACIAN_RAW_SUM = "raw_sum"

METRIC_NAMES = (
    "perplexity",
    "mean_token_entropy",
    "max_token_entropy",
    "neg_lexical_similarity",
    "sar",
    "eigval_laplacian",
)


@dataclass(frozen=True)
class UncertaintyConfig:
    """One configuration shared by all six metrics.

    tail_mode "bucket" treats the truncated tail as a single outcome;
    "spread" distributes it uniformly over the remaining vocab_size - k
    tokens and therefore requires vocab_size.
    """

    tail_mode: str = TAIL_MODE_BUCKET
    vocab_size: int | None = None
    laplacian_variant: str = LAPLACIAN_LIN_CLIPPED

    def __post_init__(self):
        if self.tail_mode not in (TAIL_MODE_BUCKET, TAIL_MODE_SPREAD):
            raise ValidationError(f"unknown tail_mode {self.tail_mode!r}")
        if self.tail_mode == TAIL_MODE_SPREAD and self.vocab_size is None:
            raise ValidationError("tail_mode 'spread' requires vocab_size")
        if self.laplacian_variant not in (LAPLACIAN_LIN_CLIPPED, LAPLACIAN_RAW_SUM):
            raise ValidationError(
                f"unknown laplacian_variant {self.laplacian_variant!r}"
            )

    def fingerprint(self) -> str:
        payload = json.dumps(
            {
                "tail_mode": self.tail_mode,
                "vocab_size": self.vocab_size,
                "laplacian_variant": self.laplacian_variant,
                "kernel": "rouge_l_f/whitespace",
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class UncertaintyVector:
    question_id: str
    model_id: str
    perplexity: float
    mean_token_entropy: float
    max_token_entropy: float
    sar: float
    neg_lexical_similarity: float | None
    eigval_laplacian: float | None
    config_fingerprint: str

    def to_json_obj(self) -> dict:
        return {
            "question_id": self.question_id,
            "model_id": self.model_id,
            "perplexity": self.perplexity,
            "mean_token_entropy": self.mean_token_entropy,
            "max_token_entropy": self.max_token_entropy,
            "neg_lexical_similarity": self.neg_lexical_similarity,
            "sar": self.sar,
            "eigval_laplacian": self.eigval_laplacian,
            "config_fingerprint": self.config_fingerprint,
        }


@dataclass(frozen=True)
class SimilarityGraph:
    """Pairwise response similarities in [0, 1], symmetric, unit diagonal."""

    weights: tuple[tuple[float, ...], ...]
    provenance: str  # "provided" | "lexical_fallback"

    @property
    def size(self) -> int:
        return len(self.weights)

    def validate(self) -> None:
        m = len(self.weights)
        if m < 2:
            raise ValidationError(f"similarity graph needs at least 2 nodes, got {m}")
        for i in range(m):
            if len(self.weights[i]) != m:
                raise ValidationError("similarity graph must be square")
            if abs(self.weights[i][i] - 1.0) != 0.0:
                raise ValidationError("similarity graph diagonal must be exactly 1")
            for j in range(m):
                v = self.weights[i][j]
                if not (0.0 <= v <= 1.0):
                    raise ValidationError(f"similarity weight {v} outside [0, 1]")
                if abs(self.weights[i][j] - self.weights[j][i]) > 1e-9:
                    raise ValidationError("similarity graph must be symmetric")


# ---------------------------------------------------------------------------
# Logit-based scores


def perplexity(steps) -> float:
    """exp of the mean negative token log-probability."""
    steps = list(steps)
    if not steps:
        raise PreconditionError("perplexity requires at least one step")
    total = 0.0
    for t, step in enumerate(steps):
        lp = step.logprob if isinstance(step, TokenStep) else float(step)
        if lp > 1e-9:
            raise ValidationError(f"step {t}: logprob {lp} is positive")
        total += lp
    return math.exp(-total / len(steps))


def _step_entropy(step: TokenStep, tail_mode: str, vocab_size: int | None) -> float:
    h = 0.0
    for _, p in step.topk:
        h -= p * math.log(p)
    r = step.tail_mass
    if r >= 1.0:
        raise ValidationError(f"tail_mass {r} must be < 1")
    if r > 0.0:
        if tail_mode == TAIL_MODE_BUCKET:
            h -= r * math.log(r)
        else:
            n_rest = vocab_size - len(step.topk)
            if n_rest <= 0:
                raise ValidationError(
                    f"spread tail mode needs vocab_size > top-k size "
                    f"({vocab_size} <= {len(step.topk)})"
                )
            h -= r * math.log(r / n_rest)
    return h


def token_entropy_profile(
    steps, tail_mode: str = TAIL_MODE_BUCKET, vocab_size: int | None = None
) -> list[float]:
    """Per-step entropy of the recorded top-k distribution plus tail term."""
    steps = list(steps)
    if not steps:
        raise PreconditionError("token_entropy_profile requires at least one step")
    if tail_mode == TAIL_MODE_SPREAD and vocab_size is None:
        raise ValidationError("tail_mode 'spread' requires vocab_size")
    return [_step_entropy(s, tail_mode, vocab_size) for s in steps]


def sar(entropies, relevance, greedy_tokens) -> float:
    """Relevance-weighted entropy sum.

    Weights come from the provided relevance channel, or from a
    leave-one-token-out lexical proxy: R_t = 1 - rouge_l_f(answer,
    answer without token t). Normalized weights are rescaled by T so that
    uniform relevance reduces to the plain entropy sum.
    """
    entropies = list(entropies)
    tokens = list(greedy_tokens)
    T = len(entropies)
    if T == 0:
        raise PreconditionError("sar requires at least one step")
    if len(tokens) != T:
        raise ValidationError(
            f"sar: {T} entropies but {len(tokens)} greedy tokens"
        )
    if relevance is None:
        full = " ".join(tokens)
        rel = [
            1.0 - rouge_l_f(full, " ".join(tokens[:t] + tokens[t + 1 :]))
            for t in range(T)
        ]
    else:
        rel = [float(r) for r in relevance]
        if len(rel) != T:
            raise ValidationError(f"sar: {T} entropies but {len(rel)} relevance values")
        for r in rel:
            if not (0.0 <= r <= 1.0):
                raise ValidationError(f"sar: relevance value {r} outside [0, 1]")
    total = sum(rel)
    if total == 0.0:
        weights = [1.0 / T] * T
    else:
        weights = [r / total for r in rel]
    return T * sum(w * h for w, h in zip(weights, entropies))


# ---------------------------------------------------------------------------
# Lexical kernel and consistency scores


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        ai = a[i - 1]
        for j in range(1, len(b) + 1):
            if ai == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = cur[j - 1] if cur[j - 1] >= prev[j] else prev[j]
        prev = cur
    return prev[len(b)]


def rouge_l_f(a: str, b: str) -> float:
    """LCS F-measure over whitespace tokens; 0 when either side is empty."""
    ta = a.split()
    tb = b.split()
    if not ta or not tb:
        return 0.0
    lcs = _lcs_length(ta, tb)
    if lcs == 0:
        return 0.0
    precision = lcs / len(tb)
    recall = lcs / len(ta)
    return 2.0 * precision * recall / (precision + recall)


def neg_lexical_similarity(samples) -> float:
    """1 minus the mean pairwise lexical overlap among sampled responses."""
    samples = list(samples)
    m = len(samples)
    if m < 2:
        raise PreconditionError(
            f"neg_lexical_similarity requires at least 2 samples, got {m}"
        )
    total = 0.0
    pairs = 0
    for i in range(m):
        for j in range(i + 1, m):
            total += rouge_l_f(samples[i], samples[j])
            pairs += 1
    return 1.0 - total / pairs


def response_similarity_matrix(trace: GenerationTrace) -> SimilarityGraph:
    """Provided similarity matrix if present, else the lexical kernel."""
    m = trace.num_samples
    if m < 2:
        raise PreconditionError(
            f"similarity graph requires at least 2 samples, got {m}"
        )
    if trace.similarity is not None:
        graph = SimilarityGraph(weights=trace.similarity, provenance="provided")
        graph.validate()
        return graph
    weights = [[1.0] * m for _ in range(m)]
    for i in range(m):
        for j in range(i + 1, m):
            w = rouge_l_f(trace.samples[i], trace.samples[j])
            weights[i][j] = w
            weights[j][i] = w
    graph = SimilarityGraph(
        weights=tuple(tuple(row) for row in weights), provenance="lexical_fallback"
    )
    graph.validate()
    return graph


def normalized_laplacian(graph: SimilarityGraph) -> np.ndarray:
    w = np.array(graph.weights, dtype=float)
    degrees = w.sum(axis=1)
    if np.any(degrees <= 0.0):
        raise DegenerateDataError("similarity graph has a zero-degree node")
    d_inv_sqrt = 1.0 / np.sqrt(degrees)
    return np.eye(len(w)) - (d_inv_sqrt[:, None] * w * d_inv_sqrt[None, :])


def eigval_laplacian_score(
    graph: SimilarityGraph, variant: str = LAPLACIAN_LIN_CLIPPED
) -> float:
    """Spectral diversity of the response graph.

    lin_clipped sums max(0, 1 - lambda_k); raw_sum sums the eigenvalues of
    the normalized Laplacian directly.
    """
    graph.validate()
    eigenvalues = symmetric_eigenvalues(normalized_laplacian(graph))
    if variant == LAPLACIAN_LIN_CLIPPED:
        return sum(max(0.0, 1.0 - lam) for lam in eigenvalues)
    if variant == LAPLACIAN_RAW_SUM:
        return sum(eigenvalues)
    raise ValidationError(f"unknown laplacian variant {variant!r}")


# ---------------------------------------------------------------------------
# Aggregation


def compute_uncertainty(
    trace: GenerationTrace, config: UncertaintyConfig = UncertaintyConfig()
) -> UncertaintyVector:
    """All six scores for one trace under one configuration.

    Consistency scores need at least two sampled responses; with fewer they
    are emitted as None (serialized as null).
    """
    entropies = token_entropy_profile(
        trace.greedy_steps, config.tail_mode, config.vocab_size
    )
    tokens = [s.token for s in trace.greedy_steps]
    relevance = None if trace.token_relevance is None else list(trace.token_relevance)

    if trace.num_samples >= 2:
        neg_lex = neg_lexical_similarity(trace.samples)
        graph = response_similarity_matrix(trace)
        eig = eigval_laplacian_score(graph, config.laplacian_variant)
    else:
        neg_lex = None
        eig = None

    return UncertaintyVector(
        question_id=trace.question_id,
        model_id=trace.model_id,
        perplexity=perplexity(trace.greedy_steps),
        mean_token_entropy=float(np.mean(entropies)),
        max_token_entropy=float(np.max(entropies)),
        sar=sar(entropies, relevance, tokens),
        neg_lexical_similarity=neg_lex,
        eigval_laplacian=eig,
        config_fingerprint=config.fingerprint(),
    )
