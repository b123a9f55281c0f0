"""Optional semantic enrichment of trace files.

Fills the similarity matrix (pairwise response-embedding cosine mapped to
[0, 1] via (1 + cos) / 2, diagonal forced to 1) and the token-relevance
channel (1 - cosine between the full answer and each leave-one-token-out
answer, clamped into [0, 1]; clamps are counted and reported).

The built-in embedder hashes character n-grams into a signed fixed-width
vector: deterministic and offline. Any callable text -> vector can be
injected in its place.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .config import AdapterConfig
from .io import read_jsonl, write_jsonl


class HashedNgramEmbedder:
    """Signed feature-hash embedding of character 1-3 grams, L2-normalized."""

    def __init__(self, dim: int = 256):
        self.dim = dim

    def __call__(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=float)
        text = " ".join(text.lower().split())
        for n in (1, 2, 3):
            for i in range(len(text) - n + 1):
                digest = hashlib.blake2b(
                    text[i : i + n].encode("utf-8"), digest_size=8
                ).digest()
                raw = int.from_bytes(digest, "little")
                sign = 1.0 if raw & 1 else -1.0
                vec[(raw >> 1) % self.dim] += sign
        norm = float(np.linalg.norm(vec))
        if norm > 0:
            vec /= norm
        return vec


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


def enrich_trace(trace: dict, embed) -> tuple[dict, int]:
    """Returns the enriched trace and the number of clamped values."""
    clamped = 0
    samples = trace.get("samples") or []
    if len(samples) >= 2:
        vectors = [embed(s) for s in samples]
        m = len(samples)
        matrix = [[1.0] * m for _ in range(m)]
        for i in range(m):
            for j in range(i + 1, m):
                value = 0.5 * (1.0 + _cosine(vectors[i], vectors[j]))
                if value < 0.0 or value > 1.0:
                    clamped += 1
                    value = min(1.0, max(0.0, value))
                matrix[i][j] = value
                matrix[j][i] = value
        trace = {**trace, "similarity": matrix}
    tokens = [step["token"] for step in trace["greedy_steps"]]
    full_vec = embed(" ".join(tokens))
    relevance = []
    for t in range(len(tokens)):
        reduced = " ".join(tokens[:t] + tokens[t + 1 :])
        value = 1.0 - _cosine(full_vec, embed(reduced))
        if value < 0.0 or value > 1.0:
            clamped += 1
            value = min(1.0, max(0.0, value))
        relevance.append(value)
    trace = {**trace, "token_relevance": relevance}
    return trace, clamped


def attach_semantics(trace_path, out_path, config: AdapterConfig, embed=None):
    """Enrich a trace file; on backend failure the input file is left as the
    output, with a warning in the returned summary."""
    traces = read_jsonl(trace_path)
    if embed is None:
        embed = HashedNgramEmbedder()
    enriched = []
    clamped_total = 0
    try:
        for trace in traces:
            new_trace, clamped = enrich_trace(trace, embed)
            enriched.append(new_trace)
            clamped_total += clamped
    except Exception as exc:  # noqa: BLE001 — backend failure leaves input unchanged
        write_jsonl(out_path, traces)
        return {"enriched": 0, "clamped": 0, "warning": f"embedding backend failed: {exc}"}
    write_jsonl(out_path, enriched)
    summary = {"enriched": len(enriched), "clamped": clamped_total, "warning": None}
    if clamped_total:
        summary["warning"] = f"{clamped_total} values clamped into [0, 1]"
    return summary
