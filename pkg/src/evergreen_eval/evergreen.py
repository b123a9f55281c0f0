"""Evergreen probability sources and the verbal-judgment benchmark scorer.

The trainable source is a hashed character-n-gram logistic model: script
agnostic, trainable from scratch in any of the seven languages, and fully
deterministic (the n-gram hash is FNV-1a, never Python's randomized hash).
Externally produced scores enter through the same score-file schema.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import re
import struct
from dataclasses import dataclass, field

import numpy as np

from .corpus import QuestionRecord
from .errors import (
    ConfigurationError,
    DegenerateDataError,
    MissingPredictionError,
    PreconditionError,
    ValidationError,
)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

HASHING_SCHEME = "fnv1a64/utf8"


def _fnv1a(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class NGramFeaturizer:
    """Term-frequency hashed character n-grams, L2-normalized per text."""

    n_min: int = 1
    n_max: int = 4
    hash_dim: int = 2**18

    def __post_init__(self):
        if self.n_min < 1 or self.n_max < self.n_min:
            raise ValidationError(f"bad n-gram range ({self.n_min}, {self.n_max})")
        if self.hash_dim & (self.hash_dim - 1) or self.hash_dim <= 0:
            raise ValidationError(f"hash_dim must be a power of two, got {self.hash_dim}")

    def fingerprint(self) -> str:
        payload = json.dumps(
            {
                "n_range": [self.n_min, self.n_max],
                "hash_dim": self.hash_dim,
                "weighting": "tf-l2",
                "hashing": HASHING_SCHEME,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def features(self, text: str) -> dict[int, float]:
        """Sparse L2-normalized term-frequency vector of character n-grams."""
        text = " ".join(text.lower().split())
        counts: dict[int, float] = {}
        mask = self.hash_dim - 1
        for n in range(self.n_min, self.n_max + 1):
            for i in range(len(text) - n + 1):
                idx = _fnv1a(text[i : i + n].encode("utf-8")) & mask
                counts[idx] = counts.get(idx, 0.0) + 1.0
        norm = math.sqrt(sum(v * v for v in counts.values()))
        if norm > 0.0:
            for idx in counts:
                counts[idx] /= norm
        return counts


@dataclass
class LinearEvergreenModel:
    """sigmoid(w . phi(text) + b) is the probability of being evergreen."""

    featurizer: NGramFeaturizer
    weights: np.ndarray
    bias: float
    training_log: list = field(default_factory=list)

    def predict_from_features(self, feats: dict[int, float]) -> float:
        z = self.bias
        for idx, val in feats.items():
            z += self.weights[idx] * val
        return 1.0 / (1.0 + math.exp(-z))

    def predict_text(self, text: str) -> float:
        return self.predict_from_features(self.featurizer.features(text))

    def to_json_obj(self) -> dict:
        raw = struct.pack(f"<{len(self.weights)}d", *self.weights.tolist())
        return {
            "hash_dim": self.featurizer.hash_dim,
            "n_range": [self.featurizer.n_min, self.featurizer.n_max],
            "weights": base64.b64encode(raw).decode("ascii"),
            "bias": self.bias,
            "fingerprint": self.featurizer.fingerprint(),
            "training_log": self.training_log,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "LinearEvergreenModel":
        featurizer = NGramFeaturizer(
            n_min=int(obj["n_range"][0]),
            n_max=int(obj["n_range"][1]),
            hash_dim=int(obj["hash_dim"]),
        )
        if obj.get("fingerprint") != featurizer.fingerprint():
            raise ConfigurationError(
                "model fingerprint does not match this featurizer implementation"
            )
        raw = base64.b64decode(obj["weights"])
        weights = np.array(struct.unpack(f"<{len(raw) // 8}d", raw), dtype=float)
        if len(weights) != featurizer.hash_dim:
            raise ValidationError(
                f"weight vector has length {len(weights)}, expected {featurizer.hash_dim}"
            )
        return cls(
            featurizer=featurizer,
            weights=weights,
            bias=float(obj["bias"]),
            training_log=list(obj.get("training_log", [])),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "LinearEvergreenModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_obj(json.load(fh))


@dataclass(frozen=True)
class TrainingHyper:
    l2: float = 1e-6
    epochs: int = 10
    lr: float = 0.5
    seed: int = 0
    batch_size: int = 32
    patience: int = 3


def train_evergreen_baseline(
    train: list[QuestionRecord],
    hyper: TrainingHyper = TrainingHyper(),
    featurizer: NGramFeaturizer = NGramFeaturizer(),
) -> LinearEvergreenModel:
    """Mini-batch logistic regression with a fixed seeded shuffle.

    A 10% slice is held out for early stopping on weighted F1; the weights
    from the best epoch are kept. Bit-reproducible for a fixed
    (data, hyper, seed) triple.
    """
    records = list(train)
    if any(r.evergreen_label is None for r in records):
        missing = [r.id for r in records if r.evergreen_label is None][:5]
        raise ValidationError(f"records without evergreen_label: {missing}")
    labels = np.array([r.evergreen_label for r in records], dtype=float)
    if labels.min() == labels.max():
        raise DegenerateDataError("training set contains a single class")

    rng = np.random.default_rng(hyper.seed)
    order = rng.permutation(len(records))
    n_val = max(1, len(records) // 10)
    val_idx = order[:n_val]
    train_idx = order[n_val:]
    if labels[train_idx].min() == labels[train_idx].max():
        raise DegenerateDataError("training slice contains a single class after split")

    feats = [featurizer.features(r.text) for r in records]
    weights = np.zeros(featurizer.hash_dim, dtype=float)
    bias = 0.0
    best = None  # (f1, weights, bias, epoch)
    log: list[dict] = []
    epochs_since_best = 0

    for epoch in range(hyper.epochs):
        perm = rng.permutation(train_idx)
        epoch_loss = 0.0
        for start in range(0, len(perm), hyper.batch_size):
            batch = perm[start : start + hyper.batch_size]
            grad_b = 0.0
            grad_sparse: dict[int, float] = {}
            for i in batch:
                z = bias + sum(weights[idx] * v for idx, v in feats[i].items())
                p = 1.0 / (1.0 + math.exp(-z))
                err = p - labels[i]
                epoch_loss += -(
                    labels[i] * math.log(max(p, 1e-12))
                    + (1.0 - labels[i]) * math.log(max(1.0 - p, 1e-12))
                )
                grad_b += err
                for idx, v in feats[i].items():
                    grad_sparse[idx] = grad_sparse.get(idx, 0.0) + err * v
            scale = hyper.lr / len(batch)
            bias -= scale * grad_b
            if hyper.l2 > 0.0:
                weights *= 1.0 - hyper.lr * hyper.l2
            for idx, g in grad_sparse.items():
                weights[idx] -= scale * g

        val_pred = [
            1 if _sigmoid(bias + sum(weights[i] * v for i, v in feats[j].items())) >= 0.5 else 0
            for j in val_idx
        ]
        val_f1 = weighted_f1([int(labels[j]) for j in val_idx], val_pred)
        log.append(
            {
                "epoch": epoch,
                "train_loss": float(epoch_loss / len(train_idx)),
                "val_weighted_f1": float(val_f1),
            }
        )
        if best is None or val_f1 > best[0]:
            best = (val_f1, weights.copy(), bias, epoch)
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= hyper.patience:
                break

    assert best is not None
    _, best_w, best_b, best_epoch = best
    log.append({"selected_epoch": best_epoch})
    return LinearEvergreenModel(
        featurizer=featurizer, weights=best_w, bias=best_b, training_log=log
    )


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def evergreen_probability(model: LinearEvergreenModel, q: QuestionRecord) -> float:
    """Deterministic sigmoid score for one question."""
    return model.predict_text(q.text)


# ---------------------------------------------------------------------------
# Verbal judgments


JUDGMENT_EVERGREEN = "evergreen"
JUDGMENT_MUTABLE = "mutable"
JUDGMENT_UNPARSEABLE = "unparseable"

_MARKER = re.compile(r"classification\s*:", re.IGNORECASE)
_WORD = re.compile(r"[^\W\d_]+", re.UNICODE)


@dataclass(frozen=True)
class VerbalJudgment:
    question_id: str
    raw_output: str
    parsed: str


def parse_verbal_judgment(raw: str, question_id: str = "") -> VerbalJudgment:
    """Classify the alphabetic word after the last "Classification:" marker.

    "Immutable" maps to evergreen, "Mutable" to mutable (case-insensitive);
    a missing marker or any other word is unparseable, which is a value
    rather than an error.
    """
    parsed = JUDGMENT_UNPARSEABLE
    last = None
    for match in _MARKER.finditer(raw):
        last = match
    if last is not None:
        word_match = _WORD.search(raw, last.end())
        if word_match is not None:
            word = word_match.group(0).lower()
            if word == "immutable":
                parsed = JUDGMENT_EVERGREEN
            elif word == "mutable":
                parsed = JUDGMENT_MUTABLE
    return VerbalJudgment(question_id=question_id, raw_output=raw, parsed=parsed)


# ---------------------------------------------------------------------------
# Weighted F1 and the benchmark report


def weighted_f1(labels, predictions) -> float:
    """Per-class F1 averaged with weights proportional to class support.

    A class with no true and no predicted members contributes F1 = 0 (with
    zero weight, so it never changes the average).
    """
    labels = list(labels)
    predictions = list(predictions)
    if len(labels) != len(predictions):
        raise ValidationError(
            f"length mismatch: {len(labels)} labels vs {len(predictions)} predictions"
        )
    if not labels:
        raise PreconditionError("weighted_f1 requires at least one example")
    n = len(labels)
    score = 0.0
    for cls in (0, 1):
        tp = sum(1 for y, p in zip(labels, predictions) if y == cls and p == cls)
        fp = sum(1 for y, p in zip(labels, predictions) if y != cls and p == cls)
        fn = sum(1 for y, p in zip(labels, predictions) if y == cls and p != cls)
        support = tp + fn
        denom = 2 * tp + fp + fn
        f1 = (2 * tp / denom) if denom > 0 else 0.0
        score += (support / n) * f1
    return score


def random_baseline_f1(labels, trials: int = 10_000, seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo weighted F1 of a label-frequency-matched random predictor.

    Predictions are drawn with the empirical class frequencies of the
    labels; returns (mean, std) over trials.
    """
    labels = [int(v) for v in labels]
    if not labels:
        raise PreconditionError("random_baseline_f1 requires at least one label")
    rng = np.random.default_rng(seed)
    p_one = sum(labels) / len(labels)
    scores = np.empty(trials, dtype=float)
    arr = np.array(labels)
    n = len(arr)
    pos = arr == 1
    n_pos = int(pos.sum())
    for t in range(trials):
        preds = rng.random(n) < p_one
        tp1 = int((pos & preds).sum())
        pred1 = int(preds.sum())
        f1_one = 2 * tp1 / (n_pos + pred1) if (n_pos + pred1) > 0 else 0.0
        tp0 = int((~pos & ~preds).sum())
        f1_zero = 2 * tp0 / (2 * n - n_pos - pred1) if (2 * n - n_pos - pred1) > 0 else 0.0
        scores[t] = (n_pos * f1_one + (n - n_pos) * f1_zero) / n
    return float(scores.mean()), float(scores.std())


@dataclass(frozen=True)
class EvergreenReportRow:
    source: str
    per_language: dict[str, float]
    average: float
    unparseable_rate: float


def evergreen_report(
    sources: dict[str, dict[str, object]],
    test: list[QuestionRecord],
    baseline_seed: int = 0,
    baseline_trials: int = 10_000,
    include_random_baseline: bool = True,
) -> list[EvergreenReportRow]:
    """Weighted F1 per language per source, plus the average column.

    A source maps question id to a binary prediction (1 = evergreen) or a
    VerbalJudgment. Unparseable judgments count as wrong predictions and
    are reported separately as a rate. Every test question must be covered
    by every source.
    """
    test = [q for q in test if q.evergreen_label is not None]
    if not test:
        raise PreconditionError("no labeled test questions to score")
    languages = sorted({q.language for q in test})
    rows: list[EvergreenReportRow] = []
    for name, predictions in sorted(sources.items()):
        missing = [q.id for q in test if q.id not in predictions]
        if missing:
            raise MissingPredictionError(
                f"source {name!r} misses predictions for {len(missing)} questions, "
                f"e.g. {missing[:5]}"
            )
        per_language: dict[str, float] = {}
        unparseable = 0
        for lang in languages:
            qs = [q for q in test if q.language == lang]
            labels = [q.evergreen_label for q in qs]
            preds = []
            for q in qs:
                pred = predictions[q.id]
                if isinstance(pred, VerbalJudgment):
                    if pred.parsed == JUDGMENT_EVERGREEN:
                        preds.append(1)
                    elif pred.parsed == JUDGMENT_MUTABLE:
                        preds.append(0)
                    else:
                        unparseable += 1
                        preds.append(1 - q.evergreen_label)  # counted as wrong
                else:
                    preds.append(int(pred))
            per_language[lang] = weighted_f1(labels, preds)
        avg = sum(per_language.values()) / len(per_language)
        rows.append(
            EvergreenReportRow(
                source=name,
                per_language=per_language,
                average=avg,
                unparseable_rate=unparseable / len(test),
            )
        )
    if include_random_baseline:
        per_language = {}
        for lang in languages:
            labels = [q.evergreen_label for q in test if q.language == lang]
            mean, _ = random_baseline_f1(labels, trials=baseline_trials, seed=baseline_seed)
            per_language[lang] = mean
        rows.append(
            EvergreenReportRow(
                source="random-baseline",
                per_language=per_language,
                average=sum(per_language.values()) / len(per_language),
                unparseable_rate=0.0,
            )
        )
    return rows
