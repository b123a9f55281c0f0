"""Domain records, JSONL ingestion, text normalization and In-Accuracy.

File formats are line-delimited JSON (UTF-8, one object per line):

* question:    {"id", "text", "language", "evergreen_label" (0/1/null),
                "aliases": [...], "split", "source_dataset"}
* trace:       {"question_id", "model_id", "greedy_answer",
                "greedy_steps": [{"token", "logprob", "topk": [["tok", p], ...],
                "tail_mass"}], "samples": [...], "similarity": [[...]]|null,
                "token_relevance": [...]|null}
* correctness: {"question_id", "y"}

Loaders validate every declared invariant and never return a partially
loaded collection. All records are immutable after load.
"""

from __future__ import annotations

import json
import math
import string
from dataclasses import dataclass

from .errors import ParseError, PreconditionError, ValidationError

LANGUAGES = ("ru", "en", "fr", "de", "he", "ar", "zh")
SPLITS = ("train", "validation", "test")

MASS_TOL = 1e-6
LOGPROB_TOL = 1e-9
# Similarity matrices this far from symmetric are rejected outright; smaller
# asymmetry is averaged away so downstream code sees an exactly symmetric W.
SIMILARITY_ASYMMETRY_TOL = 1e-6
DIAGONAL_TOL = 1e-9

_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


@dataclass(frozen=True)
class QuestionRecord:
    id: str
    text: str
    language: str
    evergreen_label: int | None
    aliases: tuple[str, ...]
    split: str
    source_dataset: str

    def validate(self) -> None:
        if not self.id:
            raise ValidationError("question id must be a non-empty string")
        if self.language not in LANGUAGES:
            raise ValidationError(
                f"question {self.id!r}: unknown language {self.language!r} "
                f"(expected one of {', '.join(LANGUAGES)})"
            )
        if self.evergreen_label not in (0, 1, None):
            raise ValidationError(
                f"question {self.id!r}: evergreen_label must be 0, 1 or null"
            )
        if self.split not in SPLITS:
            raise ValidationError(
                f"question {self.id!r}: unknown split {self.split!r}"
            )
        if not all(isinstance(a, str) for a in self.aliases):
            raise ValidationError(f"question {self.id!r}: aliases must be strings")

    def to_json_obj(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "language": self.language,
            "evergreen_label": self.evergreen_label,
            "aliases": list(self.aliases),
            "split": self.split,
            "source_dataset": self.source_dataset,
        }


@dataclass(frozen=True)
class TokenStep:
    token: str
    logprob: float
    topk: tuple[tuple[str, float], ...]
    tail_mass: float

    def validate(self, where: str = "") -> None:
        ctx = f"{where}: " if where else ""
        if not math.isfinite(self.logprob) or self.logprob > LOGPROB_TOL:
            raise ValidationError(f"{ctx}logprob must be finite and <= 0, got {self.logprob}")
        if not (0.0 <= self.tail_mass < 1.0):
            raise ValidationError(f"{ctx}tail_mass must lie in [0, 1), got {self.tail_mass}")
        mass = self.tail_mass
        for tok, p in self.topk:
            if not (0.0 < p <= 1.0):
                raise ValidationError(f"{ctx}topk probability for {tok!r} outside (0, 1]: {p}")
            mass += p
        if abs(mass - 1.0) > MASS_TOL:
            raise ValidationError(
                f"{ctx}topk + tail_mass sums to {mass:.9f}, expected 1 within {MASS_TOL}"
            )
        for tok, p in self.topk:
            if tok == self.token:
                if abs(p - math.exp(self.logprob)) > MASS_TOL:
                    raise ValidationError(
                        f"{ctx}chosen token {tok!r} has topk probability {p} "
                        f"but exp(logprob) = {math.exp(self.logprob):.9f}"
                    )
                break

    def to_json_obj(self) -> dict:
        return {
            "token": self.token,
            "logprob": self.logprob,
            "topk": [[tok, p] for tok, p in self.topk],
            "tail_mass": self.tail_mass,
        }


@dataclass(frozen=True)
class GenerationTrace:
    question_id: str
    model_id: str
    greedy_answer: str
    greedy_steps: tuple[TokenStep, ...]
    samples: tuple[str, ...]
    similarity: tuple[tuple[float, ...], ...] | None = None
    token_relevance: tuple[float, ...] | None = None

    @property
    def num_steps(self) -> int:
        return len(self.greedy_steps)

    @property
    def num_samples(self) -> int:
        return len(self.samples)

    def validate(self) -> None:
        qid = self.question_id
        if not qid:
            raise ValidationError("trace question_id must be non-empty")
        if len(self.greedy_steps) < 1:
            raise ValidationError(f"trace {qid!r}: greedy_steps must contain at least one step")
        for t, step in enumerate(self.greedy_steps):
            step.validate(where=f"trace {qid!r} step {t}")
        if self.similarity is not None:
            _validate_similarity(self.similarity, len(self.samples), qid)
        if self.token_relevance is not None:
            if len(self.token_relevance) != len(self.greedy_steps):
                raise ValidationError(
                    f"trace {qid!r}: token_relevance has length "
                    f"{len(self.token_relevance)}, expected {len(self.greedy_steps)}"
                )
            for r in self.token_relevance:
                if not (0.0 <= r <= 1.0):
                    raise ValidationError(
                        f"trace {qid!r}: token_relevance value {r} outside [0, 1]"
                    )

    def to_json_obj(self) -> dict:
        return {
            "question_id": self.question_id,
            "model_id": self.model_id,
            "greedy_answer": self.greedy_answer,
            "greedy_steps": [s.to_json_obj() for s in self.greedy_steps],
            "samples": list(self.samples),
            "similarity": None
            if self.similarity is None
            else [list(row) for row in self.similarity],
            "token_relevance": None
            if self.token_relevance is None
            else list(self.token_relevance),
        }


@dataclass(frozen=True)
class CorrectnessLabel:
    question_id: str
    y: int

    def validate(self) -> None:
        if self.y not in (0, 1):
            raise ValidationError(
                f"correctness for {self.question_id!r}: y must be 0 or 1, got {self.y}"
            )

    def to_json_obj(self) -> dict:
        return {"question_id": self.question_id, "y": self.y}


def _validate_similarity(matrix, m: int, qid: str) -> None:
    if len(matrix) != m or any(len(row) != m for row in matrix):
        shape = f"{len(matrix)}x{len(matrix[0]) if matrix else 0}"
        raise ValidationError(
            f"trace {qid!r}: similarity must be {m}x{m} (one row per sample), got {shape}"
        )
    for i in range(m):
        for j in range(m):
            v = matrix[i][j]
            if not (0.0 <= v <= 1.0):
                raise ValidationError(
                    f"trace {qid!r}: similarity[{i}][{j}] = {v} outside [0, 1]"
                )
            if abs(matrix[i][j] - matrix[j][i]) > SIMILARITY_ASYMMETRY_TOL:
                raise ValidationError(
                    f"trace {qid!r}: similarity asymmetry at ({i},{j}) exceeds "
                    f"{SIMILARITY_ASYMMETRY_TOL}: {matrix[i][j]} vs {matrix[j][i]}"
                )
        if abs(matrix[i][i] - 1.0) > DIAGONAL_TOL:
            raise ValidationError(
                f"trace {qid!r}: similarity diagonal entry {i} is {matrix[i][i]}, expected 1"
            )


def _symmetrize(matrix) -> tuple[tuple[float, ...], ...]:
    m = len(matrix)
    return tuple(
        tuple(
            1.0 if i == j else 0.5 * (matrix[i][j] + matrix[j][i])
            for j in range(m)
        )
        for i in range(m)
    )


# ---------------------------------------------------------------------------
# JSONL ingestion


def _iter_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: malformed JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise ParseError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def _require(obj: dict, key: str, path, lineno: int):
    if key not in obj:
        raise ParseError(f"{path}:{lineno}: missing required field {key!r}")
    return obj[key]


def load_question_set(path) -> list[QuestionRecord]:
    records: list[QuestionRecord] = []
    seen: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        rec = QuestionRecord(
            id=str(_require(obj, "id", path, lineno)),
            text=str(_require(obj, "text", path, lineno)),
            language=str(_require(obj, "language", path, lineno)),
            evergreen_label=obj.get("evergreen_label"),
            aliases=tuple(_require(obj, "aliases", path, lineno)),
            split=str(_require(obj, "split", path, lineno)),
            source_dataset=str(obj.get("source_dataset", "")),
        )
        try:
            rec.validate()
        except ValidationError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from exc
        if rec.id in seen:
            raise ValidationError(f"{path}:{lineno}: duplicate question id {rec.id!r}")
        seen.add(rec.id)
        records.append(rec)
    return records


def load_trace_set(path) -> list[GenerationTrace]:
    traces: list[GenerationTrace] = []
    for lineno, obj in _iter_jsonl(path):
        steps = tuple(
            TokenStep(
                token=str(s["token"]),
                logprob=float(s["logprob"]),
                topk=tuple((str(t), float(p)) for t, p in s.get("topk", [])),
                tail_mass=float(s.get("tail_mass", 0.0)),
            )
            for s in _require(obj, "greedy_steps", path, lineno)
        )
        similarity = obj.get("similarity")
        trace = GenerationTrace(
            question_id=str(_require(obj, "question_id", path, lineno)),
            model_id=str(obj.get("model_id", "")),
            greedy_answer=str(_require(obj, "greedy_answer", path, lineno)),
            greedy_steps=steps,
            samples=tuple(str(s) for s in obj.get("samples", [])),
            similarity=None
            if similarity is None
            else tuple(tuple(float(v) for v in row) for row in similarity),
            token_relevance=None
            if obj.get("token_relevance") is None
            else tuple(float(r) for r in obj["token_relevance"]),
        )
        try:
            trace.validate()
        except ValidationError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from exc
        if trace.similarity is not None:
            trace = GenerationTrace(
                question_id=trace.question_id,
                model_id=trace.model_id,
                greedy_answer=trace.greedy_answer,
                greedy_steps=trace.greedy_steps,
                samples=trace.samples,
                similarity=_symmetrize(trace.similarity),
                token_relevance=trace.token_relevance,
            )
        traces.append(trace)
    return traces


def load_correctness(path) -> list[CorrectnessLabel]:
    labels: list[CorrectnessLabel] = []
    seen: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        lab = CorrectnessLabel(
            question_id=str(_require(obj, "question_id", path, lineno)),
            y=_require(obj, "y", path, lineno),
        )
        try:
            lab.validate()
        except ValidationError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from exc
        if lab.question_id in seen:
            raise ValidationError(
                f"{path}:{lineno}: duplicate correctness entry for {lab.question_id!r}"
            )
        seen.add(lab.question_id)
        labels.append(lab)
    return labels


def save_jsonl(path, records) -> None:
    """Write records (anything with to_json_obj) one object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            obj = rec.to_json_obj() if hasattr(rec, "to_json_obj") else rec
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Normalization and In-Accuracy


def normalize_answer_text(s: str) -> str:
    """Lowercase, strip ASCII punctuation to spaces, collapse whitespace.

    No stemming and no diacritic folding: the rule must behave identically
    across Latin, Cyrillic, Hebrew, Arabic and CJK scripts.
    """
    return " ".join(s.lower().translate(_PUNCT_TABLE).split())


def in_accuracy(answer: str, aliases) -> int:
    """1 iff any normalized alias occurs as a substring of the normalized answer.

    Aliases that normalize to the empty string never match (a pure-punctuation
    alias would otherwise match everything).
    """
    aliases = list(aliases)
    if not aliases:
        raise PreconditionError("in_accuracy requires a non-empty alias list")
    norm_answer = normalize_answer_text(answer)
    for alias in aliases:
        norm_alias = normalize_answer_text(alias)
        if norm_alias and norm_alias in norm_answer:
            return 1
    return 0
