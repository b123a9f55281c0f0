"""JSONL helpers and question-file reading (schema-compatible with the
evaluation engine; only the fields the adapter needs are required)."""

from __future__ import annotations

import json

from .config import AdapterError


def read_questions(path) -> list[dict]:
    questions = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AdapterError(f"{path}:{lineno}: malformed JSON: {exc.msg}") from exc
            for key in ("id", "text"):
                if key not in obj:
                    raise AdapterError(f"{path}:{lineno}: missing field {key!r}")
            if obj["id"] in seen:
                raise AdapterError(f"{path}:{lineno}: duplicate question id {obj['id']!r}")
            seen.add(obj["id"])
            questions.append(obj)
    return questions


def write_jsonl(path, objs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def read_jsonl(path) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
