"""Verbal evergreen-judgment runner.

Renders the versioned ten-exemplar prompt (five stable, five changing,
fixed and shipped with the package so benchmark numbers are comparable
across runs) and collects one raw output per question. No parsing happens
here; the evaluation engine owns that.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from importlib import resources

from .config import AdapterConfig, AdapterError
from .runtimes import RuntimeFailure, build_runtime


def load_template(name: str) -> str:
    try:
        return (
            resources.files("trace_adapter")
            .joinpath(f"templates/{name}.txt")
            .read_text(encoding="utf-8")
        )
    except FileNotFoundError as exc:
        raise AdapterError(f"unknown prompt template {name!r}") from exc


def render_prompt(template: str, question_text: str) -> str:
    return template.replace("{question}", question_text)


def run_verbal_benchmark(questions: list[dict], config: AdapterConfig):
    """(outputs, error records): one raw output per question."""
    template = load_template(config.prompt_template)
    runtime = build_runtime(config)

    def job(question: dict):
        prompt = render_prompt(template, question["text"])
        try:
            return question, runtime.complete_text(prompt, seed=config.seed), None
        except RuntimeFailure as exc:
            return question, None, str(exc)

    with ThreadPoolExecutor(max_workers=max(1, config.max_in_flight)) as pool:
        results = list(pool.map(job, questions))

    outputs, errors = [], []
    for question, text, error in results:
        if error is not None:
            errors.append({"question_id": question["id"], "error": error})
        else:
            outputs.append({"question_id": question["id"], "raw_output": text})
    return outputs, errors
