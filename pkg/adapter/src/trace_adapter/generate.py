"""Trace generation: greedy answer with recorded top-k distributions plus
M stochastic samples per question.

Every trace is mass-checked before it is written; a trace that fails the
check is a bug in the runtime mapping and aborts the run. Runtime failures
(after retries) become per-question error records instead — a partial
trace file is valid output.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor

from . import __version__
from .config import AdapterConfig, AdapterError
from .io import write_jsonl
from .matching import answer_matches
from .runtimes import RuntimeFailure, build_runtime

MASS_TOL = 1e-6


def validate_step_mass(step: dict) -> None:
    mass = step["tail_mass"] + sum(p for _, p in step["topk"])
    if abs(mass - 1.0) > MASS_TOL:
        raise AdapterError(
            f"step mass {mass:.9f} for token {step['token']!r} violates the "
            f"{MASS_TOL} tolerance"
        )
    if not (0.0 <= step["tail_mass"] < 1.0):
        raise AdapterError(f"tail_mass {step['tail_mass']} outside [0, 1)")


def _trace_for_question(question: dict, config: AdapterConfig, runtime) -> dict:
    prompt = question["text"]
    answer, steps = runtime.greedy(prompt, top_k=config.top_k)
    for step in steps:
        validate_step_mass(step)
    samples = [
        runtime.sample(
            prompt,
            index=i,
            temperature=config.temperature,
            top_p=config.top_p,
            seed=config.seed,
        )
        for i in range(config.num_samples)
    ]
    return {
        "question_id": question["id"],
        "model_id": config.model,
        "greedy_answer": answer,
        "greedy_steps": steps,
        "samples": samples,
        "similarity": None,
        "token_relevance": None,
    }


def generate_traces(questions: list[dict], config: AdapterConfig):
    """(traces, correctness rows, error records) for the question list.

    Generation runs on a bounded worker pool; results are assembled in
    question order so output files are deterministic for deterministic
    runtimes.
    """
    runtime = build_runtime(config)

    def job(question: dict):
        try:
            return question, _trace_for_question(question, config, runtime), None
        except RuntimeFailure as exc:
            return question, None, str(exc)

    with ThreadPoolExecutor(max_workers=max(1, config.max_in_flight)) as pool:
        results = list(pool.map(job, questions))

    traces, correctness, errors = [], [], []
    for question, trace, error in results:
        if error is not None:
            errors.append({"question_id": question["id"], "error": error})
            continue
        traces.append(trace)
        aliases = question.get("aliases") or []
        if aliases:
            correctness.append(
                {
                    "question_id": question["id"],
                    "y": answer_matches(trace["greedy_answer"], aliases),
                }
            )
    return traces, correctness, errors


def run_metadata(config: AdapterConfig) -> dict:
    runtime = build_runtime(config)
    return {
        "adapter_version": __version__,
        "runtime": config.runtime,
        "model": config.model,
        "seed": config.seed,
        "temperature": config.temperature,
        "top_p": config.top_p,
        "num_samples": config.num_samples,
        "top_k": config.top_k,
        "deterministic": bool(runtime.deterministic),
        "note": None
        if runtime.deterministic
        else "runtime does not honour a sampling seed; outputs are not reproducible",
    }


def write_run(out_dir, questions, config: AdapterConfig, emit_correctness: bool):
    os.makedirs(out_dir, exist_ok=True)
    traces, correctness, errors = generate_traces(questions, config)
    trace_path = os.path.join(out_dir, "traces.jsonl")
    write_jsonl(trace_path, traces)
    written = {"traces": trace_path}
    if emit_correctness:
        correctness_path = os.path.join(out_dir, "correctness.jsonl")
        write_jsonl(correctness_path, correctness)
        written["correctness"] = correctness_path
    if errors:
        error_path = os.path.join(out_dir, "traces.errors.jsonl")
        write_jsonl(error_path, errors)
        written["errors"] = error_path
    metadata_path = os.path.join(out_dir, "metadata.json")
    with open(metadata_path, "w", encoding="utf-8") as fh:
        json.dump(run_metadata(config), fh, indent=2, sort_keys=True)
        fh.write("\n")
    written["metadata"] = metadata_path
    return written, len(traces), len(errors)
