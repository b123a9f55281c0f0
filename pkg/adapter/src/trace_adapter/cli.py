"""trace-adapter command line: generate, verbal, attach-semantics."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import AdapterConfig, AdapterError
from .generate import write_run
from .io import read_questions, write_jsonl
from .semantics import attach_semantics
from .verbal import run_verbal_benchmark


def _config_from_args(args) -> AdapterConfig:
    return AdapterConfig(
        runtime=args.runtime,
        endpoint=getattr(args, "endpoint", None),
        model=args.model,
        temperature=args.temperature,
        top_p=args.top_p,
        num_samples=getattr(args, "m", 0),
        top_k=getattr(args, "top_k", 5),
        prompt_template=getattr(args, "template", "verbal_classify_v1"),
        seed=args.seed,
        max_in_flight=args.max_in_flight,
        stub_text=args.stub_text,
    )


def cmd_generate(args) -> int:
    questions = read_questions(args.questions)
    config = _config_from_args(args)
    written, n_traces, n_errors = write_run(
        args.out, questions, config, emit_correctness=args.correctness
    )
    print(f"wrote {n_traces} traces ({n_errors} failures) to {written['traces']}")
    for kind, path in sorted(written.items()):
        if kind != "traces":
            print(f"  {kind}: {path}")
    return 0


def cmd_verbal(args) -> int:
    questions = read_questions(args.questions)
    config = _config_from_args(args)
    outputs, errors = run_verbal_benchmark(questions, config)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "verbal_outputs.jsonl")
    write_jsonl(out_path, outputs)
    if errors:
        write_jsonl(os.path.join(args.out, "verbal_outputs.errors.jsonl"), errors)
    print(f"wrote {len(outputs)} raw outputs ({len(errors)} failures) to {out_path}")
    return 0


def cmd_attach_semantics(args) -> int:
    config = AdapterConfig(similarity_backend="embedding")
    summary = attach_semantics(args.traces, args.out_file, config)
    print(json.dumps(summary, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trace-adapter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_runtime_flags(p):
        p.add_argument("--runtime", choices=["tiny", "stub-echo", "openai"], default="tiny")
        p.add_argument("--endpoint", help="base URL for the openai runtime")
        p.add_argument("--model", default="tiny-lm-v1")
        p.add_argument("--temperature", type=float, default=0.7)
        p.add_argument("--top-p", dest="top_p", type=float, default=0.9)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--max-in-flight", type=int, default=4)
        p.add_argument("--stub-text", default="Classification: Mutable")

    p = sub.add_parser("generate", help="emit traces (and optionally correctness)")
    p.add_argument("--questions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--m", type=int, default=2, help="stochastic samples per question")
    p.add_argument("--top-k", dest="top_k", type=int, default=5)
    p.add_argument(
        "--correctness", action="store_true",
        help="also emit a correctness file from greedy answers vs aliases",
    )
    add_runtime_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("verbal", help="collect raw evergreen judgments")
    p.add_argument("--questions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--template", default="verbal_classify_v1")
    add_runtime_flags(p)
    p.set_defaults(func=cmd_verbal)

    p = sub.add_parser("attach-semantics", help="fill similarity/relevance channels")
    p.add_argument("--traces", required=True)
    p.add_argument("--out-file", required=True)
    p.set_defaults(func=cmd_attach_semantics)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
