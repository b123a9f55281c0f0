"""Runtime-facing companion: samples models and writes trace/correctness/
verbal-output files in the evaluation engine's JSONL schemas."""

__version__ = "0.1.0"
