import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from synthbench import generate_benchmark  # noqa: E402

from evergreen_eval.corpus import save_jsonl  # noqa: E402

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), "fixtures")


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURE_DIR, name)


@pytest.fixture(scope="session")
def english_benchmark():
    """Deterministic synthetic benchmark, English lane: (records, train, test)."""
    records = generate_benchmark(languages=("en",))["en"]
    train = [q for q in records if q.split == "train"]
    test = [q for q in records if q.split == "test"]
    return records, train, test


@pytest.fixture(scope="session")
def english_benchmark_files(english_benchmark, tmp_path_factory):
    """The same benchmark as JSONL files: (all, train, test) paths."""
    records, train, test = english_benchmark
    root = tmp_path_factory.mktemp("bench")
    paths = (root / "questions.jsonl", root / "train.jsonl", root / "test.jsonl")
    for path, subset in zip(paths, (records, train, test)):
        save_jsonl(path, subset)
    return tuple(str(p) for p in paths)


@pytest.fixture(scope="session")
def multilingual_sample():
    """First 60 questions of each split in all seven languages (labeled)."""
    bench = generate_benchmark()
    sample = {}
    for language, records in bench.items():
        test = [q for q in records if q.split == "test"][:60]
        sample[language] = test
    return sample
