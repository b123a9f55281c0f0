"""Answer matching for correctness files.

The shared contract: an answer counts as correct iff any gold alias,
after normalization (lowercase, ASCII punctuation to spaces, whitespace
collapsed), occurs as a substring of the normalized answer. Reimplemented
here because the adapter talks to the evaluation engine only through its
file formats.
"""

from __future__ import annotations

import string

_PUNCT = str.maketrans({c: " " for c in string.punctuation})


def normalize(text: str) -> str:
    return " ".join(text.lower().translate(_PUNCT).split())


def answer_matches(answer: str, aliases) -> int:
    norm_answer = normalize(answer)
    for alias in aliases:
        norm_alias = normalize(alias)
        if norm_alias and norm_alias in norm_answer:
            return 1
    return 0
