"""
Utility functions and helpers used throughout the application.

This module contains reusable, low-level functions that do not belong to any specific domain:
surface-string normalization shared by the KG engine and the lexical index, the default
token counter, and JSONL reading/writing.

Purpose:
- One normalization semantics repo-wide.
- Keeps business logic and route handlers clean and focused.
"""

import json
import re
from collections.abc import Iterable, Iterator
from pathlib import Path
from typing import Any

_NON_WORD = re.compile(r"[\W_]+")
_LONE_SURROGATE = re.compile("[\ud800-\udfff]")

REPLACEMENT_CHARACTER = "\ufffd"


def normalize_surface(text: str) -> str:
    """
    Normalize a surface form for matching.

    Lower-cases, replaces punctuation (and any other non-word character) by spaces,
    collapses whitespace and trims.

    Args:
        text (str): Raw entity, relation, title or query text.

    Returns:
        str: e.g. "  Postcolonial   Love-Poem! " -> "postcolonial love poem".
    """
    return " ".join(_NON_WORD.sub(" ", text.lower()).split())


def surface_tokens(text: str) -> list[str]:
    """Tokens of `normalize_surface(text)`."""
    return normalize_surface(text).split()


def replace_lone_surrogates(text: str) -> str:
    """
    Replace every lone UTF-16 surrogate with U+FFFD.

    Lone surrogates cannot be encoded as UTF-8. They show up when a JSON body carries an
    unpaired `\\udXXX` escape. U+FFFD has the same 3-byte width as a surrogate encoded with
    `surrogatepass`, so byte offsets computed before and after replacement agree.
    """
    return _LONE_SURROGATE.sub(REPLACEMENT_CHARACTER, text)


def whitespace_token_count(text: str) -> int:
    """Default token counter: whitespace-separated pieces."""
    return len(text.split())


def read_jsonl(path: str | Path) -> Iterator[tuple[int, str]]:
    """
    Yield `(line_number, raw_line)` for every non-blank line of a UTF-8 JSONL file.

    Decoding is left to the caller so it can collect per-line errors.
    """
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if line.strip():
                yield number, line


def write_jsonl(path: str | Path, rows: Iterable[dict[str, Any]]) -> int:
    """
    Write one compact JSON object per line; returns the number of rows written.

    Keys keep insertion order so repeated runs produce identical bytes. Lone surrogates
    are written as U+FFFD.
    """
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for row in rows:
            handle.write(replace_lone_surrogates(json.dumps(row, ensure_ascii=False)))
            handle.write("\n")
            count += 1
    return count
