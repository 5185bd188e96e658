"""Pharaoh alignment files.

Each line holds the links of one sentence pair as whitespace-separated
``s-t`` (sure) or ``s?t`` (possible) tokens. Indices on disk are 0-based by
default; in memory they are always 1-based.
"""

from __future__ import annotations

import re
from typing import Iterable

from ..errors import ParseError
from ..links import AlignmentSet

_LINK = re.compile(r"^(\d+)([-?])(\d+)$")


def parse_line(line: str, indexing: int = 0, lineno: int | None = None,
               path=None) -> AlignmentSet:
    if indexing not in (0, 1):
        raise ValueError(f"indexing must be 0 or 1, got {indexing}")
    shift = 1 - indexing
    sure, possible = [], []
    col = 0
    for token in line.split():
        col = line.index(token, col) + 1
        m = _LINK.match(token)
        if not m:
            raise ParseError(f"malformed link {token!r}", line=lineno, column=col, path=path)
        s, t = int(m.group(1)) + shift, int(m.group(3)) + shift
        if s < 1 or t < 1:
            raise ParseError(f"link {token!r} is below the {indexing}-based origin",
                             line=lineno, column=col, path=path)
        (sure if m.group(2) == "-" else possible).append((s, t))
        col += len(token) - 1
    return AlignmentSet(sure, possible)


def format_line(alignment: AlignmentSet, indexing: int = 0) -> str:
    shift = 1 - indexing
    parts = []
    for s, t in sorted(alignment.possible):
        mark = "-" if (s, t) in alignment.sure else "?"
        parts.append(f"{s - shift}{mark}{t - shift}")
    return " ".join(parts)


def read_pharaoh(path, indexing: int = 0) -> list[AlignmentSet]:
    with open(path, encoding="utf-8") as f:
        return [parse_line(line, indexing, lineno, path) for lineno, line in enumerate(f, start=1)]


def write_pharaoh(path, alignments: Iterable[AlignmentSet], indexing: int = 0) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for a in alignments:
            f.write(format_line(a, indexing) + "\n")
