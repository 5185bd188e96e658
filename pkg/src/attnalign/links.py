"""Alignment link sets.

Positions are 1-based in memory: link ``(s, t)`` pairs source word ``s`` with
target word ``t``. Gold data distinguishes sure links from possible ones;
hypotheses only carry sure links.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .errors import DataError

Link = tuple[int, int]


@dataclass(frozen=True)
class AlignmentSet:
    """Sure links ``sure`` and the possible links ``possible`` (a superset)."""

    sure: frozenset[Link]
    possible: frozenset[Link]
    src_len: int | None = None
    tgt_len: int | None = None

    def __init__(self, links: Iterable[Link] = (), possible: Iterable[Link] = (),
                 src_len: int | None = None, tgt_len: int | None = None):
        sure = frozenset((int(s), int(t)) for s, t in links)
        poss = sure | frozenset((int(s), int(t)) for s, t in possible)
        object.__setattr__(self, "sure", sure)
        object.__setattr__(self, "possible", poss)
        object.__setattr__(self, "src_len", src_len)
        object.__setattr__(self, "tgt_len", tgt_len)
        for s, t in poss:
            if s < 1 or t < 1:
                raise DataError(f"link ({s}, {t}) is not 1-based")
            if (src_len is not None and s > src_len) or (tgt_len is not None and t > tgt_len):
                raise DataError(f"link ({s}, {t}) outside a {src_len}x{tgt_len} sentence pair")

    @property
    def links(self) -> frozenset[Link]:
        """All links; for hypotheses this equals the sure set."""
        return self.possible

    @property
    def possible_only(self) -> frozenset[Link]:
        return self.possible - self.sure

    def __len__(self) -> int:
        return len(self.possible)

    def __iter__(self):
        return iter(sorted(self.possible, key=lambda st: (st[1], st[0])))

    def __contains__(self, link) -> bool:
        return tuple(link) in self.possible

    def __eq__(self, other) -> bool:
        if not isinstance(other, AlignmentSet):
            return NotImplemented
        return self.sure == other.sure and self.possible == other.possible

    def __hash__(self) -> int:
        return hash((self.sure, self.possible))

    def sorted_links(self) -> list[Link]:
        return sorted(self.possible)

    def transpose(self) -> "AlignmentSet":
        """Swap the roles of source and target."""
        return AlignmentSet(((t, s) for s, t in self.sure), ((t, s) for s, t in self.possible),
                            src_len=self.tgt_len, tgt_len=self.src_len)

    def with_lengths(self, src_len: int, tgt_len: int) -> "AlignmentSet":
        return AlignmentSet(self.sure, self.possible, src_len=src_len, tgt_len=tgt_len)

    def __repr__(self) -> str:
        extra = sorted(self.possible_only)
        if extra:
            return f"AlignmentSet(sure={sorted(self.sure)}, possible_only={extra})"
        return f"AlignmentSet({sorted(self.sure)})"
