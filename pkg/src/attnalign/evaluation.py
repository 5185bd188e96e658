"""Alignment error rate, precision and recall against sure/possible gold links."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import DataError
from .links import AlignmentSet


@dataclass(frozen=True)
class Counts:
    """Link counts from which every metric is derived.

    ``hyp_sure`` is |A∩S|, ``hyp_possible`` |A∩P|, ``hyp`` |A| and ``sure`` |S|.
    """

    hyp_sure: int = 0
    hyp_possible: int = 0
    hyp: int = 0
    sure: int = 0

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.hyp_sure + other.hyp_sure, self.hyp_possible + other.hyp_possible,
                      self.hyp + other.hyp, self.sure + other.sure)

    @property
    def precision(self) -> float:
        return self.hyp_possible / self.hyp if self.hyp else 1.0

    @property
    def recall(self) -> float:
        return self.hyp_sure / self.sure if self.sure else 1.0

    @property
    def aer(self) -> float:
        denom = self.hyp + self.sure
        if denom == 0:
            return 0.0
        return 1.0 - (self.hyp_sure + self.hyp_possible) / denom


def count_links(hyp: AlignmentSet, gold: AlignmentSet) -> Counts:
    a = hyp.links
    return Counts(len(a & gold.sure), len(a & gold.possible), len(a), len(gold.sure))


def aer(hyp: AlignmentSet, gold: AlignmentSet) -> float:
    return count_links(hyp, gold).aer


def precision_recall(hyp: AlignmentSet, gold: AlignmentSet) -> tuple[float, float]:
    c = count_links(hyp, gold)
    return c.precision, c.recall


def evaluate_corpus(hyps: Sequence[AlignmentSet], golds: Sequence[AlignmentSet]) -> Counts:
    """Micro-averaged counts: sentence counts are summed before dividing."""
    if not golds:
        raise DataError("cannot evaluate an empty corpus")
    if len(hyps) != len(golds):
        line = min(len(hyps), len(golds)) + 1
        raise DataError(f"hypothesis has {len(hyps)} lines but gold has {len(golds)}; "
                        f"first unmatched line is {line}")
    total = Counts()
    for h, g in zip(hyps, golds):
        total = total + count_links(h, g)
    return total


class Report:
    """Rows of named corpus scores, printable as a table or as TSV lines."""

    def __init__(self):
        self.rows: list[tuple[str, Counts]] = []

    def add(self, name: str, counts: Counts) -> None:
        if "\t" in name or " " in name:
            raise ValueError(f"row name {name!r} may not contain whitespace")
        self.rows.append((name, counts))

    def __getitem__(self, name: str) -> Counts:
        for row, counts in self.rows:
            if row == name:
                return counts
        raise KeyError(name)

    def table(self) -> str:
        width = max([len("system")] + [len(n) for n, _ in self.rows])
        lines = [f"{'system':<{width}}  {'AER':>7}  {'prec':>7}  {'recall':>7}  {'links':>7}"]
        for name, c in self.rows:
            lines.append(f"{name:<{width}}  {100 * c.aer:6.2f}%  {100 * c.precision:6.2f}%  "
                         f"{100 * c.recall:6.2f}%  {c.hyp:7d}")
        return "\n".join(lines) + "\n"

    def tsv(self) -> str:
        lines = []
        for name, c in self.rows:
            lines.append(f"{name}.aer\t{c.aer:.6f}")
            lines.append(f"{name}.precision\t{c.precision:.6f}")
            lines.append(f"{name}.recall\t{c.recall:.6f}")
        return "\n".join(lines) + "\n"
