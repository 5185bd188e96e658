"""Heuristic symmetrization of forward and backward hard alignments.

Both inputs are in source-target orientation: a backward model's alignment
must be transposed (:meth:`AlignmentSet.transpose`) before it is passed here.
"""

from __future__ import annotations

from .links import AlignmentSet, Link

# 8-neighbourhood, checked in this order for every link
NEIGHBORS = ((-1, 0), (0, -1), (1, 0), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1))


def _lengths(f: AlignmentSet, b: AlignmentSet) -> tuple[int, int]:
    links = f.links | b.links
    n = f.src_len or b.src_len or max((s for s, _ in links), default=0)
    m = f.tgt_len or b.tgt_len or max((t for _, t in links), default=0)
    return n, m


def intersect(f: AlignmentSet, b: AlignmentSet) -> AlignmentSet:
    n, m = _lengths(f, b)
    return AlignmentSet(f.links & b.links, src_len=n or None, tgt_len=m or None)


def union(f: AlignmentSet, b: AlignmentSet) -> AlignmentSet:
    n, m = _lengths(f, b)
    return AlignmentSet(f.links | b.links, src_len=n or None, tgt_len=m or None)


def grow_diag(f: AlignmentSet, b: AlignmentSet, final: bool = False) -> AlignmentSet:
    """Grow the intersection towards the union through neighbouring links.

    A union link is added when it neighbours (including diagonally) a link
    already in the alignment and its source or its target word is still
    unaligned. Cells are scanned target-major, source ascending, until nothing
    changes. With ``final`` any union link touching an unaligned word is added
    afterwards.
    """
    n, m = _lengths(f, b)
    candidates = f.links | b.links
    alignment: set[Link] = set(f.links & b.links)
    src_aligned = {s for s, _ in alignment}
    tgt_aligned = {t for _, t in alignment}

    def add(link: Link) -> None:
        alignment.add(link)
        src_aligned.add(link[0])
        tgt_aligned.add(link[1])

    added = True
    while added:
        added = False
        for t in range(1, m + 1):
            for s in range(1, n + 1):
                if (s, t) not in alignment:
                    continue
                for ds, dt in NEIGHBORS:
                    link = (s + ds, t + dt)
                    if link in candidates and link not in alignment and (
                            link[0] not in src_aligned or link[1] not in tgt_aligned):
                        add(link)
                        added = True

    if final:
        for t in range(1, m + 1):
            for s in range(1, n + 1):
                link = (s, t)
                if link in candidates and link not in alignment and (
                        s not in src_aligned or t not in tgt_aligned):
                    add(link)

    return AlignmentSet(alignment, src_len=n or None, tgt_len=m or None)


def grow_diag_final(f: AlignmentSet, b: AlignmentSet) -> AlignmentSet:
    return grow_diag(f, b, final=True)


METHODS = {
    "intersect": intersect,
    "union": union,
    "grow-diag": grow_diag,
    "grow-diag-final": grow_diag_final,
}


def symmetrize(f: AlignmentSet, b: AlignmentSet, method: str = "grow-diag") -> AlignmentSet:
    try:
        fn = METHODS[method]
    except KeyError:
        raise ValueError(f"unknown symmetrization method {method!r}; "
                         f"choose from {sorted(METHODS)}") from None
    return fn(f, b)
