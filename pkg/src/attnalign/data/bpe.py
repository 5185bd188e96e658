"""Joint byte pair encoding and subword-to-word alignment projection.

Words are split into characters with an end-of-word marker glued to the last
character (``"cat"`` -> ``c a t</w>``); merges join adjacent symbols. A
subword token therefore ends a word exactly when it ends with the marker.
"""

from __future__ import annotations

from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import DataError
from ..links import AlignmentSet

EOW = "</w>"

Merge = tuple[str, str]


def _word_symbols(word: str) -> tuple[str, ...]:
    return tuple(word[:-1]) + (word[-1] + EOW,)


def _merge_symbols(symbols: tuple[str, ...], pair: Merge) -> tuple[str, ...]:
    a, b = pair
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == a and symbols[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


def learn_bpe(corpora: Iterable[Iterable[Sequence[str]]], merges: int,
              min_frequency: int = 2) -> list[Merge]:
    """Greedy most-frequent-pair merges learned over all corpora jointly.

    ``corpora`` is an iterable of corpora, each an iterable of tokenised
    sentences. Ties between equally frequent pairs go to the
    lexicographically smallest pair.
    """
    if merges < 0:
        raise ValueError("merges must be non-negative")
    words: Counter[str] = Counter()
    for corpus in corpora:
        for sent in corpus:
            words.update(sent)
    if not words:
        raise DataError("cannot learn BPE from an empty corpus")
    vocab = {_word_symbols(w): f for w, f in words.items()}
    table: list[Merge] = []
    for _ in range(merges):
        pairs: Counter[Merge] = Counter()
        for symbols, freq in vocab.items():
            for pair in zip(symbols, symbols[1:]):
                pairs[pair] += freq
        if not pairs:
            break
        best_freq = max(pairs.values())
        if best_freq < min_frequency:
            break
        best = min(p for p, f in pairs.items() if f == best_freq)
        table.append(best)
        vocab = {_merge_symbols(s, best): f for s, f in vocab.items()}
    return table


class BPE:
    """Applies a learned merge table."""

    def __init__(self, merges: Sequence[Merge]):
        self.merges = [tuple(m) for m in merges]
        self.ranks = {m: i for i, m in enumerate(self.merges)}
        self._cache: dict[str, tuple[str, ...]] = {}

    def segment_word(self, word: str) -> tuple[str, ...]:
        cached = self._cache.get(word)
        if cached is not None:
            return cached
        symbols = _word_symbols(word)
        while len(symbols) > 1:
            ranked = [(self.ranks[p], p) for p in zip(symbols, symbols[1:]) if p in self.ranks]
            if not ranked:
                break
            symbols = _merge_symbols(symbols, min(ranked)[1])
        self._cache[word] = symbols
        return symbols

    def apply(self, words: Sequence[str] | str) -> tuple[list[str], list[int]]:
        """Subword tokens of a sentence and, per subword, its 1-based word index."""
        if isinstance(words, str):
            words = words.split()
        if words and words[-1].endswith(EOW):
            # already segmented: re-segmenting the words gives the same tokens
            words = desegment(words)
        tokens: list[str] = []
        word_map: list[int] = []
        for i, word in enumerate(words, start=1):
            pieces = self.segment_word(word)
            tokens.extend(pieces)
            word_map.extend([i] * len(pieces))
        return tokens, word_map

    def save(self, path) -> None:
        save_merges(path, self.merges)

    @classmethod
    def load(cls, path) -> "BPE":
        return cls(load_merges(path))


def apply_bpe(table: Sequence[Merge] | BPE, text: Sequence[str] | str) -> tuple[list[str], list[int]]:
    bpe = table if isinstance(table, BPE) else BPE(table)
    return bpe.apply(text)


def desegment(tokens: Sequence[str]) -> list[str]:
    """Undo segmentation: join subwords up to each end-of-word marker."""
    words, current = [], ""
    for tok in tokens:
        if tok.endswith(EOW):
            words.append(current + tok[: -len(EOW)])
            current = ""
        else:
            current += tok
    if current:
        words.append(current)
    return words


def word_map_from_tokens(tokens: Sequence[str]) -> list[int]:
    """Recover the subword -> word map of already segmented text."""
    word_map, word = [], 1
    for tok in tokens:
        word_map.append(word)
        if tok.endswith(EOW):
            word += 1
    return word_map


def project_to_words(sub_align: AlignmentSet, src_map: Sequence[int],
                     tgt_map: Sequence[int]) -> AlignmentSet:
    """Word link (i, j) exists iff some subword of word i links to some subword of word j.

    Maps are indexed by 0-based subword position and hold 1-based word indices;
    links are 1-based subword positions.
    """
    links = set()
    for s, t in sub_align.links:
        if not (1 <= s <= len(src_map)) or not (1 <= t <= len(tgt_map)):
            raise DataError(f"subword link ({s}, {t}) outside maps of length "
                            f"{len(src_map)} and {len(tgt_map)}")
        links.add((src_map[s - 1], tgt_map[t - 1]))
    n = max(src_map, default=0) or None
    m = max(tgt_map, default=0) or None
    return AlignmentSet(links, src_len=n, tgt_len=m)


def save_merges(path, merges: Iterable[Merge]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for a, b in merges:
            f.write(f"{a} {b}\n")


def load_merges(path) -> list[Merge]:
    merges = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DataError(f"{path}: line {lineno}: expected two symbols, got {line!r}")
        merges.append((parts[0], parts[1]))
    return merges
