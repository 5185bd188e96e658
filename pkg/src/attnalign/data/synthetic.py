"""Seeded synthetic parallel corpora with gold alignments known by construction.

The target language relabels every source word through a fixed random
bijection, shuffles words inside consecutive blocks of ``reorder_window``
positions and occasionally doubles a word (one source word produces two
target words).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..links import AlignmentSet
from ..tensor import make_rng
from .corpus import Corpus, Vocab


@dataclass(frozen=True)
class SyntheticConfig:
    vocab_size: int = 50
    sentences: int = 5000
    min_len: int = 5
    max_len: int = 15
    reorder_window: int = 2
    split_prob: float = 0.1

    def __post_init__(self):
        if self.vocab_size < 1 or self.sentences < 0:
            raise ValueError("vocab_size must be positive and sentences non-negative")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        if self.reorder_window < 1 or not 0.0 <= self.split_prob <= 1.0:
            raise ValueError("reorder_window must be >= 1 and split_prob in [0, 1]")


def _vocabs(vocab_size: int) -> tuple[Vocab, Vocab]:
    return (Vocab(f"s{i}" for i in range(vocab_size)),
            Vocab(f"t{i}" for i in range(vocab_size)))


def generate_synthetic(config: SyntheticConfig, seed: int,
                       count: int | None = None, offset: int = 0) -> tuple[Corpus, list[AlignmentSet]]:
    """Sample ``count`` (default ``config.sentences``) pairs and their gold links.

    The word mapping depends only on ``seed``; ``offset`` selects an
    independent stream of sentences under the same mapping, so held-out data
    can be drawn from the same language.
    """
    count = config.sentences if count is None else count
    mapping = make_rng(seed).permutation(config.vocab_size)
    rng = make_rng(seed * 1_000_003 + 7919 * (offset + 1))
    w = config.reorder_window
    src_sents, tgt_sents, golds = [], [], []
    for _ in range(count):
        n = int(rng.integers(config.min_len, config.max_len + 1))
        words = rng.integers(0, config.vocab_size, size=n)
        order = []
        for start in range(0, n, w):
            block = np.arange(start, min(start + w, n))
            order.extend(rng.permutation(block).tolist() if w > 1 else block.tolist())
        target, links = [], []
        for s in order:
            copies = 2 if config.split_prob > 0 and rng.random() < config.split_prob else 1
            for _ in range(copies):
                target.append(f"t{mapping[words[s]]}")
                links.append((s + 1, len(target)))
        src_sents.append([f"s{x}" for x in words])
        tgt_sents.append(target)
        golds.append(AlignmentSet(links, src_len=n, tgt_len=len(target)))
    src_vocab, tgt_vocab = _vocabs(config.vocab_size)
    return Corpus(src_sents, tgt_sents, src_vocab, tgt_vocab), golds
