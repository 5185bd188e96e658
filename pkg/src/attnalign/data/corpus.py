"""Line-aligned parallel corpora and token vocabularies."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import DataError

PAD, UNK, EOS = 0, 1, 2
SPECIALS = ("<pad>", "<unk>", "</s>")


class Vocab:
    """Bijective token <-> id map with the special ids fixed at 0, 1, 2."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = list(SPECIALS)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for tok in tokens:
            self.add(tok)

    @classmethod
    def build(cls, sentences: Iterable[Sequence[str]]) -> "Vocab":
        """Vocabulary of every token seen, in sorted order for reproducibility."""
        seen = set()
        for sent in sentences:
            seen.update(sent)
        return cls(sorted(seen - set(SPECIALS)))

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.stoi.get(t, UNK) for t in tokens], dtype=np.int64)

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.itos[len(SPECIALS):]) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(t for t in lines if t)


@dataclass
class SentencePair:
    """Token ids of one sentence pair, without the terminal EOS."""

    src: np.ndarray
    tgt: np.ndarray
    src_words: list[int] | None = None
    tgt_words: list[int] | None = None


@dataclass
class Corpus:
    """Tokenised parallel text with one vocabulary per side."""

    src: list[list[str]]
    tgt: list[list[str]]
    src_vocab: Vocab = field(default=None)
    tgt_vocab: Vocab = field(default=None)

    def __post_init__(self):
        if len(self.src) != len(self.tgt):
            raise DataError(f"source has {len(self.src)} lines but target has {len(self.tgt)}")
        for i, (s, t) in enumerate(zip(self.src, self.tgt), start=1):
            if not s or not t:
                raise DataError(f"line {i}: empty sentence")
        if self.src_vocab is None:
            self.src_vocab = Vocab.build(self.src)
        if self.tgt_vocab is None:
            self.tgt_vocab = Vocab.build(self.tgt)

    def __len__(self) -> int:
        return len(self.src)

    def pairs(self) -> list[SentencePair]:
        return [SentencePair(self.src_vocab.encode(s), self.tgt_vocab.encode(t))
                for s, t in zip(self.src, self.tgt)]

    def reversed(self) -> "Corpus":
        """The same data with source and target swapped."""
        return Corpus(self.tgt, self.src, self.tgt_vocab, self.src_vocab)

    @classmethod
    def read(cls, src_path, tgt_path, src_vocab: Vocab | None = None,
             tgt_vocab: Vocab | None = None) -> "Corpus":
        return cls(read_text(src_path), read_text(tgt_path), src_vocab, tgt_vocab)

    def write(self, src_path, tgt_path) -> None:
        write_text(src_path, self.src)
        write_text(tgt_path, self.tgt)


def read_text(path) -> list[list[str]]:
    """One sentence per line, whitespace-separated tokens."""
    try:
        with open(path, encoding="utf-8") as f:
            return [line.split() for line in f]
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not valid UTF-8 ({exc})") from None


def write_text(path, sentences: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for sent in sentences:
            f.write(" ".join(sent) + "\n")
