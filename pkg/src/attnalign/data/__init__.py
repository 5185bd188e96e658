"""Corpora, vocabularies, BPE, Pharaoh alignment files and synthetic data."""

from .bpe import BPE, apply_bpe, desegment, learn_bpe, load_merges, project_to_words, save_merges
from .corpus import EOS, PAD, UNK, Corpus, SentencePair, Vocab, read_text, write_text
from .pharaoh import format_line, parse_line, read_pharaoh, write_pharaoh
from .synthetic import SyntheticConfig, generate_synthetic

__all__ = [
    "BPE", "Corpus", "EOS", "PAD", "SentencePair", "SyntheticConfig", "UNK", "Vocab",
    "apply_bpe", "desegment", "format_line", "generate_synthetic", "learn_bpe",
    "load_merges", "parse_line", "project_to_words", "read_pharaoh", "read_text",
    "save_merges", "write_pharaoh", "write_text",
]
