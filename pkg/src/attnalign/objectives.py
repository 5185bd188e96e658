"""Contiguity loss, guided alignment loss and the alignment-layer training loops."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .data.corpus import SentencePair
from .errors import ContractError, DataError
from .links import AlignmentSet
from .nnmodel import (
    AlignmentLayer,
    AttentionState,
    Features,
    FullContextAlignmentLayer,
    TranslationModel,
    compute_features,
)
from .tensor import Tensor, make_rng

# below float resolution for any probability that matters; only keeps log finite at 0
LOG_FLOOR = 1e-30


@dataclass
class ContiguityConfig:
    """Settings of the contiguity loss.

    ``kernel_value`` defaults to ``1 / kernel_size`` which is 0.5 for the 2x2
    kernel and keeps every window score inside [0, 1] for any size.
    """

    kernel_size: int = 2
    kernel_value: float | None = None
    weight: float = 1.0
    logit_dropout: float = 0.1
    mask_eos: bool = True

    def __post_init__(self):
        if self.kernel_size < 1:
            raise ValueError("kernel_size must be at least 1")
        if self.weight < 0:
            raise ValueError("contiguity weight must be non-negative")

    @property
    def kernel(self) -> np.ndarray:
        value = 1.0 / self.kernel_size if self.kernel_value is None else self.kernel_value
        return np.full((self.kernel_size, self.kernel_size), value)


def _length_mask(lengths: np.ndarray, width: int) -> np.ndarray:
    return np.arange(width)[None, :] < np.asarray(lengths)[:, None]


def contiguity_loss_batch(probs: Tensor, src_len: np.ndarray, tgt_len: np.ndarray,
                          cfg: ContiguityConfig) -> Tensor:
    """Per-pair contiguity loss, shape (batch,), for padded source-major probabilities.

    Only the leading ``src_len`` rows and ``tgt_len`` columns of each matrix
    take part; everything else (EOS, padding) is zeroed before the windowed sum.
    """
    b, n, m = probs.shape
    rows = _length_mask(src_len, n)[:, :, None]
    cols = _length_mask(tgt_len, m)[:, None, :]
    masked = T.mul(probs, (rows & cols).astype(probs.data.dtype))
    windows = T.conv2d(masked, cfg.kernel)
    best = T.max(windows, axis=1)
    col_mask = _length_mask(tgt_len, m).astype(probs.data.dtype)
    logs = T.log(T.add(best, (1.0 - col_mask) + LOG_FLOOR))
    return T.scale(T.ops.sum(T.mul(logs, col_mask), axis=1), -1.0)


def _as_probs(attention) -> tuple[Tensor, int, int, bool]:
    if isinstance(attention, AttentionState):
        return Tensor(attention.probs), attention.src_len, attention.tgt_len, attention.eos
    probs = T.as_tensor(attention)
    return probs, probs.shape[0], probs.shape[1], False


def _check_columns(probs: np.ndarray, tol: float = 1e-4) -> None:
    sums = probs.sum(axis=0)
    if np.any(probs < -tol) or np.any(np.abs(sums - 1.0) > tol):
        raise ContractError("attention columns must be probability distributions")


def contiguity_loss(attention, cfg: ContiguityConfig | None = None) -> Tensor:
    """Contiguity loss of one attention matrix.

    ``attention`` is an :class:`AttentionState` or a column-stochastic
    (source x target) matrix, possibly a Tensor on a gradient graph. EOS row
    and column of a state are ignored when ``cfg.mask_eos`` is set.
    """
    cfg = cfg or ContiguityConfig()
    probs, n, m, eos = _as_probs(attention)
    _check_columns(probs.data)
    if eos and not cfg.mask_eos:
        n, m = n + 1, m + 1
    batched = T.reshape(probs, (1,) + probs.shape)
    return T.reshape(contiguity_loss_batch(batched, np.array([n]), np.array([m]), cfg), ())


# guided alignment ------------------------------------------------------------------

@dataclass
class GuidedAlignment:
    """1-based source position for every target word; EOS position when unaligned."""

    positions: np.ndarray
    src_len: int

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.int64)
        if self.positions.size and (self.positions.min() < 1
                                    or self.positions.max() > self.src_len + 1):
            raise IndexError(f"guided positions must lie in [1, {self.src_len + 1}]")

    @classmethod
    def from_links(cls, links: AlignmentSet, src_len: int, tgt_len: int) -> "GuidedAlignment":
        """One link per target word: the smallest linked source, or EOS."""
        positions = np.full(tgt_len, src_len + 1, dtype=np.int64)
        for s, t in sorted(links.links, reverse=True):
            if s > src_len or t > tgt_len:
                raise DataError(f"link ({s}, {t}) outside a {src_len}x{tgt_len} sentence pair")
            positions[t - 1] = s
        return cls(positions, src_len)


def guided_loss_batch(probs: Tensor, positions: np.ndarray, tgt_mask: np.ndarray) -> Tensor:
    """Per-pair guided loss, shape (batch,).

    ``positions`` holds 0-based source rows per target column; masked columns
    are skipped and each pair is averaged over its own supervised columns.
    """
    picked = T.reshape(T.gather(probs, positions[:, None, :], axis=1), positions.shape)
    weights = tgt_mask / np.maximum(tgt_mask.sum(axis=1, keepdims=True), 1)
    logs = T.log(T.add(picked, LOG_FLOOR))
    return T.scale(T.ops.sum(T.mul(logs, weights.astype(probs.data.dtype)), axis=1), -1.0)


def guided_loss(attention, guide: GuidedAlignment) -> Tensor:
    """Mean negative log attention at the supervised link of each target word."""
    probs, n, m, eos = _as_probs(attention)
    rows = n + 1 if eos else n
    if len(guide.positions) != m:
        raise DataError(f"guide covers {len(guide.positions)} target words, attention has {m}")
    if guide.positions.size and guide.positions.max() > rows:
        raise IndexError(f"guided position {guide.positions.max()} outside {rows} source rows")
    batched = T.reshape(probs, (1,) + probs.shape)
    positions = np.zeros((1, probs.shape[1]), dtype=np.int64)
    positions[0, :m] = guide.positions - 1
    mask = np.zeros((1, probs.shape[1]))
    mask[0, :m] = 1
    return T.reshape(guided_loss_batch(batched, positions, mask), ())


# training loops ------------------------------------------------------------------------

@dataclass
class LayerTrainConfig:
    steps: int = 100
    batch_tokens: int = 4000
    lr: float = 3e-3
    warmup: int = 200
    seed: int = 0
    contiguity: ContiguityConfig = field(default_factory=ContiguityConfig)
    dropout: float = 0.1


def _require_frozen(model: TranslationModel) -> None:
    if not model.frozen:
        raise ContractError("the translation model must be frozen before training alignment layers")


def _cycle(items: list, steps: int, rng):
    order: list[int] = []
    for _ in range(steps):
        if not order:
            order = list(rng.permutation(len(items)))
        yield items[order.pop()]


def alignment_layer_loss(layer: AlignmentLayer, feats: Features, cfg: LayerTrainConfig,
                         rng=None) -> tuple[Tensor, Tensor, Tensor]:
    """(total, cross-entropy sum, contiguity sum) for one batch of features."""
    cont = cfg.contiguity
    logit_dropout = cont.logit_dropout if rng is not None else 0.0
    _, probs, vocab_logits = layer.forward(feats.states, feats.kv, feats.src_len,
                                           logit_dropout=logit_dropout, rng=rng)
    ce = T.cross_entropy(vocab_logits, feats.targets, feats.target_mask)
    if cont.weight == 0:
        return ce, ce, Tensor(0.0)
    lc = T.ops.sum(contiguity_loss_batch(probs, feats.src_len - 1, feats.tgt_len - 1, cont))
    return T.add(ce, T.scale(lc, cont.weight)), ce, lc


def train_alignment_layer(model: TranslationModel, layer: AlignmentLayer,
                          pairs: Sequence[SentencePair], cfg: LayerTrainConfig | None = None,
                          features: list[Features] | None = None, log=None) -> list[float]:
    """Fit the alignment layer on top of a frozen model; returns per-token losses.

    The objective is cross-entropy of the layer's predictions plus the
    weighted contiguity loss, with dropout on the attention logits.
    """
    _require_frozen(model)
    cfg = cfg or LayerTrainConfig()
    features = features if features is not None else compute_features(model, pairs, cfg.batch_tokens)
    rng = make_rng(cfg.seed)
    layer.set_trainable(True)
    opt = T.Adam(layer.parameters(), lr=cfg.lr, warmup_steps=cfg.warmup)
    trace = []
    for step, feats in enumerate(_cycle(features, cfg.steps, rng)):
        opt.zero_grad()
        total, _, _ = alignment_layer_loss(layer, feats, cfg, rng)
        tokens = int(feats.tgt_len.sum())
        T.backward(T.scale(total, 1.0 / tokens))
        opt.step()
        trace.append(float(total.data) / tokens)
        if log is not None and (step + 1) % 25 == 0:
            log(f"alignment layer step {step + 1}/{cfg.steps} loss {np.mean(trace[-25:]):.4f}")
    layer.set_trainable(False)
    return trace


def guided_positions(alignments: Sequence[AlignmentSet], feats: Features) -> np.ndarray:
    """0-based supervised source row per target column for a feature batch."""
    positions = np.zeros(feats.targets.shape, dtype=np.int64)
    for row, i in enumerate(feats.index):
        n, m = int(feats.src_len[row]) - 1, int(feats.tgt_len[row]) - 1
        guide = GuidedAlignment.from_links(alignments[i], n, m)
        positions[row, :m] = guide.positions - 1
    return positions


def guided_layer_loss(layer: FullContextAlignmentLayer, feats: Features, positions: np.ndarray,
                      dropout: float = 0.0, rng=None) -> Tensor:
    logits = layer.attention_logits(feats.states, feats.kv, feats.src_len, feats.tgt_len,
                                    dropout=dropout, rng=rng)
    probs = T.softmax(logits, axis=1)
    words = feats.target_mask & (np.arange(feats.targets.shape[1])[None, :]
                                 < (feats.tgt_len - 1)[:, None])
    return T.ops.sum(guided_loss_batch(probs, positions, words.astype(np.float64)))


def train_guided(model: TranslationModel, layer: FullContextAlignmentLayer,
                 pairs: Sequence[SentencePair], alignments: Sequence[AlignmentSet],
                 cfg: LayerTrainConfig | None = None, features: list[Features] | None = None,
                 log=None) -> list[float]:
    """Fit the full-context layer to given alignments with the guided loss."""
    _require_frozen(model)
    if len(alignments) != len(pairs):
        raise DataError(f"{len(alignments)} alignments for {len(pairs)} sentence pairs")
    cfg = cfg or LayerTrainConfig()
    features = features if features is not None else compute_features(model, pairs, cfg.batch_tokens)
    positions = [guided_positions(alignments, f) for f in features]
    rng = make_rng(cfg.seed)
    layer.set_trainable(True)
    opt = T.Adam(layer.parameters(), lr=cfg.lr, warmup_steps=cfg.warmup)
    trace = []
    for step, k in enumerate(_cycle(list(range(len(features))), cfg.steps, rng)):
        opt.zero_grad()
        loss = guided_layer_loss(layer, features[k], positions[k], cfg.dropout, rng)
        T.backward(T.scale(loss, 1.0 / len(features[k])))
        opt.step()
        trace.append(float(loss.data) / len(features[k]))
        if log is not None and (step + 1) % 25 == 0:
            log(f"guided step {step + 1}/{cfg.steps} loss {np.mean(trace[-25:]):.4f}")
    layer.set_trainable(False)
    return trace
