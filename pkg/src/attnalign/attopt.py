"""Attention optimization at inference time.

Gradient descent runs on the alignment-layer attention logits of an observed
sentence pair while every model parameter stays fixed. The bidirectional
variant shares one logit matrix between a forward and a backward model; the
backward model reads its transpose.

All routines work on padded batches (batch, N, M) where lengths include the
EOS token; since the objective is a sum over pairs and the step size is
fixed, batching gives the same result as optimizing each pair alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .data.corpus import SentencePair
from .errors import DimensionError
from .links import AlignmentSet
from .nnmodel import (
    AlignmentLayer,
    AttentionState,
    Features,
    MASK_VALUE,
    TranslationModel,
    make_batch,
)
from .objectives import ContiguityConfig, contiguity_loss_batch
from .tensor import Tensor


@dataclass
class OptConfig:
    steps: int = 3
    learning_rate: float = 1.0
    weight: float = 0.0
    contiguity: ContiguityConfig = field(default_factory=lambda: ContiguityConfig(logit_dropout=0.0))
    optimize_logits: bool = True
    include_eos: bool = True
    # which probabilities the contiguity term sees in the joint objective: "forward" or "both"
    bidir_contiguity: str = "forward"

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.weight < 0:
            raise ValueError("contiguity weight must be non-negative")
        if not self.optimize_logits:
            raise ValueError("only optimization of attention logits is supported")
        if self.bidir_contiguity not in ("forward", "both"):
            raise ValueError("bidir_contiguity must be 'forward' or 'both'")


@dataclass
class Direction:
    """Everything one frozen model contributes to attention optimization.

    ``values`` are the projected alignment values and stay constant; only the
    attention logits move.
    """

    layer: AlignmentLayer
    values: np.ndarray
    targets: np.ndarray
    src_len: np.ndarray
    tgt_len: np.ndarray
    init_logits: np.ndarray
    index: np.ndarray

    @classmethod
    def from_features(cls, layer: AlignmentLayer, feats: Features) -> "Direction":
        logits = layer.attention_logits(feats.states, feats.kv, feats.src_len)
        return cls(layer, layer.values(feats.kv).data, feats.targets, feats.src_len,
                   feats.tgt_len, logits.data, feats.index)

    def pad_mask(self) -> np.ndarray:
        return np.arange(self.values.shape[1])[None, :, None] >= self.src_len[:, None, None]

    def target_weights(self, include_eos: bool) -> np.ndarray:
        limit = self.tgt_len if include_eos else self.tgt_len - 1
        return np.arange(self.targets.shape[1])[None, :] < limit[:, None]

    def probs(self, logits: Tensor) -> Tensor:
        return T.softmax(T.masked_fill(logits, self.pad_mask(), MASK_VALUE), axis=1)

    def cross_entropy(self, probs: Tensor, include_eos: bool) -> Tensor:
        """Per-pair negative log-likelihood of the observed targets, shape (batch,)."""
        vocab_logits = self.layer.predict(probs, Tensor(self.values))
        logp = T.log_softmax(vocab_logits, axis=-1)
        picked = T.reshape(T.gather(logp, self.targets[..., None], axis=-1), self.targets.shape)
        weights = self.target_weights(include_eos).astype(picked.data.dtype)
        return T.scale(T.ops.sum(T.mul(picked, weights), axis=1), -1.0)

    def contiguity(self, probs: Tensor, cfg: OptConfig) -> Tensor:
        return contiguity_loss_batch(probs, self.src_len - 1, self.tgt_len - 1, cfg.contiguity)


def _descend(x0: np.ndarray, objective, cfg: OptConfig) -> tuple[np.ndarray, list[np.ndarray]]:
    """Fixed-step gradient descent; the trace holds per-pair losses before each step and at the end."""
    x = np.array(x0, copy=True)
    trace = []
    for step in range(cfg.steps + 1):
        var = Tensor(x, requires_grad=step < cfg.steps)
        losses = objective(var)
        trace.append(np.array(losses.data, dtype=np.float64))
        if step == cfg.steps:
            break
        T.backward(T.ops.sum(losses))
        x = x - cfg.learning_rate * var.grad
    return x, trace


def unidirectional_objective(direction: Direction, cfg: OptConfig):
    def objective(logits: Tensor) -> Tensor:
        probs = direction.probs(logits)
        loss = direction.cross_entropy(probs, cfg.include_eos)
        if cfg.weight > 0:
            loss = T.add(loss, T.scale(direction.contiguity(probs, cfg), cfg.weight))
        return loss
    return objective


def optimize_batch(direction: Direction, cfg: OptConfig) -> tuple[np.ndarray, list[np.ndarray]]:
    """Optimized padded logits (batch, N, M) and the per-step loss trace."""
    return _descend(direction.init_logits, unidirectional_objective(direction, cfg), cfg)


def optimize_unidirectional(model: TranslationModel, layer: AlignmentLayer, pair: SentencePair,
                            cfg: OptConfig | None = None) -> AttentionState:
    """Attention state of one sentence pair after ``cfg.steps`` descent steps.

    Starts from the forward-pass logits; ``steps=0`` returns them unchanged.
    """
    cfg = cfg or OptConfig()
    direction = Direction.from_features(layer, model.features(make_batch([pair])))
    logits, _ = optimize_batch(direction, cfg)
    return AttentionState(np.array(logits[0], dtype=np.float64), len(pair.src), len(pair.tgt))


# bidirectional ---------------------------------------------------------------------------

@dataclass
class BidirState:
    """Shared source-major logits, in forward orientation, for one or more pairs.

    ``logits`` is (n+1, m+1) for a single pair or padded (batch, N, M). The
    backward model consumes the transpose of the last two axes.
    """

    logits: np.ndarray
    forward: Direction | None = None
    backward: Direction | None = None
    trace: list = field(default_factory=list)
    src_len: np.ndarray | None = None
    tgt_len: np.ndarray | None = None

    def __post_init__(self):
        self.logits = np.asarray(self.logits)
        if self.src_len is None:
            if self.forward is not None:
                self.src_len, self.tgt_len = self.forward.src_len, self.forward.tgt_len
            else:
                b = self.logits if self.logits.ndim == 3 else self.logits[None]
                self.src_len = np.full(len(b), b.shape[1])
                self.tgt_len = np.full(len(b), b.shape[2])

    @property
    def batched(self) -> np.ndarray:
        return self.logits if self.logits.ndim == 3 else self.logits[None]

    @property
    def losses(self) -> list[float]:
        """Total loss over all pairs at every step (length steps + 1)."""
        return [float(np.sum(t)) for t in self.trace]


def _logits_of(state) -> np.ndarray:
    return np.asarray(state.logits if isinstance(state, AttentionState) else state)


def init_bidirectional(state_f, state_b, forward: Direction | None = None,
                       backward: Direction | None = None) -> BidirState:
    """Average the forward logits with the transposed backward logits.

    Accepts attention states or raw logit arrays, single (2-d) or padded
    batches (3-d).
    """
    lf, lb = _logits_of(state_f), _logits_of(state_b)
    lb_t = np.swapaxes(lb, -1, -2)
    if lf.shape != lb_t.shape:
        raise DimensionError(f"forward logits {lf.shape} and transposed backward logits "
                             f"{lb_t.shape} differ")
    return BidirState(0.5 * (lf + lb_t), forward, backward)


def init_from_directions(forward: Direction, backward: Direction) -> BidirState:
    """Bidirectional start for a batch whose backward pass used the reversed pairs."""
    if not (np.array_equal(forward.index, backward.index)
            and np.array_equal(forward.src_len, backward.tgt_len)
            and np.array_equal(forward.tgt_len, backward.src_len)):
        raise DimensionError("forward and backward batches do not cover the same pairs")
    return init_bidirectional(forward.init_logits, backward.init_logits, forward, backward)


def bidirectional_objective(state: BidirState, cfg: OptConfig):
    fwd, bwd = state.forward, state.backward

    def objective(logits: Tensor) -> Tensor:
        probs_f = fwd.probs(logits)
        probs_b = bwd.probs(T.swapaxes(logits, 1, 2))
        loss = T.add(fwd.cross_entropy(probs_f, cfg.include_eos),
                     bwd.cross_entropy(probs_b, cfg.include_eos))
        if cfg.weight > 0:
            lc = fwd.contiguity(probs_f, cfg)
            if cfg.bidir_contiguity == "both":
                lc = T.add(lc, bwd.contiguity(probs_b, cfg))
            loss = T.add(loss, T.scale(lc, cfg.weight))
        return loss
    return objective


def optimize_bidirectional(state: BidirState, cfg: OptConfig | None = None) -> BidirState:
    """Descend the joint forward + backward (+ contiguity) loss on the shared logits."""
    cfg = cfg or OptConfig(steps=10, weight=5.0)
    if state.forward is None or state.backward is None:
        raise ValueError("bidirectional optimization needs both model directions attached")
    single = state.logits.ndim == 2
    logits, trace = _descend(state.batched, bidirectional_objective(state, cfg), cfg)
    return BidirState(logits[0] if single else logits, state.forward, state.backward, trace,
                      state.src_len, state.tgt_len)


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def merged_probs(logits: np.ndarray, n: int, m: int) -> np.ndarray:
    """Elementwise product of source-axis and target-axis softmax, real cells only.

    ``logits`` is the (n+1, m+1) matrix of one pair including EOS.
    """
    a_f = _softmax(logits, axis=0)
    a_b = _softmax(logits, axis=1)
    return (a_f * a_b)[:n, :m]


def top_links(merged: np.ndarray) -> AlignmentSet:
    """The min(n, m) largest cells; ties go to the lexicographically smaller (s, t)."""
    n, m = merged.shape
    order = np.argsort(-merged.ravel(), kind="stable")[: min(n, m)]
    links = [(int(k // m) + 1, int(k % m) + 1) for k in order]
    return AlignmentSet(links, src_len=n, tgt_len=m)


def extract_bidirectional(state: BidirState) -> AlignmentSet:
    """Links of a single-pair state (EOS row and column present in the logits)."""
    logits = np.asarray(state.logits, dtype=np.float64)
    if logits.ndim != 2:
        raise DimensionError("extract_bidirectional takes a single-pair state; "
                             "use extract_bidirectional_batch for batches")
    n, m = logits.shape[0] - 1, logits.shape[1] - 1
    return top_links(merged_probs(logits, n, m))


def extract_bidirectional_batch(state: BidirState) -> list[AlignmentSet]:
    out = []
    for b, (ns, nt) in enumerate(zip(state.src_len, state.tgt_len)):
        logits = np.asarray(state.batched[b, :ns, :nt], dtype=np.float64)
        out.append(top_links(merged_probs(logits, int(ns) - 1, int(nt) - 1)))
    return out
