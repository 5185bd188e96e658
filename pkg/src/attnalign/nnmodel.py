"""Transformer translation model and the alignment layers built on top of it.

Attention matrices handed to the rest of the toolkit are source-major: rows
are source positions, columns target positions, and every column is a
probability distribution over the source sentence. Both sentences end in an
EOS token, so a pair with ``n`` source and ``m`` target words yields an
``(n + 1) x (m + 1)`` matrix.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, fields
from typing import Iterator, Sequence

import numpy as np

from . import tensor as T
from .data.corpus import EOS, PAD, SentencePair
from .errors import ContractError, DimensionError
from .links import AlignmentSet
from .tensor import Tensor, make_rng
from .tensor.ops import MASK_VALUE


@dataclass
class ModelConfig:
    """Sizes of the translation model and its alignment layer.

    Defaults are the desk-scale configuration; :meth:`full_sized` gives the
    full downscaled transformer.
    """

    src_vocab: int
    tgt_vocab: int
    embedding_size: int = 64
    hidden_units: int = 256
    encoder_layers: int = 2
    decoder_layers: int = 1
    heads: int = 4
    align_hidden: int = 32
    alignment_heads: int = 1
    dropout: float = 0.1
    max_len: int = 256
    context_position_scale: float = 4.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name not in ("dropout", "context_position_scale") and value <= 0:
                raise ValueError(f"{f.name} must be positive, got {value}")
        if self.embedding_size % self.heads:
            raise ValueError("embedding_size must be divisible by heads")
        if self.context_position_scale < 0:
            raise ValueError("context_position_scale must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @classmethod
    def full_sized(cls, src_vocab: int, tgt_vocab: int) -> "ModelConfig":
        return cls(src_vocab, tgt_vocab, embedding_size=256, hidden_units=512,
                   encoder_layers=6, decoder_layers=3, heads=8, align_hidden=256)

    @property
    def head_dim(self) -> int:
        return self.embedding_size // self.heads

    def to_dict(self) -> dict:
        return asdict(self)


# building blocks ----------------------------------------------------------------

class Module:
    """Parameter container; parameters are the Tensor attributes."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            full = f"{prefix}{name}"
            if isinstance(value, Tensor):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(state))
        if missing:
            raise ContractError(f"checkpoint lacks parameters {missing[:5]}")
        for name, p in params.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise DimensionError(f"{name}: checkpoint shape {value.shape} != model {p.shape}")
            p.data = value.astype(p.data.dtype, copy=True)

    def set_trainable(self, flag: bool) -> None:
        for p in self.parameters():
            p.requires_grad = flag
            p.grad = None

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name, p in self.named_parameters():
            h.update(name.encode())
            h.update(np.ascontiguousarray(p.data).tobytes())
        return h.hexdigest()


def _param(rng: np.random.Generator, shape, limit: float) -> Tensor:
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        # uniform fan-in init with unit-variance outputs for unit-variance inputs
        self.weight = _param(rng, (d_in, d_out), math.sqrt(3.0 / d_in))
        self.bias = Tensor(np.zeros(d_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        d_in, d_out = self.weight.shape
        lead = x.shape[:-1]
        y = T.matmul(T.reshape(x, (-1, d_in)), self.weight)
        if self.bias is not None:
            y = T.add(y, self.bias)
        return T.reshape(y, lead + (d_out,))


class LayerNorm(Module):
    def __init__(self, d: int):
        self.gain = Tensor(np.ones(d), requires_grad=True)
        self.bias = Tensor(np.zeros(d), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias)


class MultiHeadAttention(Module):
    def __init__(self, d_model: int, heads: int, rng: np.random.Generator, d_att: int | None = None):
        d_att = d_att or d_model
        if d_att % heads:
            raise ValueError(f"attention size {d_att} not divisible by {heads} heads")
        self.heads = heads
        self.query = Linear(d_model, d_att, rng)
        self.key = Linear(d_model, d_att, rng)
        self.value = Linear(d_model, d_att, rng)
        self.output = Linear(d_att, d_model, rng)

    def __call__(self, x_q: Tensor, x_kv: Tensor, bias: np.ndarray | None) -> Tensor:
        q = T.split_heads(self.query(x_q), self.heads)
        k = T.split_heads(self.key(x_kv), self.heads)
        v = T.split_heads(self.value(x_kv), self.heads)
        logits = T.scale(T.matmul(q, T.swapaxes(k, -1, -2)), 1.0 / math.sqrt(q.shape[-1]))
        if bias is not None:
            logits = T.add(logits, bias)
        att = T.softmax(logits, axis=-1)
        return self.output(T.merge_heads(T.matmul(att, v)))


class FeedForward(Module):
    def __init__(self, d: int, hidden: int, rng: np.random.Generator):
        self.inner = Linear(d, hidden, rng)
        self.outer = Linear(hidden, d, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.outer(T.relu(self.inner(x)))


class _Context:
    """Dropout settings threaded through one forward pass."""

    def __init__(self, rate: float = 0.0, rng: np.random.Generator | None = None):
        self.training = rng is not None and rate > 0
        self.rate = rate
        self.rng = rng

    def drop(self, x: Tensor) -> Tensor:
        return T.dropout(x, self.rate, self.rng, self.training)


class EncoderLayer(Module):
    def __init__(self, cfg: ModelConfig, rng):
        self.attn_norm = LayerNorm(cfg.embedding_size)
        self.attn = MultiHeadAttention(cfg.embedding_size, cfg.heads, rng)
        self.ff_norm = LayerNorm(cfg.embedding_size)
        self.ff = FeedForward(cfg.embedding_size, cfg.hidden_units, rng)

    def __call__(self, x, bias, ctx: _Context):
        h = self.attn_norm(x)
        x = T.add(x, ctx.drop(self.attn(h, h, bias)))
        return T.add(x, ctx.drop(self.ff(self.ff_norm(x))))


class DecoderLayer(Module):
    def __init__(self, cfg: ModelConfig, rng):
        d = cfg.embedding_size
        self.self_norm = LayerNorm(d)
        self.self_attn = MultiHeadAttention(d, cfg.heads, rng)
        self.cross_norm = LayerNorm(d)
        self.cross_attn = MultiHeadAttention(d, cfg.heads, rng)
        self.ff_norm = LayerNorm(d)
        self.ff = FeedForward(d, cfg.hidden_units, rng)

    def __call__(self, y, memory, self_bias, cross_bias, ctx: _Context):
        h = self.self_norm(y)
        y = T.add(y, ctx.drop(self.self_attn(h, h, self_bias)))
        y = T.add(y, ctx.drop(self.cross_attn(self.cross_norm(y), memory, cross_bias)))
        return T.add(y, ctx.drop(self.ff(self.ff_norm(y))))


def positional_encoding(length: int, d: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(0, d, 2)[None, :]
    angle = pos / np.power(10000.0, i / d)
    pe = np.zeros((length, d))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d // 2])
    return pe


def padding_bias(lengths: np.ndarray, width: int) -> np.ndarray:
    """Additive key mask of shape (batch, 1, 1, width)."""
    pad = np.arange(width)[None, :] >= np.asarray(lengths)[:, None]
    return np.where(pad, MASK_VALUE, 0.0)[:, None, None, :]


def causal_bias(width: int) -> np.ndarray:
    return np.triu(np.full((width, width), MASK_VALUE), k=1)[None, None]


# batching ---------------------------------------------------------------------------

@dataclass
class Batch:
    """Padded id matrices for a set of sentence pairs.

    ``tgt_in`` is the decoder input (EOS followed by the target words) and
    ``tgt_out`` the tokens each position predicts (the words followed by EOS).
    Lengths include the EOS token.
    """

    src: np.ndarray
    src_len: np.ndarray
    tgt_in: np.ndarray
    tgt_out: np.ndarray
    tgt_len: np.ndarray
    index: np.ndarray

    def __len__(self) -> int:
        return len(self.index)

    @property
    def target_mask(self) -> np.ndarray:
        return np.arange(self.tgt_out.shape[1])[None, :] < self.tgt_len[:, None]

    @property
    def num_tokens(self) -> int:
        return int(self.tgt_len.sum())


def make_batch(pairs: Sequence[SentencePair], index: Sequence[int] | None = None) -> Batch:
    if index is None:
        index = range(len(pairs))
    index = np.asarray(index, dtype=np.int64)
    chosen = [pairs[i] for i in index]
    src_len = np.array([len(p.src) + 1 for p in chosen])
    tgt_len = np.array([len(p.tgt) + 1 for p in chosen])
    b, n, m = len(chosen), src_len.max(), tgt_len.max()
    src = np.full((b, n), PAD, dtype=np.int64)
    tgt_in = np.full((b, m), PAD, dtype=np.int64)
    tgt_out = np.full((b, m), PAD, dtype=np.int64)
    for i, p in enumerate(chosen):
        src[i, : len(p.src)] = p.src
        src[i, len(p.src)] = EOS
        tgt_in[i, 0] = EOS
        tgt_in[i, 1: len(p.tgt) + 1] = p.tgt
        tgt_out[i, : len(p.tgt)] = p.tgt
        tgt_out[i, len(p.tgt)] = EOS
    return Batch(src, src_len, tgt_in, tgt_out, tgt_len, index)


def token_batches(pairs: Sequence[SentencePair], max_tokens: int,
                  rng: np.random.Generator | None = None) -> list[np.ndarray]:
    """Group pairs of similar length so each batch holds about ``max_tokens`` target tokens.

    Batch order is shuffled with ``rng`` when given.
    """
    lengths = np.array([max(len(p.src), len(p.tgt)) + 1 for p in pairs])
    order = np.argsort(lengths, kind="stable")
    batches, current, width = [], [], 0
    for i in order:
        width = max(width, lengths[i])
        if current and width * (len(current) + 1) > max_tokens:
            batches.append(np.array(current))
            current, width = [], lengths[i]
        current.append(i)
    if current:
        batches.append(np.array(current))
    if rng is not None:
        batches = [batches[i] for i in rng.permutation(len(batches))]
    return batches


# translation model --------------------------------------------------------------------

class TranslationModel(Module):
    """Encoder-decoder transformer trained for translation in one direction."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, direction: str = "fwd"):
        rng = make_rng(seed)
        d = cfg.embedding_size
        self._cfg = cfg
        self._direction = direction
        self._frozen = False
        self.src_embed = Tensor(rng.normal(0, d ** -0.5, (cfg.src_vocab, d)), requires_grad=True)
        self.tgt_embed = Tensor(rng.normal(0, d ** -0.5, (cfg.tgt_vocab, d)), requires_grad=True)
        self.encoder = [EncoderLayer(cfg, rng) for _ in range(cfg.encoder_layers)]
        self.encoder_norm = LayerNorm(d)
        self.decoder = [DecoderLayer(cfg, rng) for _ in range(cfg.decoder_layers)]
        self.decoder_norm = LayerNorm(d)
        self.generator = Linear(d, cfg.tgt_vocab, rng)
        self._pe = positional_encoding(cfg.max_len, d)

    @property
    def config(self) -> ModelConfig:
        return self._cfg

    @property
    def direction(self) -> str:
        return self._direction

    @property
    def frozen(self) -> bool:
        return self._frozen

    def freeze(self) -> "TranslationModel":
        self.set_trainable(False)
        self._frozen = True
        return self

    def unfreeze(self) -> "TranslationModel":
        self.set_trainable(True)
        self._frozen = False
        return self

    def _embed(self, table, ids, ctx):
        if ids.shape[1] > self._cfg.max_len:
            raise ContractError(f"sequence length {ids.shape[1]} exceeds max_len {self._cfg.max_len}")
        emb = T.scale(T.embedding(table, ids), math.sqrt(self._cfg.embedding_size))
        return emb, ctx.drop(T.add(emb, self._pe[: ids.shape[1]]))

    def encode_batch(self, src: np.ndarray, src_len: np.ndarray, ctx: _Context | None = None):
        """Encoder output and the alignment keys (embeddings + encoder output)."""
        ctx = ctx or _Context()
        emb, x = self._embed(self.src_embed, src, ctx)
        bias = padding_bias(src_len, src.shape[1])
        for layer in self.encoder:
            x = layer(x, bias, ctx)
        out = self.encoder_norm(x)
        return out, T.add(emb, out)

    def decode_batch(self, memory: Tensor, src_len: np.ndarray, tgt_in: np.ndarray,
                     ctx: _Context | None = None) -> Tensor:
        """Top decoder states, one per target prefix position."""
        ctx = ctx or _Context()
        _, y = self._embed(self.tgt_embed, tgt_in, ctx)
        self_bias = causal_bias(tgt_in.shape[1])
        cross_bias = padding_bias(src_len, memory.shape[1])
        for layer in self.decoder:
            y = layer(y, memory, self_bias, cross_bias, ctx)
        return self.decoder_norm(y)

    def forward(self, batch: Batch, ctx: _Context | None = None) -> Tensor:
        memory, _ = self.encode_batch(batch.src, batch.src_len, ctx)
        return self.generator(self.decode_batch(memory, batch.src_len, batch.tgt_in, ctx))

    def loss(self, batch: Batch, ctx: _Context | None = None) -> Tensor:
        """Cross-entropy summed over real target tokens (EOS included)."""
        return T.cross_entropy(self.forward(batch, ctx), batch.tgt_out, batch.target_mask)

    def features(self, batch: Batch) -> "Features":
        """Inference-mode alignment inputs for a batch (no graph is recorded)."""
        with_grad = [p.requires_grad for p in self.parameters()]
        self.set_trainable(False)
        try:
            memory, kv = self.encode_batch(batch.src, batch.src_len)
            states = self.decode_batch(memory, batch.src_len, batch.tgt_in)
        finally:
            for p, flag in zip(self.parameters(), with_grad):
                p.requires_grad = flag
        return Features(kv.data, states.data, batch.src_len, batch.tgt_len, batch.tgt_out,
                        batch.index)


@dataclass
class Features:
    """Frozen translation-model activations consumed by alignment layers."""

    kv: np.ndarray
    states: np.ndarray
    src_len: np.ndarray
    tgt_len: np.ndarray
    targets: np.ndarray
    index: np.ndarray

    def __len__(self) -> int:
        return len(self.index)

    @property
    def target_mask(self) -> np.ndarray:
        return np.arange(self.targets.shape[1])[None, :] < self.tgt_len[:, None]

    @property
    def source_mask(self) -> np.ndarray:
        return np.arange(self.kv.shape[1])[None, :] < self.src_len[:, None]


def compute_features(model: TranslationModel, pairs: Sequence[SentencePair],
                     max_tokens: int = 4000) -> list[Features]:
    return [model.features(make_batch(pairs, idx)) for idx in token_batches(pairs, max_tokens)]


def encode(model: TranslationModel, source_ids) -> tuple[np.ndarray, np.ndarray]:
    """Encoder output and alignment keys for one EOS-terminated source sentence."""
    ids = np.asarray(source_ids, dtype=np.int64)
    if ids.size == 0:
        raise ContractError("cannot encode an empty sequence")
    if ids[-1] != EOS:
        raise ContractError("source sequence must end with the EOS id")
    out, kv = model.encode_batch(ids[None], np.array([len(ids)]))
    return out.data[0], kv.data[0]


def decode_translation(model: TranslationModel, source_reps: np.ndarray, target_prefix) -> np.ndarray:
    """Next-token logits for every position of a decoder input prefix."""
    prefix = np.asarray(target_prefix, dtype=np.int64)
    if len(prefix) > model.config.max_len:
        raise ContractError(f"prefix length {len(prefix)} exceeds max_len {model.config.max_len}")
    memory = Tensor(np.asarray(source_reps)[None])
    states = model.decode_batch(memory, np.array([memory.shape[1]]), prefix[None])
    return model.generator(states).data[0]


def train_translation(model: TranslationModel, pairs: Sequence[SentencePair], steps: int,
                      batch_tokens: int = 4000, lr: float = 1e-3, warmup: int = 100,
                      seed: int = 0, log=None) -> list[float]:
    """Adam training with token-sized batches; returns per-step mean token loss."""
    if model.frozen:
        raise ContractError("cannot train a frozen translation model")
    rng = make_rng(seed)
    model.set_trainable(True)
    params = model.parameters()
    opt = T.Adam(params, lr=lr, warmup_steps=warmup)
    trace = []
    batches: list[np.ndarray] = []
    for step in range(steps):
        if not batches:
            batches = token_batches(pairs, batch_tokens, rng)
        batch = make_batch(pairs, batches.pop())
        opt.zero_grad()
        loss = model.loss(batch, _Context(model.config.dropout, rng))
        T.backward(T.scale(loss, 1.0 / batch.num_tokens))
        opt.step()
        trace.append(float(loss.data) / batch.num_tokens)
        if log is not None and (step + 1) % 50 == 0:
            log(f"translation step {step + 1}/{steps} loss {np.mean(trace[-50:]):.4f}")
    return trace


# attention states -----------------------------------------------------------------------

@dataclass
class AttentionState:
    """Attention logits of one sentence pair, source-major.

    ``src_len`` and ``tgt_len`` count real tokens; when ``eos`` is set the
    matrix carries one extra row and column for the EOS tokens.
    """

    logits: np.ndarray
    src_len: int
    tgt_len: int
    eos: bool = True

    def __post_init__(self):
        extra = 1 if self.eos else 0
        expected = (self.src_len + extra, self.tgt_len + extra)
        if self.logits.shape != expected:
            raise DimensionError(f"attention logits {self.logits.shape} do not match "
                                 f"sentence lengths {expected}")

    @property
    def probs(self) -> np.ndarray:
        x = self.logits - self.logits.max(axis=0, keepdims=True)
        e = np.exp(x)
        return e / e.sum(axis=0, keepdims=True)

    @classmethod
    def from_probs(cls, probs: np.ndarray, eos: bool = False) -> "AttentionState":
        """Wrap a column-stochastic matrix (log probabilities become the logits)."""
        probs = np.asarray(probs, dtype=np.float64)
        with np.errstate(divide="ignore"):
            logits = np.log(probs)
        logits = np.where(np.isfinite(logits), logits, MASK_VALUE)
        extra = 1 if eos else 0
        return cls(logits, probs.shape[0] - extra, probs.shape[1] - extra, eos)


def split_states(logits: np.ndarray, src_len: np.ndarray, tgt_len: np.ndarray) -> list[AttentionState]:
    """Per-pair states from a padded (batch, N, M) logit array; lengths include EOS."""
    return [AttentionState(np.array(logits[b, : src_len[b], : tgt_len[b]], dtype=np.float64),
                           int(src_len[b]) - 1, int(tgt_len[b]) - 1)
            for b in range(len(src_len))]


def extract_argmax_links(state: AttentionState) -> AlignmentSet:
    """One link per real target token to its most attended source token.

    Ties go to the smallest source index; target tokens whose best source is
    the EOS row stay unaligned.
    """
    probs = state.probs
    best = np.argmax(probs[:, : state.tgt_len], axis=0)
    links = [(int(s) + 1, t + 1) for t, s in enumerate(best) if s < state.src_len]
    return AlignmentSet(links, src_len=state.src_len, tgt_len=state.tgt_len)


# alignment layers ------------------------------------------------------------------------

class AlignmentLayer(Module):
    """Single-head attention whose context vector alone predicts the next target word.

    Queries come from the top decoder layer, keys and values from the sum of
    source embeddings and encoder output.
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        rng = make_rng(seed)
        d, da = cfg.embedding_size, cfg.align_hidden
        self._cfg = cfg
        self.query = Linear(d, da, rng)
        self.key = Linear(d, da, rng)
        self.value = Linear(d, da, rng)
        self.output = Linear(da, cfg.tgt_vocab, rng)

    def attention_logits(self, states, kv, src_len: np.ndarray,
                         logit_dropout: float = 0.0, rng=None) -> Tensor:
        """Source-major logits (batch, N, M); padded source rows are masked."""
        states, kv = T.as_tensor(states), T.as_tensor(kv)
        if states.shape[0] != kv.shape[0] or states.shape[-1] != kv.shape[-1]:
            raise DimensionError(f"decoder states {states.shape} and keys {kv.shape} do not match")
        q = self.query(states)
        k = self.key(kv)
        logits = T.scale(T.matmul(k, T.swapaxes(q, -1, -2)), 1.0 / math.sqrt(q.shape[-1]))
        logits = T.dropout(logits, logit_dropout, rng, training=logit_dropout > 0)
        pad = np.arange(kv.shape[1])[None, :, None] >= np.asarray(src_len)[:, None, None]
        return T.masked_fill(logits, pad, MASK_VALUE)

    def values(self, kv) -> Tensor:
        return self.value(T.as_tensor(kv))

    def predict(self, probs: Tensor, values: Tensor) -> Tensor:
        """Vocabulary logits (batch, M, vocab) from source-major attention probabilities."""
        context = T.matmul(T.swapaxes(probs, -1, -2), values)
        return self.output(context)

    def forward(self, states, kv, src_len, logit_dropout: float = 0.0, rng=None):
        logits = self.attention_logits(states, kv, src_len, logit_dropout, rng)
        probs = T.softmax(logits, axis=-2)
        return logits, probs, self.predict(probs, self.values(kv))


class FullContextAlignmentLayer(Module):
    """Alignment attention preceded by unmasked self-attention over all decoder states.

    Trained only with the guided alignment loss, so it has no vocabulary output.
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        rng = make_rng(seed)
        d, da = cfg.embedding_size, cfg.align_hidden
        self._cfg = cfg
        heads = cfg.heads if da % cfg.heads == 0 else 1
        self.self_norm = LayerNorm(d)
        self.self_attn = MultiHeadAttention(d, heads, rng, d_att=da)
        self.query_norm = LayerNorm(d)
        self.query = Linear(d, da, rng)
        self.key = Linear(d, da, rng)

    def attention_logits(self, states, kv, src_len: np.ndarray, tgt_len: np.ndarray,
                         dropout: float = 0.0, rng=None) -> Tensor:
        states, kv = T.as_tensor(states), T.as_tensor(kv)
        if states.shape[0] != kv.shape[0] or states.shape[-1] != kv.shape[-1]:
            raise DimensionError(f"decoder states {states.shape} and keys {kv.shape} do not match")
        ctx = _Context(dropout, rng)
        # fresh positions make the offset to neighbouring target words easy to attend to
        pe = positional_encoding(states.shape[1], states.shape[2]) * self._cfg.context_position_scale
        h = self.self_norm(T.add(states, pe.astype(states.data.dtype)))
        h = T.add(states, ctx.drop(self.self_attn(h, h, padding_bias(tgt_len, states.shape[1]))))
        q = self.query(self.query_norm(h))
        k = self.key(kv)
        logits = T.scale(T.matmul(k, T.swapaxes(q, -1, -2)), 1.0 / math.sqrt(q.shape[-1]))
        pad = np.arange(kv.shape[1])[None, :, None] >= np.asarray(src_len)[:, None, None]
        return T.masked_fill(logits, pad, MASK_VALUE)


def alignment_forward(layer: AlignmentLayer, source_kv: np.ndarray, decoder_states: np.ndarray,
                      target_ids) -> tuple[AttentionState, np.ndarray]:
    """Attention state and per-position log-probability of ``target_ids`` for one pair.

    ``source_kv`` is (n + 1, d) and ``decoder_states`` (m + 1, d); ``target_ids``
    holds the m + 1 predicted tokens (words then EOS).
    """
    kv, states = np.asarray(source_kv), np.asarray(decoder_states)
    if kv.ndim != 2 or states.ndim != 2 or kv.shape[1] != states.shape[1]:
        raise DimensionError(f"keys {kv.shape} and decoder states {states.shape} do not match")
    logits, _, vocab_logits = layer.forward(states[None], kv[None], np.array([len(kv)]))
    logp = T.log_softmax(vocab_logits, axis=-1).data[0]
    target_ids = np.asarray(target_ids)
    state = AttentionState(np.array(logits.data[0], dtype=np.float64), len(kv) - 1, len(states) - 1)
    return state, logp[np.arange(len(target_ids)), target_ids]
