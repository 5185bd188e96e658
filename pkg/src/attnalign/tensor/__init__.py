"""Numpy-backed tensors with reverse-mode differentiation."""

import numpy as np

from . import ops
from .core import (
    GradGraph,
    Tensor,
    as_tensor,
    backward,
    get_default_dtype,
    precision,
    set_default_dtype,
)
from .ops import (
    add,
    concat,
    conv2d,
    cross_entropy,
    dropout,
    embedding,
    exp,
    gather,
    layer_norm,
    log,
    log_softmax,
    masked_fill,
    matmul,
    max,
    merge_heads,
    mul,
    relu,
    reshape,
    scale,
    softmax,
    split_heads,
    sub,
    swapaxes,
    transpose,
)
from .optim import Adam, OptimizerState, adam_step, sgd_step


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator used for all seeded randomness."""
    return np.random.Generator(np.random.Philox(seed))


__all__ = [
    "Adam", "GradGraph", "OptimizerState", "Tensor", "adam_step", "add", "as_tensor",
    "backward", "concat", "conv2d", "cross_entropy", "dropout", "embedding", "exp", "gather",
    "get_default_dtype", "layer_norm", "log", "log_softmax", "make_rng", "masked_fill",
    "matmul", "max", "merge_heads", "mul", "ops", "precision", "relu", "reshape", "scale",
    "set_default_dtype", "sgd_step", "softmax", "split_heads", "sub", "swapaxes", "transpose",
]
