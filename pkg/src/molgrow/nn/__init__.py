"""Minimal neural-network stack: tensors, tape autodiff, Adam, checkpoints."""

from .checkpoint import (
    fingerprint_bytes,
    fingerprint_json,
    load_checkpoint,
    require_meta,
    save_checkpoint,
)
from .optim import Adam
from .tensor import (
    DTYPE,
    LAYER_NORM_EPS,
    LEAKY_SLOPE,
    Tape,
    Tensor,
    add,
    bce_with_logits,
    bias,
    concat,
    div,
    elu,
    gather_rows,
    gru_cell,
    init_glorot,
    layer_norm,
    leaky_relu,
    linear,
    matmul,
    mul,
    neg,
    parameter,
    relu,
    rows_dot,
    segment_softmax,
    segment_sum,
    sigmoid,
    softmax,
    softplus,
    sub,
    tanh,
    tlog,
    tmean,
    tsum,
)

__all__ = [
    "DTYPE",
    "LAYER_NORM_EPS",
    "LEAKY_SLOPE",
    "Adam",
    "Tape",
    "Tensor",
    "add",
    "bce_with_logits",
    "bias",
    "concat",
    "div",
    "elu",
    "fingerprint_bytes",
    "fingerprint_json",
    "gather_rows",
    "gru_cell",
    "init_glorot",
    "layer_norm",
    "leaky_relu",
    "linear",
    "load_checkpoint",
    "matmul",
    "mul",
    "neg",
    "parameter",
    "relu",
    "require_meta",
    "rows_dot",
    "save_checkpoint",
    "segment_softmax",
    "segment_sum",
    "sigmoid",
    "softmax",
    "softplus",
    "sub",
    "tanh",
    "tlog",
    "tmean",
    "tsum",
]
