from . import checkpoint, ops
from .tensor import (
    Tensor,
    add,
    backward,
    broadcast_to,
    concat,
    div,
    enable_grad,
    grad_graph,
    l2_norm,
    leaky_relu,
    linear_map,
    matmul,
    mul,
    neg,
    no_grad,
    permute,
    pow_const,
    reshape,
    set_check_finite,
    slice_axis,
    tanh,
    texp,
    tmean,
    transpose,
    tsqrt,
    tsum,
    zero_grads,
)

__all__ = [
    "Tensor",
    "add",
    "backward",
    "broadcast_to",
    "checkpoint",
    "concat",
    "div",
    "enable_grad",
    "grad_graph",
    "l2_norm",
    "leaky_relu",
    "linear_map",
    "matmul",
    "mul",
    "neg",
    "no_grad",
    "ops",
    "permute",
    "pow_const",
    "reshape",
    "set_check_finite",
    "slice_axis",
    "tanh",
    "texp",
    "tmean",
    "transpose",
    "tsqrt",
    "tsum",
    "zero_grads",
]
