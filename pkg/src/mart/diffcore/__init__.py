"""Minimal reverse-mode differentiation: tensors, ops, Adam, gradient checks."""

from mart.diffcore.gradcheck import GradCheckReport, grad_check
from mart.diffcore.ops import (
    add,
    batchnorm,
    concat,
    conv2d,
    cosine_sim,
    div,
    exp,
    linear,
    log,
    matmul,
    maxpool2d,
    mean,
    mul,
    neg,
    pairwise_cosine,
    relu,
    reshape,
    rowwise_cosine,
    scale,
    softmax,
    sub,
    take_rows,
    transpose,
)
from mart.diffcore.ops import sum  # noqa: A004
from mart.diffcore.optim import AdamState, adam_step
from mart.diffcore.tensor import Tape, Tensor, as_tensor

__all__ = [
    "AdamState", "GradCheckReport", "Tape", "Tensor", "adam_step", "add", "as_tensor",
    "batchnorm", "concat", "conv2d", "cosine_sim", "div", "exp", "grad_check", "linear",
    "log", "matmul", "maxpool2d", "mean", "mul", "neg", "pairwise_cosine", "relu",
    "reshape", "rowwise_cosine", "scale", "softmax", "sub", "sum", "take_rows", "transpose",
]
