"""Minimal reverse-mode automatic differentiation over float64 arrays."""

from .gradcheck import grad_check, grad_check_params
from .optim import Adam, adam_step, glorot, zeros
from .tensor import (
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    cosine_matrix,
    exp,
    grad,
    is_grad_enabled,
    matmul,
    mean,
    mse,
    mul,
    no_grad,
    relu,
    reshape,
    sigmoid,
    softmax,
    stack,
    sub,
    sum,
    take,
    tanh,
    transpose,
)

__all__ = [
    "Adam", "Tensor", "adam_step", "add", "as_tensor", "backward", "concat", "cosine_matrix",
    "exp", "glorot", "grad", "grad_check", "grad_check_params", "is_grad_enabled", "matmul",
    "mean", "mse", "mul", "no_grad", "relu", "reshape", "sigmoid", "softmax", "stack", "sub",
    "sum", "take", "tanh", "transpose", "zeros",
]
