from .checkpoint import load as load_checkpoint
from .checkpoint import save_binary, save_json
from .gradcheck import GradCheckReport, grad_check, inject_wrong_gradient
from .optim import AdamState, adam_step
from .rng import Rng
from .tensor import (
    Tensor,
    absolute,
    add,
    apply_op,
    concat,
    constant,
    elementwise,
    exp,
    getitem,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    sigmoid,
    softmax,
    softmax_over_axis,
    stack,
    sub,
    tanh,
    tensor,
    transpose,
    tsum,
    zero_grad,
)

__all__ = [
    "AdamState", "GradCheckReport", "Rng", "Tensor", "absolute", "adam_step", "add", "apply_op",
    "concat", "constant", "elementwise", "exp", "getitem", "grad_check", "inject_wrong_gradient",
    "load_checkpoint", "matmul", "mean", "mul", "relu", "reshape", "save_binary", "save_json",
    "sigmoid", "softmax", "softmax_over_axis", "stack", "sub", "tanh", "tensor", "transpose",
    "tsum", "zero_grad",
]
