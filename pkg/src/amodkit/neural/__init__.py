"""Autodiff engine, layers, Dirichlet machinery, Adam, and checkpoints."""

from .tensor import (OP_NAMES, Tensor, add, backward, clip_global_norm, concat,
                     digamma, exp, lgamma, log, matmul, mul, neg, parameter,
                     relu, reshape, sigmoid, slice_cols, softplus, sub, tanh,
                     tensor, tensor_sum, zero_grads)
from .layers import Affine, GruCell
from .dist import (dirichlet_entropy, dirichlet_log_prob, dirichlet_mean,
                   dirichlet_sample, dirichlet_variance)
from .optim import Adam, AdamState, adam_update
from .checkpoint import CheckpointError, load_checkpoint, load_into, save_checkpoint

__all__ = [
    "OP_NAMES", "Tensor", "add", "backward", "clip_global_norm", "concat",
    "digamma", "exp", "lgamma", "log", "matmul", "mul", "neg", "parameter",
    "relu", "reshape", "sigmoid", "slice_cols", "softplus", "sub", "tanh",
    "tensor", "tensor_sum", "zero_grads",
    "Affine", "GruCell",
    "dirichlet_entropy", "dirichlet_log_prob", "dirichlet_mean",
    "dirichlet_sample", "dirichlet_variance",
    "Adam", "AdamState", "adam_update",
    "CheckpointError", "load_checkpoint", "load_into", "save_checkpoint",
]
