"""Affine maps and the GRU cell used by the recurrent graph policies."""

from __future__ import annotations

import numpy as np

from .tensor import (Tensor, add, concat, matmul, mul, parameter, relu,
                     sigmoid, slice_cols, sub, tanh, tensor)

__all__ = ["Affine", "GruCell"]


def _uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Affine:
    """y = x @ W + b with uniform(-1/sqrt(fan_in)) initialization."""

    def __init__(self, rng: np.random.Generator, in_dim: int, out_dim: int):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.weight = parameter(_uniform_init(rng, in_dim, (in_dim, out_dim)))
        self.bias = parameter(_uniform_init(rng, in_dim, (out_dim,)))

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.weight), self.bias)

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


class GruCell:
    """Gated recurrent unit applied row-wise to a (batch, dim) input.

    Gates are fused into two matmuls (input side and hidden side); the
    reset gate multiplies the hidden-side candidate pre-activation:

        z = sigmoid(x Wz + h Uz + bz)
        r = sigmoid(x Wr + h Ur + br)
        n = tanh(x Wn + r * (h Un) + bn)
        h' = (1 - z) * n + z * h

    Parameter count is 3 * (in + hidden + 1) * hidden. With all-zero
    parameters, h' = 0.5 * h (half-open update gate, zero candidate).
    """

    def __init__(self, rng: np.random.Generator, input_size: int, hidden_size: int = 256):
        self.input_size, self.hidden_size = input_size, hidden_size
        self.w_input = parameter(_uniform_init(rng, input_size, (input_size, 3 * hidden_size)))
        self.w_hidden = parameter(_uniform_init(rng, hidden_size, (hidden_size, 3 * hidden_size)))
        self.bias = parameter(_uniform_init(rng, input_size, (3 * hidden_size,)))

    def parameters(self) -> list[Tensor]:
        return [self.w_input, self.w_hidden, self.bias]

    @property
    def parameter_count(self) -> int:
        return 3 * (self.input_size + self.hidden_size + 1) * self.hidden_size

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        hs = self.hidden_size
        xs = add(matmul(x, self.w_input), self.bias)
        hh = matmul(h, self.w_hidden)
        z = sigmoid(add(slice_cols(xs, 0, hs), slice_cols(hh, 0, hs)))
        r = sigmoid(add(slice_cols(xs, hs, 2 * hs), slice_cols(hh, hs, 2 * hs)))
        n = tanh(add(slice_cols(xs, 2 * hs, 3 * hs),
                     mul(r, slice_cols(hh, 2 * hs, 3 * hs))))
        one = tensor(np.ones((1, hs)))
        return add(mul(sub(one, z), n), mul(z, h))
