"""Dirichlet sampling, log-density and entropy for the policy head."""

from __future__ import annotations

import numpy as np
from scipy import special as _sp

from .tensor import Tensor, add, digamma, lgamma, mul, neg, sub, tensor, tensor_sum

__all__ = [
    "dirichlet_entropy",
    "dirichlet_log_prob",
    "dirichlet_mean",
    "dirichlet_sample",
    "dirichlet_variance",
]

_SIMPLEX_EPS = 1e-9


def dirichlet_sample(alpha: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one point on the simplex: independent Gamma(alpha_i, 1) draws,
    normalized. The generator's gamma sampler is the Marsaglia-Tsang
    squeeze method with the shape<1 boost, i.e. the exact distribution.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.min() <= 0 or not np.all(np.isfinite(alpha)):
        raise ValueError("Dirichlet concentrations must be positive and finite")
    g = rng.standard_gamma(alpha)
    total = g.sum()
    if total <= 0.0:   # all components underflowed; only possible for tiny alpha
        return np.full(alpha.shape, 1.0 / alpha.size)
    a = g / total
    a[np.argmax(a)] += 1.0 - a.sum()
    return a


def _clamp_simplex(a: np.ndarray) -> np.ndarray:
    a = np.clip(np.asarray(a, dtype=np.float64), _SIMPLEX_EPS, 1.0 - _SIMPLEX_EPS)
    return a / a.sum()


def dirichlet_log_prob(alpha: Tensor | np.ndarray, a: np.ndarray) -> Tensor:
    """Log density at simplex point `a`, differentiable in the concentration.

    `a` is clamped to [1e-9, 1 - 1e-9] and renormalized before evaluating,
    so boundary samples stay finite.
    """
    if not isinstance(alpha, Tensor):
        alpha = tensor(alpha)
    if np.any(alpha.values <= 0):
        raise ValueError("Dirichlet concentrations must be positive")
    a = _clamp_simplex(a)
    if a.shape != alpha.values.shape:
        raise ValueError(f"point shape {a.shape} != concentration shape {alpha.values.shape}")
    log_a = tensor(np.log(a))
    one = tensor(np.ones_like(a))
    data_term = tensor_sum(mul(sub(alpha, one), log_a))
    normalizer = sub(lgamma(tensor_sum(alpha)), tensor_sum(lgamma(alpha)))
    return add(data_term, normalizer)


def dirichlet_entropy(alpha: Tensor) -> Tensor:
    """Differentiable entropy of a Dirichlet distribution."""
    k = alpha.values.size
    total = tensor_sum(alpha)
    log_beta = sub(tensor_sum(lgamma(alpha)), lgamma(total))
    tail = mul(sub(total, tensor(float(k))), digamma(total))
    data = tensor_sum(mul(sub(alpha, tensor(np.ones(k))), digamma(alpha)))
    return add(log_beta, sub(tail, data))


def dirichlet_mean(alpha: np.ndarray) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    return alpha / alpha.sum()


def dirichlet_variance(alpha: np.ndarray) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    s = alpha.sum()
    return alpha * (s - alpha) / (s * s * (s + 1.0))
