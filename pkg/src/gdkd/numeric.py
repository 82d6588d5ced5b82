"""Numerically stable probability primitives.

Everything downstream (partition decomposition, the loss family, the
analytic gradients) is built on the four functions here: temperature
softmax, log-softmax, softmax renormalized over an index subset, and
KL divergence.  All computation is 64-bit and uses max-subtraction /
log-sum-exp so that results stay finite for any finite logits.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "as_logit_vector",
    "as_prob_vector",
    "check_temperature",
    "softmax",
    "log_softmax",
    "subset_softmax",
    "subset_log_softmax",
    "kl_divergence",
]

# Sum tolerance accepted when validating an externally supplied
# probability vector.
_PROB_SUM_TOL = 1e-7


def as_logit_vector(z, name: str = "logits") -> np.ndarray:
    """Validate and coerce a raw logit vector to a float64 1-D array.

    Requires at least two classes and all entries finite.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {z.shape}")
    if z.size < 2:
        raise ValueError(f"{name} needs at least 2 classes, got {z.size}")
    if not np.isfinite(z).all():
        raise ValueError(f"{name} contains non-finite entries")
    return z


def as_prob_vector(p, name: str = "probabilities") -> np.ndarray:
    """Validate a probability vector: entries in [0, 1], summing to 1."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {p.shape}")
    if p.size < 1:
        raise ValueError(f"{name} is empty")
    if not np.isfinite(p).all():
        raise ValueError(f"{name} contains non-finite entries")
    if p.min() < -1e-12 or p.max() > 1.0 + 1e-12:
        raise ValueError(f"{name} has entries outside [0, 1]")
    if abs(float(p.sum()) - 1.0) > _PROB_SUM_TOL:
        raise ValueError(f"{name} sums to {p.sum()!r}, expected 1")
    return p


def check_temperature(temperature) -> float:
    """Validate a softmax temperature; must be a finite positive real."""
    t = float(temperature)
    if not math.isfinite(t) or t <= 0.0:
        raise ValueError(f"temperature must be a finite positive real, got {temperature!r}")
    return t


def log_softmax(z, temperature: float = 1.0) -> np.ndarray:
    """log p_i = z_i/T - logsumexp(z/T), computed with max-subtraction."""
    z = as_logit_vector(z)
    t = check_temperature(temperature)
    s = z / t
    s -= s.max()
    return s - math.log(float(np.exp(s).sum()))


def softmax(z, temperature: float = 1.0) -> np.ndarray:
    """p_i = exp(z_i/T) / sum_j exp(z_j/T).

    Computed as exp(log_softmax) so that `softmax` and `log_softmax`
    are consistent to the last bit.
    """
    return np.exp(log_softmax(z, temperature))


def _check_subset(indices, n_classes: int) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64).ravel()
    if idx.size == 0:
        raise ValueError("index subset is empty")
    if idx.min() < 0 or idx.max() >= n_classes:
        raise ValueError(f"index subset out of range for {n_classes} classes")
    if np.unique(idx).size != idx.size:
        raise ValueError("index subset contains duplicates")
    return idx


def subset_log_softmax(z, indices, temperature: float = 1.0) -> np.ndarray:
    """Log of the softmax renormalized over `indices` only.

    Output order follows the order of `indices`.
    """
    z = as_logit_vector(z)
    t = check_temperature(temperature)
    idx = _check_subset(indices, z.size)
    s = z[idx] / t
    s -= s.max()
    return s - math.log(float(np.exp(s).sum()))


def subset_softmax(z, indices, temperature: float = 1.0) -> np.ndarray:
    """Softmax restricted to `indices`: exp(z_i/T) / sum_{j in S} exp(z_j/T)."""
    return np.exp(subset_log_softmax(z, indices, temperature))


def kl_divergence(p, q) -> float:
    """KL(p || q) = sum_i p_i * log(p_i / q_i), natural log.

    Uses the continuity convention 0 * log(0/q) = 0.  If some p_i > 0
    has q_i == 0 the divergence is infinite and +inf is returned (never
    NaN).  Rounding can produce a tiny negative sum for p ~ q; the
    result is clamped at 0 so the Gibbs inequality holds exactly.
    """
    p = as_prob_vector(p, "p")
    q = as_prob_vector(q, "q")
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: p has {p.shape}, q has {q.shape}")
    support = p > 0.0
    if np.any(q[support] == 0.0):
        return math.inf
    ps = p[support]
    return max(0.0, float(np.dot(ps, np.log(ps / q[support]))))
