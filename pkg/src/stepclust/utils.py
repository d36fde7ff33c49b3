"""Numerically stable sampling helpers shared by the sampler and the tests."""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp


def log_normalize(log_w: np.ndarray) -> np.ndarray:
    """Probabilities from unnormalized log weights via the log-sum-exp trick."""
    log_w = np.asarray(log_w, dtype=float)
    finite = np.isfinite(log_w)
    if not finite.any():
        raise ValueError("all log weights are -inf")
    p = np.exp(log_w - logsumexp(log_w[finite]))
    p[~finite] = 0.0
    s = p.sum()
    if not np.isfinite(s) or s <= 0:
        raise ValueError("log weights do not normalize")
    return p / s


def sample_categorical(p: np.ndarray, rng: np.random.Generator) -> int:
    """Draw an index from a probability vector by CDF inversion.

    One uniform per draw, fixed inversion rule: smallest index whose
    cumulative probability strictly exceeds u.
    """
    cdf = np.cumsum(p)
    u = rng.random() * cdf[-1]
    idx = int(np.searchsorted(cdf, u, side="right"))
    return min(idx, len(p) - 1)


def sample_categorical_logits(log_w: np.ndarray, rng: np.random.Generator) -> int:
    """Draw an index from unnormalized log weights."""
    return sample_categorical(log_normalize(log_w), rng)


def batch_means_se(x: np.ndarray, n_batches: int = 30) -> float:
    """Standard error of the mean of a correlated sequence via batch means."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 2 * n_batches:
        n_batches = max(2, n // 2)
    size = n // n_batches
    means = x[: n_batches * size].reshape(n_batches, size).mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(n_batches))
