"""Segmentation prior machinery.

The prior over a cluster's segmentation factors as a truncated Poisson on the
number of change points k, then a symmetric multinomial over the spare length
vector (m_1, ..., m_{k+1}) summing to m0 = M - 1 - (k+1) w.  This module owns
that prior: the admissible-k bound, the truncated-Poisson pmf, weak-composition
enumeration / budgeted subsampling, the multinomial coefficient, and the
conversion between spare lengths and change-point positions.

Compositions are always produced in colexicographic order (ranked by the last
part first), so every run enumerates the same support in the same order.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy.special import gammaln, logsumexp

from .model import SegmentLayout, make_layout

# beyond this support size, uniform without-replacement rank sampling is
# abandoned for i.i.d. symmetric-multinomial draws (dedup'd)
_WITHOUT_REPLACEMENT_CAP = 2 ** 62


def max_changepoints(n_loc: int, w: int, override: Optional[int] = None) -> int:
    """Largest admissible number of change points k*.

    k* = max{k : n_loc - 1 - (k+1) w > 0}, optionally capped by `override`.
    The bound is strict: when (n_loc-1) is an exact multiple of w the spare
    mass at the closed-form k would be zero, which is inadmissible.
    """
    if n_loc - 1 - w <= 0:
        raise ValueError(
            f"no admissible layout: n_loc={n_loc} too small for w={w}")
    k_star = (n_loc - 2 - w) // w
    if override is not None:
        k_star = min(k_star, int(override))
    return k_star


def spare_total(n_loc: int, w: int, k: int) -> int:
    """Total spare mass m0 = n_loc - 1 - (k+1) w available at a given k."""
    return n_loc - 1 - (k + 1) * w


def trunc_poisson_logpmf(k: int, lam: float, k_star: int) -> float:
    """log P(K = k) under Poisson(lam) truncated to {0, ..., k_star}."""
    if lam <= 0:
        raise ValueError("lam must be strictly positive")
    if not 0 <= k <= k_star:
        raise ValueError(f"k={k} outside truncation range [0, {k_star}]")
    ls = np.arange(k_star + 1)
    log_weights = ls * math.log(lam) - gammaln(ls + 1)
    return float(k * math.log(lam) - gammaln(k + 1) - logsumexp(log_weights))


def trunc_poisson_logpmf_all(lam: float, k_star: int) -> np.ndarray:
    """log pmf vector over {0, ..., k_star}; one normalizer evaluation."""
    if lam <= 0:
        raise ValueError("lam must be strictly positive")
    ls = np.arange(k_star + 1)
    log_weights = ls * math.log(lam) - gammaln(ls + 1)
    return log_weights - logsumexp(log_weights)


def count_compositions(m0: int, parts: int) -> int:
    """Number of weak compositions of m0 into `parts` ordered cells."""
    return math.comb(m0 + parts - 1, parts - 1)


def _enumerate_colex(m0: int, parts: int) -> np.ndarray:
    """All weak compositions in colexicographic order, shape (count, parts)."""
    if parts == 1:
        return np.array([[m0]], dtype=np.int64)
    blocks = []
    for last in range(m0 + 1):
        head = _enumerate_colex(m0 - last, parts - 1)
        block = np.empty((head.shape[0], parts), dtype=np.int64)
        block[:, :-1] = head
        block[:, -1] = last
        blocks.append(block)
    return np.concatenate(blocks, axis=0)


def unrank_composition(rank: int, m0: int, parts: int) -> tuple[int, ...]:
    """Composition at a given colex rank (inverse of the enumeration order)."""
    if not 0 <= rank < count_compositions(m0, parts):
        raise ValueError("rank out of range")
    out = []
    rest, r = m0, rank
    for cell in range(parts, 1, -1):
        # compositions sharing a given last part occupy a contiguous block
        last = 0
        while True:
            block = count_compositions(rest - last, cell - 1)
            if r < block:
                break
            r -= block
            last += 1
        out.append(last)
        rest -= last
    out.append(rest)
    # parts were peeled off most-significant (last) first
    return tuple(reversed(out))


def compositions(m0: int, parts: int, budget: int,
                 rng: Optional[np.random.Generator] = None
                 ) -> tuple[np.ndarray, bool]:
    """Weak compositions of m0 into `parts` cells, exhaustively or sampled.

    Returns (array of shape (n, parts), exhaustive_flag).  When the support
    size exceeds `budget`, `budget` distinct compositions are drawn uniformly
    without replacement (via colex rank sampling) and returned in colex
    order; astronomically large supports fall back to i.i.d. draws from the
    symmetric multinomial, deduplicated.  Deterministic given the rng state.
    """
    if m0 < 0 or parts < 1:
        raise ValueError("need m0 >= 0 and parts >= 1")
    total = count_compositions(m0, parts)
    if total <= budget:
        return _enumerate_colex(m0, parts), True
    if rng is None:
        raise ValueError("rng required when the support exceeds the budget")
    if total <= _WITHOUT_REPLACEMENT_CAP:
        chosen: list[int] = []
        seen: set[int] = set()
        while len(chosen) < budget:
            r = int(rng.integers(0, total))
            if r not in seen:
                seen.add(r)
                chosen.append(r)
        chosen.sort()
        comps = np.array([unrank_composition(r, m0, parts) for r in chosen],
                         dtype=np.int64)
        return comps, False
    # support too large for exact rank arithmetic to be worth it
    draws = rng.multinomial(m0, np.full(parts, 1.0 / parts), size=budget)
    uniq: list[tuple[int, ...]] = []
    seen_t: set[tuple[int, ...]] = set()
    for row in draws:
        t = tuple(int(x) for x in row)
        if t not in seen_t:
            seen_t.add(t)
            uniq.append(t)
    uniq.sort(key=lambda t: t[::-1])  # colex
    return np.array(uniq, dtype=np.int64), False


def multinomial_logcoef(m) -> float:
    """log of the symmetric-multinomial pmf of one spare-length vector.

    For m = (m_1, ..., m_{k+1}) with m0 = sum(m):
    log[ m0! / prod(m_l!) * (1/(k+1))^m0 ].
    """
    m = np.asarray(m, dtype=np.int64)
    if np.any(m < 0):
        raise ValueError("spare lengths must be nonnegative")
    m0 = int(m.sum())
    parts = m.shape[-1]
    return float(gammaln(m0 + 1) - gammaln(m + 1).sum()
                 - m0 * math.log(parts))


def multinomial_logcoef_rows(comps: np.ndarray) -> np.ndarray:
    """Row-wise multinomial_logcoef for a (n, parts) composition matrix."""
    comps = np.asarray(comps, dtype=np.int64)
    m0 = comps.sum(axis=1)
    parts = comps.shape[1]
    return (gammaln(m0 + 1) - gammaln(comps + 1).sum(axis=1)
            - m0 * math.log(parts))


def layout_from_lengths(m, w: int, n_loc: int) -> SegmentLayout:
    """Build the layout whose spare lengths are m, via the tau recursion."""
    m = tuple(int(x) for x in m)
    k = len(m) - 1
    if sum(m) != spare_total(n_loc, w, k):
        raise ValueError(
            f"spare lengths sum to {sum(m)}, expected {spare_total(n_loc, w, k)}")
    tau = [1]
    for ml in m:
        tau.append(tau[-1] + ml + w)
    if tau[-1] != n_loc:
        raise ValueError("tau recursion did not land on n_loc")
    return make_layout(k=k, tau=tau, m=m, w=w, n_loc=n_loc)


def lengths_from_layout(layout: SegmentLayout) -> tuple[int, ...]:
    """Spare lengths of a layout (inverse of layout_from_lengths)."""
    return layout.m
