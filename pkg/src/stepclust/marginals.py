"""Closed-form log-marginal quantities for the change-point mixture.

Everything here exploits the fact that the Gram matrix of the segment
indicator design is diagonal with the segment point counts on the diagonal,
so determinants and projections reduce to per-segment arithmetic on prefix
sums.  All quantities are computed and combined in natural-log space.

The quantities:
- log_marginal_layout: one sequence, one layout, segment levels AND the
  noise variance integrated out against the variance prior.
- log_weight_existing: seat weight for joining an existing cluster (variance
  integrated out, profile fixed).
- log_weight_new: seat weight for opening a new cluster (sum over every
  admissible layout, weighted by the segmentation prior); also returns the
  per-layout table from which the new cluster's profile is drawn.
- log_group_marginal: all member sequences of one cluster, segment levels
  integrated out at fixed per-sequence variances.
- log_layout_weight: log_group_marginal plus the spare-length prior mass,
  the per-composition weight used when refreshing a cluster's layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .model import ClusterProfile, Hyperparameters, SegmentLayout
from .combinatorics import (
    compositions,
    count_compositions,
    layout_from_lengths,
    max_changepoints,
    multinomial_logcoef,
    multinomial_logcoef_rows,
    spare_total,
    trunc_poisson_logpmf_all,
)
from .utils import sample_categorical_logits

LOG_2PI = math.log(2.0 * math.pi)


# --- layout geometry tables ---------------------------------------------------

@dataclass(frozen=True)
class LayoutTable:
    """Vectorized geometry for a set of spare-length vectors at one k.

    Rows are compositions (colex order when exhaustive); columns are the
    k+1 segments.  starts0/ends0 are 0-based [start, end) bounds usable as
    gather indices into per-sequence prefix sums.
    """

    n_loc: int
    w: int
    k: int
    comps: np.ndarray    # (n, k+1) spare lengths
    counts: np.ndarray   # (n, k+1) segment point counts
    starts0: np.ndarray  # (n, k+1)
    ends0: np.ndarray    # (n, k+1)
    logdet: np.ndarray   # (n,) sum of log counts
    logmn: np.ndarray    # (n,) multinomial log coefficient
    exhaustive: bool

    @property
    def n_rows(self) -> int:
        return self.comps.shape[0]

    def segment_sums(self, prefix: np.ndarray) -> np.ndarray:
        """Per-segment sums for each composition row.

        prefix is a length-(M+1) prefix-sum vector (one sequence) or a
        (N, M+1) matrix; the result has the composition axis second-to-last.
        """
        if prefix.ndim == 1:
            return prefix[self.ends0] - prefix[self.starts0]
        return prefix[:, self.ends0] - prefix[:, self.starts0]


def _geometry(comps: np.ndarray, w: int, n_loc: int, exhaustive: bool
              ) -> LayoutTable:
    comps = np.asarray(comps, dtype=np.int64)
    k = comps.shape[1] - 1
    cum = np.cumsum(comps + w, axis=1)  # tau_l - 1 for l = 1..k+1
    starts0 = np.concatenate(
        [np.zeros((comps.shape[0], 1), dtype=np.int64), cum[:, :-1]], axis=1)
    ends0 = cum.copy()
    ends0[:, -1] = n_loc  # last segment closed
    counts = comps + w
    counts[:, -1] += 1
    return LayoutTable(
        n_loc=n_loc, w=w, k=k, comps=comps, counts=counts,
        starts0=starts0, ends0=ends0,
        logdet=np.log(counts).sum(axis=1),
        logmn=multinomial_logcoef_rows(comps),
        exhaustive=exhaustive,
    )


@lru_cache(maxsize=256)
def layout_table(n_loc: int, w: int, k: int) -> LayoutTable:
    """Exhaustive colex-ordered geometry table for all layouts at one k."""
    m0 = spare_total(n_loc, w, k)
    if m0 <= 0:
        raise ValueError(f"k={k} inadmissible for n_loc={n_loc}, w={w}")
    comps, _ = compositions(m0, k + 1, budget=count_compositions(m0, k + 1))
    return _geometry(comps, w, n_loc, exhaustive=True)


def table_for_budget(n_loc: int, w: int, k: int, budget: int,
                     rng: Optional[np.random.Generator] = None,
                     force_include=None) -> LayoutTable:
    """Geometry table at one k, subsampled when the support exceeds budget.

    force_include (a spare-length vector) is guaranteed a row in the sampled
    case, so a sampler never loses the support of its current state.
    """
    m0 = spare_total(n_loc, w, k)
    if count_compositions(m0, k + 1) <= budget:
        return layout_table(n_loc, w, k)
    comps, _ = compositions(m0, k + 1, budget, rng)
    if force_include is not None:
        forced = np.asarray(force_include, dtype=np.int64)
        if not (comps == forced).all(axis=1).any():
            comps = comps.copy()
            comps[-1] = forced
            comps = comps[np.lexsort(comps.T)]  # restore colex order
    return _geometry(comps, w, n_loc, exhaustive=False)


# --- scalar building blocks ---------------------------------------------------

def _prefix_sums(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c1 = np.concatenate(([0.0], np.cumsum(y)))
    c2 = np.concatenate(([0.0], np.cumsum(y * y)))
    return c1, c2


def projection_residual(y, layout: SegmentLayout) -> float:
    """y'y minus the squared norm of y's projection onto segment means."""
    y = np.asarray(y, dtype=float)
    starts, ends = layout.segment_bounds0()
    c1, c2 = _prefix_sums(y)
    sums = c1[ends] - c1[starts]
    resid = float(c2[-1] - (sums * sums / layout.segment_counts()).sum())
    return max(resid, 0.0)


def log_marginal_layout(y, layout: SegmentLayout, hyper: Hyperparameters
                        ) -> float:
    """Log marginal of one sequence under one layout.

    Segment levels are integrated against their flat prior and the noise
    variance against its inverse-gamma prior; only the layout remains.
    """
    y = np.asarray(y, dtype=float)
    n_loc, k = layout.n_loc, layout.k
    a, b = hyper.a_sigma, hyper.b_sigma
    resid = projection_residual(y, layout)
    scale = resid / 2.0 + 1.0 / b
    if scale <= 0:
        raise ValueError("nonpositive posterior scale")
    half = (n_loc - k - 1) / 2.0
    logdet = float(np.log(layout.segment_counts()).sum())
    return (-half * LOG_2PI - 0.5 * logdet - a * math.log(b) - gammaln(a)
            + gammaln(half + a) - (half + a) * math.log(scale))


def log_marginal_layout_fixed_sigma(y, layout: SegmentLayout,
                                    sigma2: float) -> float:
    """Like log_marginal_layout but conditioning on a known noise variance.

    Only the segment levels are integrated out.  Used by the fixed-variance
    sampler mode that the exact partition oracle validates.
    """
    y = np.asarray(y, dtype=float)
    n_loc, k = layout.n_loc, layout.k
    resid = projection_residual(y, layout)
    half = (n_loc - k - 1) / 2.0
    logdet = float(np.log(layout.segment_counts()).sum())
    return (-half * (LOG_2PI + math.log(sigma2)) - 0.5 * logdet
            - resid / (2.0 * sigma2))


def log_weight_existing(y, profile: ClusterProfile, hyper: Hyperparameters,
                        cluster_size: int) -> float:
    """Seat weight for joining an existing cluster with the given profile.

    cluster_size is the number of CURRENT members (the candidate excluded).
    The common normalizing denominator of the seat probabilities is dropped
    here and in log_weight_new alike; only ratios matter.
    """
    if cluster_size < 1:
        raise ValueError("cluster_size must be at least 1")
    y = np.asarray(y, dtype=float)
    n_loc = profile.layout.n_loc
    a, b = hyper.a_sigma, hyper.b_sigma
    from .model import residual_ss
    rss = residual_ss(y, profile.layout, profile.levels)
    return (math.log(cluster_size) + gammaln(n_loc / 2.0 + a)
            - a * math.log(b) - (n_loc / 2.0) * LOG_2PI - gammaln(a)
            - (n_loc / 2.0 + a) * math.log(rss / 2.0 + 1.0 / b))


# --- new-cluster weight and its sampling table --------------------------------

@dataclass(frozen=True)
class NewClusterTable:
    """Per-(k, composition) log joint weights for a single observation.

    entries[k] = (LayoutTable, log weights including the segmentation prior);
    exactly the table summed by log_weight_new, kept so the new cluster's
    profile can be drawn without recomputation.
    """

    n_loc: int
    w: int
    entries: tuple[tuple[LayoutTable, np.ndarray], ...]

    def log_total(self) -> float:
        return float(logsumexp(np.concatenate([lw for _, lw in self.entries])))


def _layout_log_marginals(y: np.ndarray, tbl: LayoutTable,
                          hyper: Hyperparameters,
                          fixed_sigma2: Optional[float]) -> np.ndarray:
    """Vector of log_marginal_layout over every row of a geometry table."""
    c1, c2 = _prefix_sums(y)
    sums = tbl.segment_sums(c1)
    resid = c2[-1] - (sums * sums / tbl.counts).sum(axis=1)
    np.maximum(resid, 0.0, out=resid)
    half = (tbl.n_loc - tbl.k - 1) / 2.0
    if fixed_sigma2 is not None:
        return (-half * (LOG_2PI + math.log(fixed_sigma2)) - 0.5 * tbl.logdet
                - resid / (2.0 * fixed_sigma2))
    a, b = hyper.a_sigma, hyper.b_sigma
    return (-half * LOG_2PI - 0.5 * tbl.logdet - a * math.log(b) - gammaln(a)
            + gammaln(half + a) - (half + a) * np.log(resid / 2.0 + 1.0 / b))


def log_weight_new(y, hyper: Hyperparameters, lam: float, alpha0: float,
                   rng: Optional[np.random.Generator] = None,
                   fixed_sigma2: Optional[float] = None
                   ) -> tuple[float, NewClusterTable]:
    """Seat weight for opening a new cluster, plus the sampling table.

    Sums exp(layout marginal + spare-length prior + change-point-count prior)
    over every admissible layout (subsampled beyond the composition budget,
    which is when the rng is consumed), scaled by the mixture precision
    alpha0.  The same dropped-denominator convention as log_weight_existing.
    """
    y = np.asarray(y, dtype=float)
    n_loc = y.shape[0]
    k_star = max_changepoints(n_loc, hyper.w, hyper.k_max_override)
    log_tp = trunc_poisson_logpmf_all(lam, k_star)
    entries = []
    for k in range(k_star + 1):
        tbl = table_for_budget(n_loc, hyper.w, k, hyper.composition_budget, rng)
        log_h = _layout_log_marginals(y, tbl, hyper, fixed_sigma2)
        entries.append((tbl, log_h + tbl.logmn + log_tp[k]))
    table = NewClusterTable(n_loc=n_loc, w=hyper.w, entries=tuple(entries))
    if alpha0 <= 0:
        raise ValueError("alpha0 must be strictly positive")
    return math.log(alpha0) + table.log_total(), table


def sample_new_profile(y, hyper: Hyperparameters, sigma2_n: float,
                       table: NewClusterTable,
                       rng: np.random.Generator) -> ClusterProfile:
    """Draw the profile of a newly born cluster.

    Two-stage draw over the cached table (number of change points first,
    then the composition), then segment levels from their normal full
    conditional given the observation's current variance.
    """
    y = np.asarray(y, dtype=float)
    per_k = np.array([logsumexp(lw) if lw.size else -np.inf
                      for _, lw in table.entries])
    k = sample_categorical_logits(per_k, rng)
    tbl, log_w = table.entries[k]
    row = sample_categorical_logits(log_w, rng)
    layout = layout_from_lengths(tbl.comps[row], table.w, table.n_loc)
    c1, _ = _prefix_sums(y)
    sums = c1[tbl.ends0[row]] - c1[tbl.starts0[row]]
    counts = tbl.counts[row]
    levels = rng.normal(sums / counts, np.sqrt(sigma2_n / counts))
    return ClusterProfile(layout=layout, levels=tuple(float(v) for v in levels))


# --- cluster-level (group) marginals ------------------------------------------

def log_group_marginal(group_y, group_sigma2, layout: SegmentLayout) -> float:
    """Log joint density of a cluster's members with segment levels
    integrated out, at fixed per-sequence variances.

    The per-member data terms are each member's projection residual onto the
    layout's segment means, precision-weighted; the level integral
    contributes the half-log-determinant and total-precision terms.
    """
    ys = np.atleast_2d(np.asarray(group_y, dtype=float))
    sig2 = np.asarray(group_sigma2, dtype=float)
    if ys.shape[0] != sig2.shape[0]:
        raise ValueError("one variance per member sequence required")
    if np.any(sig2 <= 0):
        raise ValueError("variances must be strictly positive")
    n_r, n_loc = ys.shape
    if n_loc != layout.n_loc:
        raise ValueError("sequence length does not match layout")
    k = layout.k
    prec = 1.0 / sig2
    resid = np.array([projection_residual(row, layout) for row in ys])
    logdet = float(np.log(layout.segment_counts()).sum())
    return float(
        -((n_r * n_loc - k - 1) / 2.0) * LOG_2PI
        - (n_loc / 2.0) * np.log(sig2).sum()
        - 0.5 * (prec * resid).sum()
        - ((k + 1) / 2.0) * math.log(prec.sum())
        - 0.5 * logdet
    )


def log_layout_weight(group_y, group_sigma2, composition, w: int) -> float:
    """Unnormalized per-composition log weight for refreshing a cluster's
    layout: the group marginal plus the spare-length prior mass."""
    comp = tuple(int(c) for c in composition)
    ys = np.atleast_2d(np.asarray(group_y, dtype=float))
    layout = layout_from_lengths(comp, w, ys.shape[1])
    return log_group_marginal(ys, group_sigma2, layout) \
        + multinomial_logcoef(comp)
