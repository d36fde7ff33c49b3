"""Brute-force reference implementations for tiny instances.

Everything here recomputes model quantities from an explicitly materialized
segment-indicator design matrix with dense linear algebra (solve/slogdet),
never the diagonal shortcuts of the marginals module, so a bug in the fast
path cannot confirm itself.  Enumeration-based posterior tables over
segmentations and set partitions provide the targets for the sampler's
total-variation tests.  All instances are size-guarded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np
from scipy.special import gammaln, logsumexp

from .combinatorics import (
    compositions,
    count_compositions,
    layout_from_lengths,
    max_changepoints,
    multinomial_logcoef,
    spare_total,
    trunc_poisson_logpmf_all,
)
from .model import Hyperparameters, SegmentLayout

_MAX_SEG_LOCATIONS = 14
_MAX_PARTITION_SEQ = 4
_MAX_PARTITION_LOCATIONS = 12

LOG_2PI = math.log(2.0 * math.pi)

LayoutKey = Tuple[int, Tuple[int, ...]]  # (k, interior change points)


def design_matrix(layout: SegmentLayout) -> np.ndarray:
    """Explicit 0/1 segment-membership design matrix, one column per segment."""
    x = np.zeros((layout.n_loc, layout.k + 1))
    starts, ends = layout.segment_bounds0()
    for col, (s, e) in enumerate(zip(starts, ends)):
        x[s:e, col] = 1.0
    return x


def dense_residual_ss(y, layout: SegmentLayout, levels) -> float:
    x = design_matrix(layout)
    r = np.asarray(y, dtype=float) - x @ np.asarray(levels, dtype=float)
    return float(r @ r)


def _dense_projection_residual(y: np.ndarray, x: np.ndarray
                               ) -> Tuple[float, float]:
    """(residual sum of squares after projection, log|X'X|) via dense algebra."""
    gram = x.T @ x
    sign, logdet = np.linalg.slogdet(gram)
    if sign <= 0:
        raise np.linalg.LinAlgError("singular segment design")
    z = x.T @ y
    resid = float(y @ y - z @ np.linalg.solve(gram, z))
    return max(resid, 0.0), float(logdet)


def dense_log_marginal_layout(y, layout: SegmentLayout,
                              hyper: Hyperparameters) -> float:
    """Dense-path twin of marginals.log_marginal_layout."""
    y = np.asarray(y, dtype=float)
    a, b = hyper.a_sigma, hyper.b_sigma
    resid, logdet = _dense_projection_residual(y, design_matrix(layout))
    half = (layout.n_loc - layout.k - 1) / 2.0
    return (-half * LOG_2PI - 0.5 * logdet - a * math.log(b) - gammaln(a)
            + gammaln(half + a) - (half + a) * math.log(resid / 2.0 + 1.0 / b))


def dense_log_marginal_layout_fixed_sigma(y, layout: SegmentLayout,
                                          sigma2: float) -> float:
    y = np.asarray(y, dtype=float)
    resid, logdet = _dense_projection_residual(y, design_matrix(layout))
    half = (layout.n_loc - layout.k - 1) / 2.0
    return (-half * (LOG_2PI + math.log(sigma2)) - 0.5 * logdet
            - resid / (2.0 * sigma2))


def dense_log_group_marginal(group_y, group_sigma2,
                             layout: SegmentLayout) -> float:
    """Dense-path twin of marginals.log_group_marginal."""
    ys = np.atleast_2d(np.asarray(group_y, dtype=float))
    sig2 = np.asarray(group_sigma2, dtype=float)
    n_r, n_loc = ys.shape
    x = design_matrix(layout)
    prec = 1.0 / sig2
    resid = np.empty(n_r)
    logdet = 0.0
    for i, row in enumerate(ys):
        resid[i], logdet = _dense_projection_residual(row, x)
    k = layout.k
    return float(
        -((n_r * n_loc - k - 1) / 2.0) * LOG_2PI
        - (n_loc / 2.0) * np.log(sig2).sum()
        - 0.5 * (prec * resid).sum()
        - ((k + 1) / 2.0) * math.log(prec.sum())
        - 0.5 * logdet
    )


def dense_log_joint_evidence(group_y, group_sigma2,
                             layout: SegmentLayout) -> float:
    """Joint evidence of a block of sequences sharing one level vector.

    Integrates the flat-prior segment levels out of the product of the
    members' fixed-variance likelihoods *jointly*, so disagreement between
    members about the levels is penalized.  This differs from
    dense_log_group_marginal, whose data term only carries each member's own
    projection residual: that form coincides with this one for single-member
    blocks (and for members with identical values) but assigns no cost to
    between-member conflict, which makes it unusable as a partition weight.
    """
    ys = np.atleast_2d(np.asarray(group_y, dtype=float))
    sig2 = np.asarray(group_sigma2, dtype=float)
    n_r, n_loc = ys.shape
    x = design_matrix(layout)
    prec = 1.0 / sig2
    prec_total = prec.sum()
    gram = x.T @ x
    sign, logdet = np.linalg.slogdet(gram)
    if sign <= 0:
        raise np.linalg.LinAlgError("singular segment design")
    z = x.T @ (prec[:, None] * ys).sum(axis=0)
    quad = float((prec * np.einsum("ij,ij->i", ys, ys)).sum()
                 - z @ np.linalg.solve(gram, z) / prec_total)
    k = layout.k
    return float(
        -((n_r * n_loc - k - 1) / 2.0) * LOG_2PI
        - (n_loc / 2.0) * np.log(sig2).sum()
        - 0.5 * max(quad, 0.0)
        - ((k + 1) / 2.0) * math.log(prec_total)
        - 0.5 * logdet
    )


# --- enumeration --------------------------------------------------------------

def all_layouts(n_loc: int, w: int, k_max_override=None) -> List[SegmentLayout]:
    """Every admissible layout, ordered by k then colexicographic spare vector."""
    k_star = max_changepoints(n_loc, w, k_max_override)
    out: List[SegmentLayout] = []
    for k in range(k_star + 1):
        m0 = spare_total(n_loc, w, k)
        comps, exhaustive = compositions(m0, k + 1,
                                         budget=count_compositions(m0, k + 1))
        assert exhaustive
        for row in comps:
            out.append(layout_from_lengths(row, w, n_loc))
    return out


def layout_key(layout: SegmentLayout) -> LayoutKey:
    return layout.k, layout.change_points


def exact_segmentation_posterior(y, hyper: Hyperparameters, lam: float
                                 ) -> Dict[LayoutKey, float]:
    """Exact posterior over (number of change points, change-point positions)
    for a single sequence, by exhaustive enumeration with dense algebra."""
    y = np.asarray(y, dtype=float)
    n_loc = y.shape[0]
    if n_loc > _MAX_SEG_LOCATIONS:
        raise ValueError("instance too large for exhaustive enumeration")
    k_star = max_changepoints(n_loc, hyper.w, hyper.k_max_override)
    log_tp = trunc_poisson_logpmf_all(lam, k_star)
    layouts = all_layouts(n_loc, hyper.w, hyper.k_max_override)
    keys = [layout_key(lay) for lay in layouts]
    log_w = np.array([
        dense_log_marginal_layout(y, lay, hyper)
        + multinomial_logcoef(lay.m) + log_tp[lay.k]
        for lay in layouts
    ])
    log_w -= logsumexp(log_w)
    return dict(zip(keys, np.exp(log_w)))


def set_partitions(n: int) -> Iterator[Tuple[int, ...]]:
    """All set partitions of n items as first-occurrence-labelled tuples.

    Labels are 0-based and appear in first-use order (restricted growth
    strings), so each partition has exactly one representative.
    """
    def grow(prefix: List[int], used: int) -> Iterator[Tuple[int, ...]]:
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for label in range(used + 1):
            yield from grow(prefix + [label], max(used, label + 1))

    yield from grow([0], 1) if n else iter(())


def crp_log_prob(partition: Sequence[int], alpha0: float, n: int) -> float:
    """Log probability of a set partition of n items under the seating prior
    with concentration alpha0."""
    labels = tuple(partition)
    if len(labels) != n:
        raise ValueError("partition length must equal n")
    sizes: Dict[int, int] = {}
    for lab in labels:
        sizes[lab] = sizes.get(lab, 0) + 1
    val = len(sizes) * math.log(alpha0)
    val += sum(gammaln(sz) for sz in sizes.values())
    val -= sum(math.log(alpha0 + i) for i in range(n))
    return val


@dataclass(frozen=True)
class PartitionPosterior:
    """Joint and marginal enumeration posteriors at fixed variances.

    joint maps (assignment labels, per-block layout keys) to probability,
    blocks ordered by label; partition maps assignment labels to probability.
    """

    joint: Dict[Tuple[Tuple[int, ...], Tuple[LayoutKey, ...]], float]
    partition: Dict[Tuple[int, ...], float]


def exact_partition_posterior(data, hyper: Hyperparameters, sigma2_fixed,
                              lam: float, alpha0: float) -> PartitionPosterior:
    """Exhaustive posterior over (set partition, per-block layouts) with
    per-sequence noise variances held fixed.

    Block weights combine the joint fixed-variance level integral with the
    spare-length and change-point-count prior masses; partitions carry the
    seating prior.  Per-sequence likelihood normalizing constants are common
    to all partitions and cancel.
    """
    ys = np.atleast_2d(np.asarray(data, dtype=float))
    sig2 = np.asarray(sigma2_fixed, dtype=float)
    n_seq, n_loc = ys.shape
    if n_seq > _MAX_PARTITION_SEQ or n_loc > _MAX_PARTITION_LOCATIONS:
        raise ValueError("instance too large for exhaustive enumeration")
    k_star = max_changepoints(n_loc, hyper.w, hyper.k_max_override)
    log_tp = trunc_poisson_logpmf_all(lam, k_star)
    layouts = all_layouts(n_loc, hyper.w, hyper.k_max_override)
    keys = [layout_key(lay) for lay in layouts]
    prior_bits = np.array([multinomial_logcoef(lay.m) + log_tp[lay.k]
                           for lay in layouts])

    def block_layout_logw(members: Tuple[int, ...]) -> np.ndarray:
        return prior_bits + np.array([
            dense_log_joint_evidence(ys[list(members)], sig2[list(members)],
                                     lay)
            for lay in layouts
        ])

    cache: Dict[Tuple[int, ...], np.ndarray] = {}
    joint_keys: List[Tuple[Tuple[int, ...], Tuple[LayoutKey, ...]]] = []
    joint_logw: List[float] = []
    for labels in set_partitions(n_seq):
        blocks: Dict[int, List[int]] = {}
        for idx, lab in enumerate(labels):
            blocks.setdefault(lab, []).append(idx)
        ordered = [tuple(blocks[lab]) for lab in sorted(blocks)]
        base = crp_log_prob(labels, alpha0, n_seq)
        per_block = []
        for members in ordered:
            if members not in cache:
                cache[members] = block_layout_logw(members)
            per_block.append(cache[members])
        for combo in product(*(range(len(layouts)) for _ in ordered)):
            joint_keys.append(
                (labels, tuple(keys[i] for i in combo)))
            joint_logw.append(base + sum(per_block[b][i]
                                         for b, i in enumerate(combo)))
    logw = np.array(joint_logw)
    logw -= logsumexp(logw)
    probs = np.exp(logw)
    joint = dict(zip(joint_keys, probs))
    partition: Dict[Tuple[int, ...], float] = {}
    for (labels, _), p in joint.items():
        partition[labels] = partition.get(labels, 0.0) + p
    return PartitionPosterior(joint=joint, partition=partition)
