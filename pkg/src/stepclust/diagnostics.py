"""Convergence diagnostics, clustering quality, and posterior summaries.

Label switching is handled at the set-partition level: the modal label-free
partition is located first, draws carrying it are permuted to a canonical
labeling (clusters ordered by smallest member), and everything else is
retained but flagged.  Continuous parameters are summarized by posterior
mean, posterior standard deviation (reported as SE), and equal-tailed 95%
intervals from linear-interpolation quantiles; discrete parameters by the
posterior mode with ties broken toward the smallest value.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .model import GibbsDraw


# --- convergence ----------------------------------------------------------------

def gelman_rubin(chains: Sequence[Sequence[float]]) -> Optional[float]:
    """Potential scale reduction over ≥2 equal-length scalar chains.

    sqrt((n-1)/n + B/(nW)) with B the between-chain variance of chain means
    (times n) and W the mean within-chain variance.  Returns None when every
    chain is constant (W = 0), where the statistic is undefined.
    """
    arrs = [np.asarray(c, dtype=float) for c in chains]
    if len(arrs) < 2:
        raise ValueError("at least two chains required")
    n = arrs[0].size
    if n < 10 or any(a.size != n for a in arrs):
        raise ValueError("chains must share one length of at least 10")
    means = np.array([a.mean() for a in arrs])
    within = np.array([a.var(ddof=1) for a in arrs])
    w = float(within.mean())
    b = n * float(means.var(ddof=1))
    if w == 0.0:
        return None
    return math.sqrt((n - 1) / n + b / (n * w))


# --- clustering quality ----------------------------------------------------------

def _entropy(counts: np.ndarray) -> float:
    total = counts.sum()
    p = counts[counts > 0] / total
    return float(-(p * np.log(p)).sum())


def v_measure(truth: Sequence, pred: Sequence) -> float:
    """Harmonic mean of homogeneity and completeness, natural-log entropies.

    1 exactly when the two labelings induce the same partition; 0 when one
    of homogeneity/completeness vanishes.  A zero-entropy classing makes the
    corresponding component 1 by convention.
    """
    truth = list(truth)
    pred = list(pred)
    if not truth or len(truth) != len(pred):
        raise ValueError("labelings must be nonempty and equal-length")
    t_levels = {v: i for i, v in enumerate(dict.fromkeys(truth))}
    p_levels = {v: i for i, v in enumerate(dict.fromkeys(pred))}
    table = np.zeros((len(t_levels), len(p_levels)))
    for t, p in zip(truth, pred):
        table[t_levels[t], p_levels[p]] += 1
    n = table.sum()
    h_c = _entropy(table.sum(axis=1))
    h_k = _entropy(table.sum(axis=0))
    # conditional entropies from the joint table
    h_c_given_k = 0.0
    for col in table.T:
        h_c_given_k += (col.sum() / n) * _entropy(col)
    h_k_given_c = 0.0
    for row in table:
        h_k_given_c += (row.sum() / n) * _entropy(row)
    hom = 1.0 if h_c == 0 else 1.0 - h_c_given_k / h_c
    com = 1.0 if h_k == 0 else 1.0 - h_k_given_c / h_k
    if hom + com == 0.0:
        return 0.0
    return 2.0 * hom * com / (hom + com)


# --- label switching --------------------------------------------------------------

def canonical_partition(assignments: Sequence[int]) -> Tuple[int, ...]:
    """Label-free canonical form: clusters numbered 1.. in order of first
    appearance."""
    mapping: Dict[int, int] = {}
    out = []
    for a in assignments:
        if a not in mapping:
            mapping[a] = len(mapping) + 1
        out.append(mapping[a])
    return tuple(out)


@dataclass(frozen=True)
class RelabelResult:
    draws: Tuple[GibbsDraw, ...]
    is_modal: Tuple[bool, ...]
    modal_partition: Tuple[int, ...]
    modal_count: int


def relabel(draws: Sequence[GibbsDraw]) -> RelabelResult:
    """Permute labels of every modal-partition draw to the canonical form.

    The modal set partition is the most frequent canonical assignment vector
    (ties toward the lexicographically smallest).  Non-modal draws pass
    through untouched, flagged False.  No draw's partition ever changes.
    """
    if not draws:
        raise ValueError("no draws to relabel")
    keys = [canonical_partition(d.assignments) for d in draws]
    counts = Counter(keys)
    top = max(counts.values())
    modal = min(k for k, c in counts.items() if c == top)
    out: List[GibbsDraw] = []
    flags: List[bool] = []
    for d, key in zip(draws, keys):
        if key != modal:
            out.append(d)
            flags.append(False)
            continue
        perm: Dict[int, int] = {}
        for a in d.assignments:
            if a not in perm:
                perm[a] = len(perm) + 1
        profiles = [None] * len(d.profiles)
        for old, new in perm.items():
            profiles[new - 1] = d.profiles[old - 1]
        out.append(GibbsDraw(
            assignments=key, profiles=tuple(profiles), sigma2=d.sigma2,
            lam=d.lam, alpha0=d.alpha0))
        flags.append(True)
    return RelabelResult(draws=tuple(out), is_modal=tuple(flags),
                         modal_partition=modal, modal_count=top)


# --- summaries --------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarSummary:
    mean: float
    se: float
    ci_low: float
    ci_high: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "se": self.se,
                "ci_low": self.ci_low, "ci_high": self.ci_high}


def _scalar_summary(x: np.ndarray) -> ScalarSummary:
    lo, hi = np.quantile(x, [0.025, 0.975])  # linear interpolation (type 7)
    return ScalarSummary(mean=float(x.mean()),
                         se=float(x.std(ddof=1)),
                         ci_low=float(lo), ci_high=float(hi))


def _discrete_mode(values):
    """Most frequent value; ties broken toward the smallest."""
    counts = Counter(values)
    top = max(counts.values())
    return min(v for v, c in counts.items() if c == top)


@dataclass(frozen=True)
class ClusterSummary:
    label: int
    k_mode: int
    change_points_mode: Tuple[int, ...]
    levels: Tuple[ScalarSummary, ...]
    n_draws_used: int

    def to_dict(self) -> dict:
        return {"label": self.label, "k_mode": self.k_mode,
                "change_points_mode": list(self.change_points_mode),
                "levels": [s.to_dict() for s in self.levels],
                "n_draws_used": self.n_draws_used}


@dataclass(frozen=True)
class SummaryRecord:
    n_draws: int
    lam: ScalarSummary
    alpha0: ScalarSummary
    sigma2: Tuple[ScalarSummary, ...]
    n_clusters_mode: int
    n_clusters_counts: Dict[int, int]
    modal_partition: Tuple[int, ...]
    modal_partition_count: int
    clusters: Tuple[ClusterSummary, ...]
    v_measure_vs_truth: Optional[float] = None
    sigma2_mad: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "n_draws": self.n_draws,
            "lambda": self.lam.to_dict(),
            "alpha0": self.alpha0.to_dict(),
            "sigma2": [s.to_dict() for s in self.sigma2],
            "n_clusters_mode": self.n_clusters_mode,
            "n_clusters_counts": {str(k): v for k, v
                                  in sorted(self.n_clusters_counts.items())},
            "modal_partition": list(self.modal_partition),
            "modal_partition_count": self.modal_partition_count,
            "clusters": [c.to_dict() for c in self.clusters],
            "v_measure_vs_truth": self.v_measure_vs_truth,
            "sigma2_mad": self.sigma2_mad,
        }


def summarize(draws: Sequence[GibbsDraw],
              truth_assignments: Optional[Sequence[int]] = None,
              truth_sigma2: Optional[Sequence[float]] = None
              ) -> SummaryRecord:
    """Posterior summary of pooled draws.

    Continuous parameters get mean/SE/95% interval; the cluster count, the
    partition, each cluster's change-point count and positions get posterior
    modes.  Per-cluster level summaries condition on the modal partition and
    that cluster's modal change-point count, so their dimension is stable.
    Truth inputs only add evaluation fields (V-measure, variance MAD).
    """
    if len(draws) < 2:
        raise ValueError("at least two draws required")
    rl = relabel(draws)
    modal_draws = [d for d, keep in zip(rl.draws, rl.is_modal) if keep]
    n_seq = len(draws[0].assignments)

    lam = _scalar_summary(np.array([d.lam for d in draws]))
    alpha0 = _scalar_summary(np.array([d.alpha0 for d in draws]))
    sig = np.array([d.sigma2 for d in draws])
    sigma2 = tuple(_scalar_summary(sig[:, n]) for n in range(n_seq))
    n_counts = Counter(len(d.profiles) for d in draws)

    clusters: List[ClusterSummary] = []
    n_modal_clusters = max(rl.modal_partition)
    for label in range(1, n_modal_clusters + 1):
        ks = [d.profiles[label - 1].layout.k for d in modal_draws]
        k_mode = _discrete_mode(ks)
        sel = [d.profiles[label - 1] for d in modal_draws
               if d.profiles[label - 1].layout.k == k_mode]
        cps_mode = tuple(_discrete_mode(
            [p.layout.change_points for p in sel]))
        levels = np.array([p.levels for p in sel])
        clusters.append(ClusterSummary(
            label=label, k_mode=k_mode, change_points_mode=cps_mode,
            levels=tuple(_scalar_summary(levels[:, l])
                         for l in range(k_mode + 1)),
            n_draws_used=len(sel)))

    vm = None
    if truth_assignments is not None:
        vm = v_measure(truth_assignments, rl.modal_partition)
    mad = None
    if truth_sigma2 is not None:
        post_means = sig.mean(axis=0)
        mad = float(np.abs(post_means - np.asarray(truth_sigma2,
                                                   dtype=float)).mean())
    return SummaryRecord(
        n_draws=len(draws), lam=lam, alpha0=alpha0, sigma2=sigma2,
        n_clusters_mode=_discrete_mode(list(n_counts.elements())),
        n_clusters_counts=dict(n_counts),
        modal_partition=rl.modal_partition,
        modal_partition_count=rl.modal_count,
        clusters=tuple(clusters),
        v_measure_vs_truth=vm, sigma2_mad=mad)


# --- chain functionals for convergence tables --------------------------------------

def fitted_mean_series(draws: Sequence[GibbsDraw]) -> np.ndarray:
    """(n_draws, n_seq) matrix of each sequence's assigned-profile average.

    A dimension-stable functional of the varying-dimension state, suitable
    for potential-scale-reduction computation.
    """
    out = np.empty((len(draws), len(draws[0].assignments)))
    for i, d in enumerate(draws):
        means = [float(np.mean(p.step_values())) for p in d.profiles]
        out[i] = [means[a - 1] for a in d.assignments]
    return out


def rhat_table(per_chain_draws: Sequence[Sequence[GibbsDraw]]
               ) -> Dict[str, Optional[float]]:
    """Potential scale reduction for every dimension-stable functional:
    the two rate hyperparameters, each sequence's variance, and each
    sequence's fitted mean."""
    table: Dict[str, Optional[float]] = {}
    table["lambda"] = gelman_rubin(
        [[d.lam for d in ch] for ch in per_chain_draws])
    table["alpha0"] = gelman_rubin(
        [[d.alpha0 for d in ch] for ch in per_chain_draws])
    n_seq = len(per_chain_draws[0][0].assignments)
    for n in range(n_seq):
        table[f"sigma2[{n}]"] = gelman_rubin(
            [[d.sigma2[n] for d in ch] for ch in per_chain_draws])
    fitted = [fitted_mean_series(ch) for ch in per_chain_draws]
    for n in range(n_seq):
        table[f"fitted_mean[{n}]"] = gelman_rubin(
            [f[:, n] for f in fitted])
    return table
