"""Clustering agreement, label canonicalization, scale-reduction, and
posterior summaries.

The v_measure hand value was computed from the contingency table with
explicit natural-log entropies; the scale-reduction hand value from the
two-chain worked example (within-variance 6.25, between-variance 1.25).
sklearn serves as a second, independent implementation for cross-checking.
"""

import math

import numpy as np
import pytest
from sklearn.metrics import v_measure_score

from stepclust.combinatorics import layout_from_lengths
from stepclust.diagnostics import (
    canonical_partition,
    fitted_mean_series,
    gelman_rubin,
    relabel,
    rhat_table,
    summarize,
    v_measure,
)
from stepclust.model import ClusterProfile, GibbsDraw


# --- potential scale reduction --------------------------------------------------------

def test_gelman_rubin_hand_example():
    c1 = [float(v) for v in range(1, 11)]
    c2 = [3.0, 5.0, 4.0, 6.0, 5.0, 7.0, 6.0, 8.0, 7.0, 9.0]
    # means 5.5 and 6.0; W = 6.25, B = 1.25; sqrt(9/10 + 1.25/62.5)
    assert gelman_rubin([c1, c2]) == pytest.approx(0.9591663046625439,
                                                   abs=1e-12)


def test_gelman_rubin_same_distribution_near_one():
    rng = np.random.default_rng(1)
    chains = [rng.normal(size=5000), rng.normal(size=5000)]
    r = gelman_rubin(chains)
    assert 0.99 < r < 1.01


def test_gelman_rubin_separated_chains_large():
    rng = np.random.default_rng(2)
    chains = [rng.normal(0.0, 1.0, 2000), rng.normal(10.0, 1.0, 2000)]
    assert gelman_rubin(chains) > 1.5


def test_gelman_rubin_degenerate_returns_none():
    assert gelman_rubin([[1.0] * 20, [1.0] * 20]) is None


def test_gelman_rubin_affine_invariant():
    rng = np.random.default_rng(3)
    chains = [rng.normal(size=500), rng.normal(0.2, 1.1, 500)]
    base = gelman_rubin(chains)
    scaled = gelman_rubin([[3.0 * v - 7.0 for v in ch] for ch in chains])
    assert scaled == pytest.approx(base, rel=1e-12)


def test_gelman_rubin_input_validation():
    with pytest.raises(ValueError):
        gelman_rubin([[1.0] * 20])
    with pytest.raises(ValueError):
        gelman_rubin([[1.0] * 20, [1.0] * 19])
    with pytest.raises(ValueError):
        gelman_rubin([[1.0] * 5, [1.0] * 5])


# --- v-measure ------------------------------------------------------------------------

def test_v_measure_hand_example():
    # contingency of (0,0,1,1) vs (0,1,1,1):
    #   homogeneity 0.31127812445913283, completeness 0.3836885465963443
    val = v_measure((0, 0, 1, 1), (0, 1, 1, 1))
    assert val == pytest.approx(0.34371101848545077, abs=1e-10)


def test_v_measure_perfect_and_zero():
    assert v_measure((1, 1, 2, 2), (2, 2, 1, 1)) == pytest.approx(1.0,
                                                                  abs=1e-12)
    assert v_measure((1, 1, 2, 2), (1, 1, 1, 1)) == pytest.approx(0.0,
                                                                  abs=1e-12)


def test_v_measure_matches_sklearn():
    rng = np.random.default_rng(4)
    for _ in range(20):
        n = int(rng.integers(3, 30))
        truth = rng.integers(0, 4, size=n)
        pred = rng.integers(0, 4, size=n)
        assert v_measure(truth, pred) == pytest.approx(
            v_measure_score(truth, pred), abs=1e-12)


def test_v_measure_symmetry_and_label_invariance():
    truth = (1, 1, 2, 2, 3)
    pred = (1, 2, 2, 3, 3)
    assert v_measure(truth, pred) == pytest.approx(v_measure(pred, truth),
                                                   rel=1e-12)
    relabeled = tuple(p + 10 for p in pred)
    assert v_measure(truth, relabeled) == pytest.approx(
        v_measure(truth, pred), rel=1e-14)


def test_v_measure_input_validation():
    with pytest.raises(ValueError):
        v_measure((), ())
    with pytest.raises(ValueError):
        v_measure((1, 2), (1,))


# --- canonical labels and relabeling ----------------------------------------------------

def test_canonical_partition():
    assert canonical_partition((2, 2, 1)) == (1, 1, 2)
    assert canonical_partition((5, 5, 5)) == (1, 1, 1)
    assert canonical_partition((3, 1, 3, 2)) == (1, 2, 1, 3)


def _draw(assignments, level_by_label, lam=1.0, alpha0=1.0):
    lay = layout_from_lengths((8,), 3, 12)
    n_clusters = max(assignments)
    profiles = tuple(ClusterProfile(layout=lay,
                                    levels=(level_by_label[j + 1],))
                     for j in range(n_clusters))
    return GibbsDraw(assignments=tuple(assignments), profiles=profiles,
                     sigma2=(1.0,) * len(assignments), lam=lam, alpha0=alpha0)


def test_relabel_aligns_swapped_labels():
    d1 = _draw((1, 1, 2), {1: 0.0, 2: 9.0})
    d2 = _draw((2, 2, 1), {1: 9.0, 2: 0.0})  # same partition, labels swapped
    rl = relabel([d1, d2])
    assert rl.modal_partition == (1, 1, 2)
    assert rl.modal_count == 2
    assert rl.is_modal == (True, True)
    assert rl.draws[0].assignments == rl.draws[1].assignments
    # the profile owning level 0.0 ends up at label 1 in both draws
    assert rl.draws[1].profiles[0].levels == (0.0,)


def test_relabel_preserves_fitted_means():
    d1 = _draw((1, 1, 2), {1: 0.0, 2: 9.0})
    d2 = _draw((2, 2, 1), {1: 9.0, 2: 0.0})
    rl = relabel([d1, d2])
    np.testing.assert_allclose(fitted_mean_series([d1, d2]),
                               fitted_mean_series(rl.draws), rtol=1e-14)


def test_relabel_flags_non_modal_draws():
    d1 = _draw((1, 1, 2), {1: 0.0, 2: 9.0})
    d2 = _draw((1, 1, 2), {1: 0.1, 2: 9.1})
    d3 = _draw((1, 2, 3), {1: 0.0, 2: 5.0, 3: 9.0})
    rl = relabel([d1, d2, d3])
    assert rl.is_modal == (True, True, False)
    assert rl.modal_partition == (1, 1, 2)
    assert rl.draws[2] == d3  # non-modal draws pass through canonicalized


# --- summaries ------------------------------------------------------------------------

def test_summarize_constant_draws():
    draws = [_draw((1, 1, 2), {1: 0.5, 2: 9.0}, lam=2.0, alpha0=0.7)
             for _ in range(10)]
    rec = summarize(draws, truth_assignments=(1, 1, 2),
                    truth_sigma2=(1.0, 1.0, 1.0))
    assert rec.n_draws == 10
    assert rec.lam.mean == pytest.approx(2.0)
    assert rec.lam.se == 0.0
    assert rec.lam.ci_low == rec.lam.ci_high == 2.0
    assert rec.n_clusters_mode == 2
    assert rec.modal_partition == (1, 1, 2)
    assert rec.v_measure_vs_truth == pytest.approx(1.0)
    assert rec.sigma2_mad == pytest.approx(0.0)
    assert [c.k_mode for c in rec.clusters] == [0, 0]
    assert [len(c.levels) for c in rec.clusters] == [1, 1]


def test_summarize_quantile_convention():
    # 2.5%/97.5% quantiles with linear interpolation between order statistics
    lams = np.arange(1.0, 101.0)
    draws = [_draw((1, 1), {1: 0.0}, lam=float(l)) for l in lams]
    rec = summarize(draws)
    n = len(lams)
    for q, got in ((0.025, rec.lam.ci_low), (0.975, rec.lam.ci_high)):
        pos = (n - 1) * q
        lo = int(math.floor(pos))
        expected = lams[lo] + (pos - lo) * (lams[lo + 1] - lams[lo])
        assert got == pytest.approx(expected, rel=1e-12)


def test_summarize_mode_ties_break_small():
    draws = [_draw((1, 1), {1: 0.0}), _draw((1, 1), {1: 0.0}),
             _draw((1, 2), {1: 0.0, 2: 1.0}), _draw((1, 2), {1: 0.0, 2: 1.0})]
    rec = summarize(draws)
    assert rec.n_clusters_mode == 1
    assert rec.n_clusters_counts == {1: 2, 2: 2}


def test_summarize_requires_two_draws():
    with pytest.raises(ValueError):
        summarize([_draw((1, 1), {1: 0.0})])


def test_summarize_without_truth_leaves_fields_none():
    draws = [_draw((1, 1, 2), {1: 0.5, 2: 9.0}) for _ in range(3)]
    rec = summarize(draws)
    assert rec.v_measure_vs_truth is None
    assert rec.sigma2_mad is None
    d = rec.to_dict()
    assert d["v_measure_vs_truth"] is None
    assert "lambda" in d


# --- chain functionals ------------------------------------------------------------------

def test_fitted_mean_series_values():
    d = _draw((1, 2, 1), {1: 2.0, 2: 8.0})
    out = fitted_mean_series([d])
    np.testing.assert_allclose(out, [[2.0, 8.0, 2.0]], rtol=1e-14)


def test_rhat_table_keys_and_convergence():
    rng = np.random.default_rng(9)
    chains = []
    for _ in range(2):
        chains.append([
            _draw((1, 1, 2), {1: float(rng.normal(0.0, 0.1)),
                              2: float(rng.normal(9.0, 0.1))},
                  lam=float(rng.gamma(4.0)), alpha0=float(rng.gamma(2.0)))
            for _ in range(50)])
    table = rhat_table(chains)
    expected_keys = {"lambda", "alpha0"} \
        | {f"sigma2[{n}]" for n in range(3)} \
        | {f"fitted_mean[{n}]" for n in range(3)}
    assert set(table) == expected_keys
    # sigma2 is constant across all draws here -> degenerate, reported None
    assert table["sigma2[0]"] is None
    assert table["lambda"] is not None
