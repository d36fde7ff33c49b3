"""Scenario construction, dataset generation, and the median pre-filters."""

import math

import numpy as np
import pytest

from stepclust.model import Hyperparameters
from stepclust.sampler import validate_state
from stepclust.simulate import (
    GroundTruth,
    ScenarioSpec,
    generate_dataset,
    layout_from_changepoints,
    moving_median,
    rolling_median,
    scenario_spec,
    spec_from_dict,
)


def test_layout_from_changepoints():
    lay = layout_from_changepoints((19, 34), 10, 50)
    assert lay.tau == (1, 19, 34, 50)
    assert lay.m == (8, 5, 6)
    flat = layout_from_changepoints((), 10, 50)
    assert flat.k == 0
    with pytest.raises(ValueError):
        layout_from_changepoints((5,), 10, 50)  # first segment shorter than w


def test_scenario_one_spec():
    spec = scenario_spec(1)
    assert (spec.n_seq, spec.n_loc, spec.w) == (10, 50, 10)
    assert spec.sigma2_mean == 0.05
    assert len(spec.profiles) == 2
    assert spec.profiles[0].layout.change_points == (19, 34)
    assert spec.profiles[0].levels == (5.0, 20.0, 10.0)
    assert spec.profiles[1].layout.change_points == (15, 32)
    assert spec.profiles[1].levels == (17.0, 10.0, 2.0)


def test_scenario_two_spec_differs_only_in_noise():
    s1, s2 = scenario_spec(1), scenario_spec(2)
    assert s2.sigma2_mean == 0.5
    assert s2.profiles == s1.profiles
    assert (s2.n_seq, s2.n_loc, s2.w) == (s1.n_seq, s1.n_loc, s1.w)


def test_scenario_three_size_grid():
    for n_loc, w, cps_a, cps_b in (
            (50, 10, (19, 34), (15, 32)),
            (100, 20, (38, 68), (30, 64)),
            (200, 50, (76, 136), (60, 128))):
        spec = scenario_spec(3, n_loc=n_loc)
        assert spec.n_seq == 25
        assert spec.w == w
        assert spec.profiles[0].layout.change_points == cps_a
        assert spec.profiles[1].layout.change_points == cps_b
    spec = scenario_spec(3, n_seq=100, n_loc=200)
    assert spec.n_seq == 100


def test_scenario_spec_rejects_bad_sizes():
    with pytest.raises(ValueError):
        scenario_spec(1, n_loc=60)
    with pytest.raises(ValueError):
        scenario_spec(3, n_loc=75)
    with pytest.raises(ValueError):
        scenario_spec(4)


def test_generate_dataset_shapes_and_truth():
    spec = scenario_spec(1)
    data, truth = generate_dataset(spec, 7)
    assert data.values.shape == (10, 50)
    assert truth.assignments == (1,) * 5 + (2,) * 5  # balanced split
    assert len(truth.sigma2) == 10
    assert all(s > 0 for s in truth.sigma2)
    assert truth.profiles == spec.profiles

    big, _ = generate_dataset(scenario_spec(3, n_loc=200), 7)
    assert big.values.shape == (25, 200)


def test_generate_dataset_unbalanced_split():
    spec = ScenarioSpec(n_seq=7, n_loc=50, w=10,
                        profiles=scenario_spec(1).profiles, sigma2_mean=0.05)
    _, truth = generate_dataset(spec, 3)
    assert truth.assignments == (1,) * 4 + (2,) * 3


def test_generate_dataset_proportions():
    spec = ScenarioSpec(n_seq=10, n_loc=50, w=10,
                        profiles=scenario_spec(1).profiles,
                        sigma2_mean=0.05, proportions=(0.3, 0.7))
    _, truth = generate_dataset(spec, 3)
    assert truth.assignments == (1,) * 3 + (2,) * 7


def test_generate_dataset_rejects_empty_cluster():
    spec = ScenarioSpec(n_seq=2, n_loc=50, w=10,
                        profiles=scenario_spec(1).profiles,
                        sigma2_mean=0.05, proportions=(0.01, 0.99))
    with pytest.raises(ValueError):
        generate_dataset(spec, 0)


def test_generate_dataset_deterministic():
    spec = scenario_spec(1)
    d1, t1 = generate_dataset(spec, 11)
    d2, t2 = generate_dataset(spec, 11)
    assert np.array_equal(d1.values, d2.values)
    assert t1 == t2
    d3, _ = generate_dataset(spec, 12)
    assert not np.array_equal(d1.values, d3.values)


def test_generate_dataset_noise_free_limit():
    spec = ScenarioSpec(n_seq=4, n_loc=50, w=10,
                        profiles=scenario_spec(1).profiles,
                        sigma2_mean=1e-18)
    data, truth = generate_dataset(spec, 5)
    for n, row in enumerate(data.values):
        step = truth.profiles[truth.assignments[n] - 1].step_values()
        np.testing.assert_allclose(row, step, atol=1e-6)


def test_generate_dataset_residual_variances():
    # at M=200 each row's empirical residual variance should sit within
    # three standard errors of its drawn sigma2
    spec = ScenarioSpec(n_seq=10, n_loc=200, w=50,
                        profiles=scenario_spec(3, n_loc=200).profiles,
                        sigma2_mean=0.3)
    data, truth = generate_dataset(spec, 13)
    m = 200
    for n, row in enumerate(data.values):
        step = truth.profiles[truth.assignments[n] - 1].step_values()
        emp = float(np.var(row - step, ddof=1))
        s2 = truth.sigma2[n]
        se = s2 * math.sqrt(2.0 / (m - 1))
        assert abs(emp - s2) < 3 * se


def test_ground_truth_state_is_valid():
    spec = scenario_spec(1)
    data, truth = generate_dataset(spec, 21)
    state = truth.to_state(lam=2.0, alpha0=0.5)
    assert validate_state(state, data, Hyperparameters(w=10)) is None
    assert state.lam == 2.0
    assert state.alpha0 == 0.5


def test_spec_from_dict_scenario_and_explicit():
    spec = spec_from_dict({"scenario": 2, "n_seq": 6})
    assert spec.n_seq == 6
    assert spec.sigma2_mean == 0.5

    explicit = spec_from_dict({
        "n_seq": 3, "n_loc": 12, "w": 3, "sigma2_mean": 0.1,
        "profiles": [
            {"change_points": [6], "levels": [0.0, 4.0]},
            {"change_points": [], "levels": [9.0]},
        ],
    })
    assert explicit.n_loc == 12
    assert explicit.profiles[0].layout.change_points == (6,)
    assert explicit.profiles[1].levels == (9.0,)


def test_scenario_spec_validation():
    with pytest.raises(ValueError):
        ScenarioSpec(n_seq=0, n_loc=50, w=10,
                     profiles=scenario_spec(1).profiles, sigma2_mean=0.05)
    with pytest.raises(ValueError):
        ScenarioSpec(n_seq=4, n_loc=50, w=10,
                     profiles=scenario_spec(1).profiles, sigma2_mean=-1.0)
    with pytest.raises(ValueError):
        ScenarioSpec(n_seq=4, n_loc=50, w=10, profiles=(),
                     sigma2_mean=0.05)


# --- median pre-filters -------------------------------------------------------------------

def test_moving_median_blocks():
    y = np.arange(1.0, 8.0)
    out = moving_median(y, 3)
    np.testing.assert_allclose(out, [2.0, 5.0])  # two full blocks, tail dropped
    single = moving_median(np.array([4.0, 1.0, 9.0]), 3)
    np.testing.assert_allclose(single, [4.0])


def test_moving_median_validation():
    with pytest.raises(ValueError):
        moving_median(np.arange(10.0), 4)  # even window
    with pytest.raises(ValueError):
        moving_median(np.arange(4.0), 5)  # window longer than the series


def test_rolling_median_length_and_values():
    y = np.arange(11.0)
    out = rolling_median(y, 5, step=2)
    assert out.shape == (4,)
    np.testing.assert_allclose(out, [2.0, 4.0, 6.0, 8.0])


def test_rolling_median_reduces_583_to_290():
    out = rolling_median(np.zeros(583), 5, step=2)
    assert out.shape == (290,)
