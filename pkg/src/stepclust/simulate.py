"""Synthetic scenario generation and the median-window preprocessing step.

Datasets are piecewise-constant cluster profiles observed under independent
heteroscedastic normal noise: sequences are split across clusters (balanced
unless proportions are given), each sequence gets its own noise variance
drawn from an inverse-gamma with a configurable mean, and observations are
the assigned profile's step values plus noise.

The three built-in scenarios cover two well-separated profile shapes at low
noise, the same shapes at ten times the noise, and a longer-sequence sweep
with minimum segment width scaled alongside the sequence length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .model import (
    ClusterProfile,
    GibbsState,
    SegmentLayout,
    SequenceDataset,
    make_layout,
)


def layout_from_changepoints(change_points: Sequence[int], w: int,
                             n_loc: int) -> SegmentLayout:
    """Layout with the given interior change-point positions."""
    cps = tuple(int(c) for c in change_points)
    tau = (1,) + cps + (n_loc,)
    m = tuple(tau[l + 1] - tau[l] - w for l in range(len(cps) + 1))
    return make_layout(len(cps), tau, m, w, n_loc)


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to draw one synthetic dataset."""

    n_seq: int
    n_loc: int
    w: int
    profiles: Tuple[ClusterProfile, ...]
    sigma2_mean: float
    proportions: Optional[Tuple[float, ...]] = None
    sigma_shape: float = 3.0

    def __post_init__(self):
        if self.n_seq < 1:
            raise ValueError("n_seq must be positive")
        if not self.profiles:
            raise ValueError("at least one cluster profile required")
        for prof in self.profiles:
            if prof.layout.n_loc != self.n_loc or prof.layout.w != self.w:
                raise ValueError("profile layout incompatible with scenario")
        if self.sigma2_mean <= 0:
            raise ValueError("sigma2_mean must be positive")
        if self.sigma_shape <= 1:
            raise ValueError("sigma_shape must exceed 1 for a finite mean")
        if self.proportions is not None:
            if len(self.proportions) != len(self.profiles):
                raise ValueError("one proportion per cluster required")
            if any(p < 0 for p in self.proportions) \
                    or not math.isclose(sum(self.proportions), 1.0,
                                        abs_tol=1e-9):
                raise ValueError("proportions must be nonnegative, sum 1")


@dataclass(frozen=True)
class GroundTruth:
    """Generating values for one dataset: who belongs where, the cluster
    step profiles, and the per-sequence noise variances."""

    assignments: Tuple[int, ...]
    profiles: Tuple[ClusterProfile, ...]
    sigma2: Tuple[float, ...]

    def to_state(self, lam: float = 1.0, alpha0: float = 1.0) -> GibbsState:
        """The truth as a sampler state (rate hyperparameters at 1)."""
        return GibbsState(assignments=self.assignments,
                          profiles=self.profiles, sigma2=self.sigma2,
                          lam=lam, alpha0=alpha0)


def _cluster_counts(n_seq: int, n_clusters: int,
                    proportions: Optional[Tuple[float, ...]]) -> list[int]:
    if proportions is None:
        base, rem = divmod(n_seq, n_clusters)
        return [base + (1 if j < rem else 0) for j in range(n_clusters)]
    cum = np.floor(np.cumsum(proportions) * n_seq + 1e-9).astype(int)
    cum[-1] = n_seq
    counts = np.diff(np.concatenate(([0], cum)))
    if (counts <= 0).any():
        raise ValueError("proportions leave a cluster empty at this n_seq")
    return [int(c) for c in counts]


def generate_dataset(spec: ScenarioSpec, seed: int
                     ) -> Tuple[SequenceDataset, GroundTruth]:
    """Draw one dataset: contiguous balanced assignment (first clusters take
    the remainder), variances from an inverse-gamma with mean sigma2_mean
    (shape sigma_shape, rate (shape-1)*mean), then per-location normal noise
    around the assigned profile."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    counts = _cluster_counts(spec.n_seq, len(spec.profiles), spec.proportions)
    assignments = tuple(
        j + 1 for j, c in enumerate(counts) for _ in range(c))
    rate = (spec.sigma_shape - 1.0) * spec.sigma2_mean
    sigma2 = rate / rng.gamma(spec.sigma_shape, 1.0, size=spec.n_seq)
    values = np.empty((spec.n_seq, spec.n_loc))
    for n, a in enumerate(assignments):
        step = spec.profiles[a - 1].step_values()
        values[n] = step + rng.normal(0.0, math.sqrt(sigma2[n]), spec.n_loc)
    data = SequenceDataset.from_values(values)
    truth = GroundTruth(assignments=assignments, profiles=spec.profiles,
                        sigma2=tuple(float(s) for s in sigma2))
    return data, truth


# --- built-in scenarios ---------------------------------------------------------

_SHAPE_A = ((5.0, 20.0, 10.0), (19, 34))
_SHAPE_B = ((17.0, 10.0, 2.0), (15, 32))
_SWEEP_A = (2.0, 15.0, 7.0)
_SWEEP_B = (20.0, 5.0, 12.0)
# interior change-point positions for the length sweep, scaled with length
_SWEEP_TAUS = {
    50: ((19, 34), (15, 32)),
    100: ((38, 68), (30, 64)),
    200: ((76, 136), (60, 128)),
}
_SWEEP_W = {50: 10, 100: 20, 200: 50}


def _two_profiles(shapes, n_loc: int, w: int) -> Tuple[ClusterProfile, ...]:
    out = []
    for levels, cps in shapes:
        layout = layout_from_changepoints(cps, w, n_loc)
        out.append(ClusterProfile(layout=layout, levels=levels))
    return tuple(out)


def scenario_spec(scenario: int, n_seq: Optional[int] = None,
                  n_loc: Optional[int] = None) -> ScenarioSpec:
    """The built-in scenario grid.

    1: two 3-segment profiles, 50 locations, low noise (variance mean 0.05).
    2: scenario 1's profiles at variance mean 0.5.
    3: 25 sequences, length in {50, 100, 200} with width 10/20/50, low noise.
    """
    if scenario in (1, 2):
        n_seq = 10 if n_seq is None else n_seq
        n_loc = 50 if n_loc is None else n_loc
        if n_loc != 50:
            raise ValueError("scenarios 1 and 2 are defined at 50 locations")
        return ScenarioSpec(
            n_seq=n_seq, n_loc=50, w=10,
            profiles=_two_profiles((_SHAPE_A, _SHAPE_B), 50, 10),
            sigma2_mean=0.05 if scenario == 1 else 0.5)
    if scenario == 3:
        n_seq = 25 if n_seq is None else n_seq
        n_loc = 50 if n_loc is None else n_loc
        if n_loc not in _SWEEP_TAUS:
            raise ValueError("scenario 3 lengths are 50, 100, or 200")
        w = _SWEEP_W[n_loc]
        taus = _SWEEP_TAUS[n_loc]
        shapes = ((_SWEEP_A, taus[0]), (_SWEEP_B, taus[1]))
        return ScenarioSpec(
            n_seq=n_seq, n_loc=n_loc, w=w,
            profiles=_two_profiles(shapes, n_loc, w), sigma2_mean=0.05)
    raise ValueError("scenario must be 1, 2, or 3")


def spec_from_dict(d: dict) -> ScenarioSpec:
    """Build a ScenarioSpec from a parsed config mapping.

    Either {"scenario": 1|2|3, optional "n_seq"/"n_loc"} or an explicit
    {"n_seq", "n_loc", "w", "sigma2_mean", "profiles": [{"levels",
    "change_points"}], optional "proportions"/"sigma_shape"}.
    """
    if "scenario" in d:
        return scenario_spec(int(d["scenario"]), d.get("n_seq"),
                             d.get("n_loc"))
    try:
        n_loc = int(d["n_loc"])
        w = int(d["w"])
        profiles = tuple(
            ClusterProfile(
                layout=layout_from_changepoints(p["change_points"], w, n_loc),
                levels=tuple(float(v) for v in p["levels"]))
            for p in d["profiles"])
        return ScenarioSpec(
            n_seq=int(d["n_seq"]), n_loc=n_loc, w=w, profiles=profiles,
            sigma2_mean=float(d["sigma2_mean"]),
            proportions=(tuple(float(p) for p in d["proportions"])
                         if d.get("proportions") else None),
            sigma_shape=float(d.get("sigma_shape", 3.0)))
    except KeyError as exc:
        raise ValueError(f"scenario config missing key {exc}") from exc


# --- preprocessing --------------------------------------------------------------

def moving_median(y, window: int) -> np.ndarray:
    """Medians of consecutive non-overlapping blocks (len(y)//window of them).

    window must be a positive odd integer no longer than the sequence.
    """
    y = np.asarray(y, dtype=float)
    if window < 1:
        raise ValueError("window must be a positive integer")
    if window % 2 == 0:
        raise ValueError("window must be odd")
    if window > y.shape[-1]:
        raise ValueError("window longer than sequence")
    n_out = y.shape[-1] // window
    trimmed = y[..., :n_out * window]
    blocks = trimmed.reshape(*y.shape[:-1], n_out, window)
    return np.median(blocks, axis=-1)


def rolling_median(y, window: int, step: int = 2) -> np.ndarray:
    """Medians of full overlapping windows taken every `step` positions.

    With window 5 and step 2 this maps a length-583 sequence to 290 values,
    the alternative reading of a size-five median window.
    """
    y = np.asarray(y, dtype=float)
    if window < 1 or step < 1:
        raise ValueError("window and step must be positive integers")
    if window % 2 == 0:
        raise ValueError("window must be odd")
    n = y.shape[-1]
    if window > n:
        raise ValueError("window longer than sequence")
    starts = range(0, n - window + 1, step)
    cols = [np.median(y[..., s:s + window], axis=-1) for s in starts]
    return np.stack(cols, axis=-1)
