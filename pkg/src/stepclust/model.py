"""Core domain types for change-point profile clustering.

A data sequence is a row of M values observed at ordered locations 1..M.
Each cluster owns a piecewise-constant profile: k change points at 1-based
positions tau splitting the locations into k+1 segments, each at least w
locations long, with one constant level per segment.

Segment convention: segments 1..k are half-open [tau_{l-1}, tau_l), the last
segment is closed [tau_k, M].  Point counts are therefore m_l + w for the
first k segments and m_{k+1} + w + 1 for the last, where m_l are the "spare"
lengths beyond the minimum w; counts always sum to M.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class SegmentLayout:
    """Positions of the change points of a piecewise-constant profile.

    Fields
    ------
    k : number of change points (>= 0).
    tau : 1-based boundary positions, length k+2, tau[0] = 1, tau[-1] = n_loc.
        The interior entries tau[1..k] are the change points proper.
    m : spare segment lengths, length k+1; m[l] = point count of segment l
        minus the minimum w (minus one more for the final, closed segment).
    w : minimum number of locations per segment.
    n_loc : total number of locations M.
    """

    k: int
    tau: tuple[int, ...]
    m: tuple[int, ...]
    w: int
    n_loc: int

    @property
    def change_points(self) -> tuple[int, ...]:
        return self.tau[1:-1]

    def segment_counts(self) -> np.ndarray:
        """Point count of each segment (the diagonal of the Gram matrix)."""
        counts = np.diff(np.asarray(self.tau))
        counts[-1] += 1  # last segment is closed at n_loc
        return counts

    def segment_bounds0(self) -> tuple[np.ndarray, np.ndarray]:
        """0-based [start, end) index pairs of each segment."""
        tau = np.asarray(self.tau)
        starts = tau[:-1] - 1
        ends = tau[1:] - 1
        ends[-1] = self.n_loc
        return starts, ends

    def segment_index(self) -> np.ndarray:
        """For each location (0-based), the segment it belongs to."""
        idx = np.zeros(self.n_loc, dtype=np.int64)
        starts, ends = self.segment_bounds0()
        for l, (s, e) in enumerate(zip(starts, ends)):
            idx[s:e] = l
        return idx


@dataclass(frozen=True)
class ClusterProfile:
    """A segment layout together with one constant level per segment."""

    layout: SegmentLayout
    levels: tuple[float, ...]

    def step_values(self) -> np.ndarray:
        """The profile evaluated at every location, as a length-M vector."""
        return np.asarray(self.levels, dtype=float)[self.layout.segment_index()]


@dataclass(frozen=True)
class Hyperparameters:
    """Prior settings shared by the sampler and the marginal computations.

    All gamma/inverse-gamma priors are parameterized as shape a and scale b
    with rate 1/b: the variance prior density is proportional to
    x^(-a-1) exp(-1/(b x)).
    """

    a_sigma: float = 2.0
    b_sigma: float = 1000.0
    a_lambda: float = 2.0
    b_lambda: float = 1000.0
    a_alpha0: float = 2.0
    b_alpha0: float = 1000.0
    w: int = 10
    k_max_override: Optional[int] = None
    composition_budget: int = 100_000

    def __post_init__(self):
        for name in ("a_sigma", "b_sigma", "a_lambda", "b_lambda",
                     "a_alpha0", "b_alpha0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.w < 1:
            raise ValueError("w must be a positive integer")
        if self.composition_budget < 1:
            raise ValueError("composition_budget must be positive")
        if self.k_max_override is not None and self.k_max_override < 0:
            raise ValueError("k_max_override must be nonnegative")


@dataclass(frozen=True)
class SequenceDataset:
    """N data sequences observed over the same M ordered locations."""

    values: np.ndarray  # (N, M) float
    sequence_ids: tuple[str, ...]
    location_ids: tuple[str, ...]

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 2:
            raise ValueError("values must be a 2-D matrix")
        n, m = vals.shape
        if n < 1 or m < 2:
            raise ValueError("need N >= 1 sequences and M >= 2 locations")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite (no missing entries)")
        if len(self.sequence_ids) != n:
            raise ValueError("sequence_ids length must match row count")
        if len(self.location_ids) != m:
            raise ValueError("location_ids length must match column count")

    @property
    def n_seq(self) -> int:
        return self.values.shape[0]

    @property
    def n_loc(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_values(cls, values) -> "SequenceDataset":
        vals = np.asarray(values, dtype=float)
        if vals.ndim != 2:
            raise ValueError("values must be a 2-D matrix")
        return cls(
            values=vals,
            sequence_ids=tuple(f"seq{i+1}" for i in range(vals.shape[0])),
            location_ids=tuple(str(j + 1) for j in range(vals.shape[1])),
        )


@dataclass(frozen=True)
class GibbsState:
    """One full state of the sampler.

    assignments are 1-based cluster indices in 1..L with no gaps; profiles[j]
    is the profile shared by every sequence assigned to cluster j+1.
    """

    assignments: tuple[int, ...]
    profiles: tuple[ClusterProfile, ...]
    sigma2: tuple[float, ...]
    lam: float
    alpha0: float


@dataclass(frozen=True)
class ChainMeta:
    seed: int
    iters: int
    burnin_frac: float
    stride: int
    wall_clock_s: float


@dataclass(frozen=True)
class GibbsDraw:
    """A retained post-burn-in snapshot (one row of a chain's output)."""

    assignments: tuple[int, ...]
    profiles: tuple[ClusterProfile, ...]
    sigma2: tuple[float, ...]
    lam: float
    alpha0: float


@dataclass(frozen=True)
class ChainOutput:
    draws: tuple[GibbsDraw, ...]
    meta: ChainMeta

    def payload(self):
        """Plain nested tuples of the draws, suitable for byte comparison.

        Excludes meta (wall clock differs between runs).
        """
        return tuple(
            (
                d.assignments,
                tuple(
                    (p.layout.k, p.layout.tau, p.layout.m, p.layout.w,
                     p.layout.n_loc, p.levels)
                    for p in d.profiles
                ),
                d.sigma2,
                d.lam,
                d.alpha0,
            )
            for d in self.draws
        )


# --- layout validation ------------------------------------------------------

def validate_layout(layout: SegmentLayout) -> Optional[str]:
    """Check every structural invariant of a segment layout.

    Returns None when the layout is valid, otherwise a message naming the
    first violated invariant.  Total function: never raises.
    """
    k, tau, m, w, n_loc = layout.k, layout.tau, layout.m, layout.w, layout.n_loc
    if k < 0:
        return "k must be nonnegative"
    if w < 1:
        return "w must be positive"
    if n_loc < 2:
        return "n_loc must be at least 2"
    spare_total = n_loc - 1 - (k + 1) * w
    if spare_total <= 0:
        return "K exceeds k*"  # no admissible spare mass at this k
    if len(tau) != k + 2:
        return "tau must have k+2 entries"
    if len(m) != k + 1:
        return "m must have k+1 entries"
    if tau[0] != 1:
        return "tau must start at 1"
    if tau[-1] != n_loc:
        return "tau must end at n_loc"
    if any(b <= a for a, b in zip(tau, tau[1:])):
        return "tau must be strictly increasing"
    if any(ml < 0 for ml in m):
        return "spare lengths must be nonnegative"
    if sum(m) != spare_total:
        return "spare lengths must sum to n_loc - 1 - (k+1) w"
    for l in range(1, k + 2):
        if tau[l] != tau[l - 1] + m[l - 1] + w:
            return "tau does not follow the spare-length recursion"
    # every segment at least w long (point counts; the last one is closed)
    counts = layout.segment_counts()
    if np.any(counts < w):
        return "segment shorter than w"
    return None


def make_layout(k, tau, m, w, n_loc) -> SegmentLayout:
    """Construct and validate a layout; raises on any violated invariant."""
    layout = SegmentLayout(k=int(k), tau=tuple(int(t) for t in tau),
                           m=tuple(int(x) for x in m), w=int(w),
                           n_loc=int(n_loc))
    msg = validate_layout(layout)
    if msg is not None:
        raise ValueError(f"invalid layout: {msg}")
    return layout


# --- sufficient statistics --------------------------------------------------

@dataclass(frozen=True)
class SegmentStats:
    counts: np.ndarray
    sums: np.ndarray
    sums_sq: np.ndarray
    total_sq: float


def segment_stats(y: Sequence[float], layout: SegmentLayout) -> SegmentStats:
    """Per-segment (count, sum, sum-of-squares) plus the total sum of squares.

    These are the sufficient statistics for every marginal quantity: the
    Gram matrix of the segment-indicator design is diag(counts) and the
    projection residual is total_sq - sum(sums^2 / counts).
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (layout.n_loc,):
        raise ValueError(
            f"sequence length {y.shape} does not match layout n_loc={layout.n_loc}")
    starts, ends = layout.segment_bounds0()
    c1 = np.concatenate(([0.0], np.cumsum(y)))
    c2 = np.concatenate(([0.0], np.cumsum(y * y)))
    sums = c1[ends] - c1[starts]
    sums_sq = c2[ends] - c2[starts]
    return SegmentStats(counts=layout.segment_counts(), sums=sums,
                        sums_sq=sums_sq, total_sq=float(c2[-1]))


def residual_ss(y, layout: SegmentLayout, levels) -> float:
    """Sum of squared residuals of y around the step function (layout, levels)."""
    y = np.asarray(y, dtype=float)
    levels = np.asarray(levels, dtype=float)
    if levels.shape != (layout.k + 1,):
        raise ValueError("levels must have one entry per segment")
    if y.shape != (layout.n_loc,):
        raise ValueError("sequence length does not match layout")
    stats = segment_stats(y, layout)
    rss = stats.total_sq - 2.0 * float(levels @ stats.sums) \
        + float((stats.counts * levels * levels).sum())
    # guard tiny negative rounding on exact fits
    return max(rss, 0.0)
