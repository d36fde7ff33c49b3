"""The five-step Gibbs sampler and chain orchestration.

Per iteration, in fixed order: (1) reseat every sequence under the seating
process with marginal weights, (2) refresh per-sequence noise variances from
their inverse-gamma full conditionals, (3) refresh every cluster's layout and
segment levels from their exact conditionals, (4) one Metropolis-Hastings
move on the change-point-count rate, (5) the usual beta-augmented draw of the
seating concentration.

A per-chain workspace precomputes the per-(k, composition) geometry and the
data-only part of the new-cluster weight tables once: those quantities do not
depend on the chain state, so the reseating step's new-cluster weight reduces
to combining cached row sums with the current count prior.

SamplerOptions carries test-harness switches (freeze variances, neutralize
the likelihood, freeze the two hyperparameters) used by the exact-enumeration
and seating-prior tests; all default off.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .combinatorics import (
    layout_from_lengths,
    max_changepoints,
    trunc_poisson_logpmf_all,
)
from .marginals import (
    LOG_2PI,
    LayoutTable,
    NewClusterTable,
    sample_new_profile,
    table_for_budget,
)
from .model import (
    ChainMeta,
    ChainOutput,
    ClusterProfile,
    GibbsDraw,
    GibbsState,
    Hyperparameters,
    SequenceDataset,
    validate_layout,
)
from .utils import sample_categorical_logits


@dataclass(frozen=True)
class SamplerOptions:
    """Switches for validation harnesses; production runs use the defaults.

    fix_sigma2: skip the variance step; seat/profile weights condition on the
        state's variances exactly (levels still integrated out).  This is the
        regime of the fixed-variance enumeration oracle.
    likelihood_off: replace every data log-weight with zero so reseating
        follows the bare seating prior and layout refreshes follow the bare
        segmentation prior.
    fix_partition: skip the reseating step (assignments frozen), e.g. to
        study the layout conditional on its own.
    fix_lambda / fix_alpha0: skip the corresponding hyperparameter step.
    lambda_proposal_shape: gamma proposal shape for the rate move (mean stays
        at the current value); fixed during a run to preserve detailed balance.
    """

    fix_sigma2: bool = False
    likelihood_off: bool = False
    fix_partition: bool = False
    fix_lambda: bool = False
    fix_alpha0: bool = False
    lambda_proposal_shape: float = 50.0


DEFAULT_OPTIONS = SamplerOptions()


# --- internal mutable chain state ----------------------------------------------

class _Chain:
    """Mutable chain internals: assignment lists, caches, and the rng.

    Public step functions wrap this; run_chain keeps one alive across
    iterations so the geometry/weight caches are built exactly once.
    """

    def __init__(self, data: SequenceDataset, hyper: Hyperparameters,
                 state: GibbsState, rng: np.random.Generator,
                 options: SamplerOptions = DEFAULT_OPTIONS):
        msg = validate_state(state, data, hyper)
        if msg is not None:
            raise ValueError(msg)
        self.data = data
        self.hyper = hyper
        self.options = options
        self.rng = rng
        y = data.values
        self.n_seq, self.n_loc = y.shape
        self.y = y
        self.c1 = np.concatenate(
            [np.zeros((self.n_seq, 1)), np.cumsum(y, axis=1)], axis=1)
        self.yty = np.einsum("ij,ij->i", y, y)
        self.k_star = max_changepoints(self.n_loc, hyper.w,
                                       hyper.k_max_override)

        # mutable state
        self.assign = [a - 1 for a in state.assignments]  # 0-based
        self.profiles: List[ClusterProfile] = list(state.profiles)
        self.members: List[List[int]] = [[] for _ in self.profiles]
        for n, j in enumerate(self.assign):
            self.members[j].append(n)
        self.sigma2 = np.array(state.sigma2, dtype=float)
        self.lam = float(state.lam)
        self.alpha0 = float(state.alpha0)
        self.log_tp = trunc_poisson_logpmf_all(self.lam, self.k_star)

        # data-fixed weight tables: per k, geometry plus per-sequence
        # log(level-and-variance-marginal) + spare-length prior mass
        self.tables: List[LayoutTable] = []
        self.row_w: List[np.ndarray] = []   # (N, n_rows_k)
        self.row_lse = np.empty((self.n_seq, self.k_star + 1))
        for k in range(self.k_star + 1):
            tbl = table_for_budget(self.n_loc, hyper.w, k,
                                   hyper.composition_budget, rng)
            self.tables.append(tbl)
            w_k = self._table_log_weights(tbl, np.arange(self.n_seq))
            self.row_w.append(w_k)
            self.row_lse[:, k] = logsumexp(w_k, axis=1)

        a, b = hyper.a_sigma, hyper.b_sigma
        self._seat_const = (gammaln(self.n_loc / 2.0 + a) - a * math.log(b)
                            - (self.n_loc / 2.0) * LOG_2PI - gammaln(a))

    # -- cached weight construction --

    def _table_log_weights(self, tbl: LayoutTable, rows: np.ndarray
                           ) -> np.ndarray:
        """Per-(sequence, composition) data log-weight including the
        spare-length prior but excluding the count prior (which moves with
        the rate parameter)."""
        if self.options.likelihood_off:
            return np.broadcast_to(tbl.logmn, (rows.size, tbl.n_rows)).copy()
        sums = tbl.segment_sums(self.c1[rows])          # (n, rows_k, k+1)
        resid = self.yty[rows, None] - (sums * sums / tbl.counts).sum(axis=2)
        np.maximum(resid, 0.0, out=resid)
        half = (self.n_loc - tbl.k - 1) / 2.0
        if self.options.fix_sigma2:
            sig2 = self.sigma2[rows, None]
            log_h = (-half * (LOG_2PI + np.log(sig2)) - 0.5 * tbl.logdet
                     - resid / (2.0 * sig2))
        else:
            a, b = self.hyper.a_sigma, self.hyper.b_sigma
            log_h = (-half * LOG_2PI - 0.5 * tbl.logdet - a * math.log(b)
                     - gammaln(a) + gammaln(half + a)
                     - (half + a) * np.log(resid / 2.0 + 1.0 / b))
        return log_h + tbl.logmn

    def set_lambda(self, lam: float) -> None:
        self.lam = lam
        self.log_tp = trunc_poisson_logpmf_all(lam, self.k_star)

    # -- seat weights --

    def _profile_rss(self, n: int, profile: ClusterProfile) -> float:
        starts, ends = profile.layout.segment_bounds0()
        row = self.c1[n]
        sums = row[ends] - row[starts]
        levels = np.asarray(profile.levels)
        counts = profile.layout.segment_counts()
        rss = self.yty[n] - 2.0 * (levels @ sums) + (counts * levels
                                                     * levels).sum()
        return max(float(rss), 0.0)

    def log_weight_existing(self, n: int, j: int) -> float:
        size = len(self.members[j])
        if self.options.likelihood_off:
            return math.log(size)
        rss = self._profile_rss(n, self.profiles[j])
        if self.options.fix_sigma2:
            sig2 = self.sigma2[n]
            return (math.log(size)
                    - (self.n_loc / 2.0) * (LOG_2PI + math.log(sig2))
                    - rss / (2.0 * sig2))
        a, b = self.hyper.a_sigma, self.hyper.b_sigma
        return (math.log(size) + self._seat_const
                - (self.n_loc / 2.0 + a) * math.log(rss / 2.0 + 1.0 / b))

    def log_weight_new(self, n: int) -> float:
        return math.log(self.alpha0) + float(
            logsumexp(self.log_tp + self.row_lse[n]))

    def new_cluster_table(self, n: int) -> NewClusterTable:
        entries = tuple(
            (self.tables[k], self.row_w[k][n] + self.log_tp[k])
            for k in range(self.k_star + 1))
        return NewClusterTable(n_loc=self.n_loc, w=self.hyper.w,
                               entries=entries)

    # -- the five steps --

    def step1(self) -> None:
        if self.options.fix_partition:
            return
        for n in range(self.n_seq):
            j_old = self.assign[n]
            self.members[j_old].remove(n)
            if not self.members[j_old]:
                del self.members[j_old]
                del self.profiles[j_old]
                for i, a in enumerate(self.assign):
                    if a > j_old:
                        self.assign[i] = a - 1
            self.assign[n] = -1

            log_q0 = self.log_weight_new(n)
            log_qj = np.array([self.log_weight_existing(n, j)
                               for j in range(len(self.profiles))])
            if log_qj.size:
                log_qsum = float(logsumexp(log_qj))
                p_new = math.exp(log_q0 - np.logaddexp(log_q0, log_qsum))
            else:
                p_new = 1.0
            if self.rng.random() < p_new:
                profile = sample_new_profile(
                    self.y[n], self.hyper, float(self.sigma2[n]),
                    self.new_cluster_table(n), self.rng)
                self.profiles.append(profile)
                self.members.append([n])
                self.assign[n] = len(self.profiles) - 1
            else:
                j = sample_categorical_logits(log_qj, self.rng)
                self.members[j].append(n)
                self.assign[n] = j

    def step2(self) -> None:
        if self.options.fix_sigma2:
            return
        a, b = self.hyper.a_sigma, self.hyper.b_sigma
        shape = self.n_loc / 2.0 + a
        rates = np.array([
            self._profile_rss(n, self.profiles[self.assign[n]]) / 2.0
            + 1.0 / b
            for n in range(self.n_seq)])
        self.sigma2 = rates / self.rng.gamma(shape, 1.0, size=self.n_seq)

    def step3(self) -> None:
        for j in range(len(self.profiles)):
            mem = sorted(self.members[j])
            rows = np.asarray(mem)
            prec = 1.0 / self.sigma2[rows]
            total_prec = float(prec.sum())
            sig_logsum = float(np.log(self.sigma2[rows]).sum())
            n_r = rows.size
            current = self.profiles[j].layout.m

            per_k_logv: List[np.ndarray] = []
            per_k_tables: List[LayoutTable] = []
            per_k_sums: List[np.ndarray] = []
            per_k_total = np.empty(self.k_star + 1)
            for k in range(self.k_star + 1):
                tbl = self.tables[k]
                if not tbl.exhaustive and len(current) == k + 1 \
                        and not (tbl.comps == np.asarray(current)).all(1).any():
                    tbl = table_for_budget(
                        self.n_loc, self.hyper.w, k,
                        self.hyper.composition_budget, self.rng,
                        force_include=current)
                sums = tbl.segment_sums(self.c1[rows])   # (n_r, rows_k, k+1)
                if self.options.likelihood_off:
                    log_v = tbl.logmn.astype(float).copy()
                else:
                    resid = (self.yty[rows, None]
                             - (sums * sums / tbl.counts).sum(axis=2))
                    np.maximum(resid, 0.0, out=resid)
                    log_v = (
                        -((n_r * self.n_loc - k - 1) / 2.0) * LOG_2PI
                        - (self.n_loc / 2.0) * sig_logsum
                        - 0.5 * (prec @ resid)
                        - ((k + 1) / 2.0) * math.log(total_prec)
                        - 0.5 * tbl.logdet
                        + tbl.logmn
                    )
                per_k_logv.append(log_v)
                per_k_tables.append(tbl)
                per_k_sums.append(sums)
                per_k_total[k] = self.log_tp[k] + float(logsumexp(log_v))

            k = sample_categorical_logits(per_k_total, self.rng)
            row = sample_categorical_logits(per_k_logv[k], self.rng)
            tbl = per_k_tables[k]
            counts = tbl.counts[row]
            z = prec @ per_k_sums[k][:, row, :]
            mean = z / (total_prec * counts)
            sd = np.sqrt(1.0 / (total_prec * counts))
            levels = self.rng.normal(mean, sd)
            layout = layout_from_lengths(tbl.comps[row], self.hyper.w,
                                         self.n_loc)
            self.profiles[j] = ClusterProfile(
                layout=layout, levels=tuple(float(v) for v in levels))

    def step4(self) -> None:
        if self.options.fix_lambda:
            return
        a, b = self.hyper.a_lambda, self.hyper.b_lambda
        sum_k = sum(self.profiles[j].layout.k for j in self.assign)
        ls = np.arange(self.k_star + 1)
        lgl = gammaln(ls + 1.0)

        def log_target(lam: float) -> float:
            return ((a - 1.0 + sum_k) * math.log(lam) - lam / b
                    - self.n_seq * float(logsumexp(ls * math.log(lam) - lgl)))

        shape = self.options.lambda_proposal_shape

        def log_prop(x: float, center: float) -> float:
            # gamma density with mean `center` evaluated at x
            return (shape * math.log(shape / center) - gammaln(shape)
                    + (shape - 1.0) * math.log(x) - shape * x / center)

        proposal = float(self.rng.gamma(shape, self.lam / shape))
        log_ratio = (log_target(proposal) - log_target(self.lam)
                     + log_prop(self.lam, proposal)
                     - log_prop(proposal, self.lam))
        if self.rng.random() < math.exp(min(log_ratio, 0.0)):
            self.set_lambda(proposal)

    def step5(self) -> None:
        if self.options.fix_alpha0:
            return
        a, b = self.hyper.a_alpha0, self.hyper.b_alpha0
        n_clusters = len(self.profiles)
        u = float(self.rng.beta(self.alpha0 + 1.0, self.n_seq))
        rate = 1.0 / b - math.log(u)
        odds = (a + n_clusters - 1.0) / (self.n_seq * rate)
        pi_u = odds / (1.0 + odds)
        shape = a + n_clusters if self.rng.random() < pi_u \
            else a + n_clusters - 1.0
        self.alpha0 = float(self.rng.gamma(shape, 1.0) / rate)

    # -- snapshots --

    def snapshot_state(self) -> GibbsState:
        return GibbsState(
            assignments=tuple(a + 1 for a in self.assign),
            profiles=tuple(self.profiles),
            sigma2=tuple(float(s) for s in self.sigma2),
            lam=self.lam,
            alpha0=self.alpha0,
        )

    def snapshot_draw(self) -> GibbsDraw:
        return GibbsDraw(
            assignments=tuple(a + 1 for a in self.assign),
            profiles=tuple(self.profiles),
            sigma2=tuple(float(s) for s in self.sigma2),
            lam=self.lam,
            alpha0=self.alpha0,
        )


# --- state validation -----------------------------------------------------------

def validate_state(state: GibbsState, data: SequenceDataset,
                   hyper: Hyperparameters) -> Optional[str]:
    """None when the state is coherent with the data and priors, else the
    first violated condition."""
    n_seq, n_loc = data.values.shape
    if len(state.assignments) != n_seq:
        return "assignments length does not match number of sequences"
    n_clusters = len(state.profiles)
    if n_clusters == 0:
        return "state has no clusters"
    labels = set(state.assignments)
    if labels != set(range(1, n_clusters + 1)):
        return "assignments must cover 1..L with no gaps"
    if len(state.sigma2) != n_seq:
        return "sigma2 length does not match number of sequences"
    if any(s <= 0 or not math.isfinite(s) for s in state.sigma2):
        return "sigma2 entries must be positive and finite"
    if not (state.lam > 0 and math.isfinite(state.lam)):
        return "lambda must be positive and finite"
    if not (state.alpha0 > 0 and math.isfinite(state.alpha0)):
        return "alpha0 must be positive and finite"
    k_star = max_changepoints(n_loc, hyper.w, hyper.k_max_override)
    for idx, prof in enumerate(state.profiles):
        msg = validate_layout(prof.layout)
        if msg is not None:
            return f"profile {idx + 1}: {msg}"
        if prof.layout.n_loc != n_loc:
            return f"profile {idx + 1}: layout length mismatch"
        if prof.layout.w != hyper.w:
            return f"profile {idx + 1}: minimum segment width mismatch"
        if prof.layout.k > k_star:
            return f"profile {idx + 1}: K exceeds k*"
        if len(prof.levels) != prof.layout.k + 1:
            return f"profile {idx + 1}: levels length must be K+1"
        if any(not math.isfinite(v) for v in prof.levels):
            return f"profile {idx + 1}: levels must be finite"
    return None


# --- public step functions -------------------------------------------------------

def _one_step(which: str, state: GibbsState, data: SequenceDataset,
              hyper: Hyperparameters, rng: np.random.Generator,
              options: SamplerOptions) -> GibbsState:
    chain = _Chain(data, hyper, state, rng, options)
    getattr(chain, which)()
    return chain.snapshot_state()


def step1_assignments(state, data, hyper, rng,
                      options: SamplerOptions = DEFAULT_OPTIONS) -> GibbsState:
    """Reseat every sequence once, in index order."""
    return _one_step("step1", state, data, hyper, rng, options)


def step2_variances(state, data, hyper, rng,
                    options: SamplerOptions = DEFAULT_OPTIONS) -> GibbsState:
    """Refresh every sequence's noise variance from its inverse-gamma full
    conditional (shape M/2 + a, rate RSS/2 + 1/b)."""
    return _one_step("step2", state, data, hyper, rng, options)


def step3_profiles(state, data, hyper, rng,
                   options: SamplerOptions = DEFAULT_OPTIONS) -> GibbsState:
    """Refresh every cluster's layout (count, then composition) and levels."""
    return _one_step("step3", state, data, hyper, rng, options)


def step4_lambda(state, data, hyper, rng,
                 options: SamplerOptions = DEFAULT_OPTIONS) -> GibbsState:
    """One Metropolis-Hastings move on the change-point-count rate."""
    return _one_step("step4", state, data, hyper, rng, options)


def step5_alpha0(state, data, hyper, rng,
                 options: SamplerOptions = DEFAULT_OPTIONS) -> GibbsState:
    """Beta-augmented gamma-mixture draw of the seating concentration."""
    return _one_step("step5", state, data, hyper, rng, options)


# --- initialization ---------------------------------------------------------------

def init_state(data: SequenceDataset, hyper: Hyperparameters, mode: str,
               rng: Optional[np.random.Generator] = None, *,
               n_clusters: int = 2, state: Optional[GibbsState] = None,
               truth: Optional[GibbsState] = None, delta_level: float = 1.5,
               delta_tau: int = 2, sigma_factor: float = 2.0,
               sigma_shape: float = 3.0) -> GibbsState:
    """Build a valid starting state.

    mode "random-assign": each sequence uniformly into one of n_clusters
    seats (empty seats dropped), flat single-segment profiles at the cluster
    means, per-sequence sample variances, both rate hyperparameters at 1.
    mode "provided": the given state, validated verbatim.
    mode "perturbed-truth": the given truth state with every segment level
    shifted by delta_level, every interior change point pushed right by
    delta_tau (clamped right-to-left so all segments stay admissible),
    variances redrawn from an inverse-gamma whose mean is sigma_factor times
    the truth's average variance, and both rate hyperparameters reset to 1.
    """
    y = data.values
    n_seq, n_loc = y.shape
    if mode == "provided":
        if state is None:
            raise ValueError("mode 'provided' requires a state")
        msg = validate_state(state, data, hyper)
        if msg is not None:
            raise ValueError(msg)
        return state

    if mode == "random-assign":
        if rng is None:
            raise ValueError("mode 'random-assign' requires an rng")
        raw = rng.integers(0, n_clusters, size=n_seq)
        used = sorted(set(int(v) for v in raw))
        relabel = {old: new for new, old in enumerate(used)}
        assign = tuple(relabel[int(v)] + 1 for v in raw)
        flat = layout_from_lengths((n_loc - 1 - hyper.w,), hyper.w, n_loc)
        profiles = []
        for j in range(len(used)):
            rows = [n for n, a in enumerate(assign) if a == j + 1]
            profiles.append(ClusterProfile(
                layout=flat, levels=(float(np.mean(y[rows])),)))
        sigma2 = tuple(float(np.var(row, ddof=1)) for row in y)
        return GibbsState(assignments=assign, profiles=tuple(profiles),
                          sigma2=sigma2, lam=1.0, alpha0=1.0)

    if mode == "perturbed-truth":
        if truth is None or rng is None:
            raise ValueError("mode 'perturbed-truth' requires truth and rng")
        profiles = []
        for prof in truth.profiles:
            lay = prof.layout
            tau = list(lay.tau)
            for l in range(lay.k, 0, -1):
                tau[l] = min(tau[l] + delta_tau, tau[l + 1] - hyper.w)
            m = tuple(int(tau[l + 1] - tau[l] - hyper.w)
                      for l in range(lay.k + 1))
            layout = layout_from_lengths(m, hyper.w, n_loc)
            levels = tuple(v + delta_level for v in prof.levels)
            profiles.append(ClusterProfile(layout=layout, levels=levels))
        target_mean = sigma_factor * float(np.mean(truth.sigma2))
        rate = (sigma_shape - 1.0) * target_mean
        sigma2 = tuple(float(rate / g)
                       for g in rng.gamma(sigma_shape, 1.0, size=n_seq))
        cand = GibbsState(assignments=truth.assignments,
                          profiles=tuple(profiles), sigma2=sigma2,
                          lam=1.0, alpha0=1.0)
        msg = validate_state(cand, data, hyper)
        if msg is not None:
            raise ValueError(f"perturbed truth is invalid: {msg}")
        return cand

    raise ValueError(f"unknown init mode: {mode!r}")


# --- chain drivers ----------------------------------------------------------------

def run_chain(data: SequenceDataset, hyper: Hyperparameters,
              init: GibbsState, iters: int, burnin_frac: float, stride: int,
              seed: int, options: SamplerOptions = DEFAULT_OPTIONS
              ) -> ChainOutput:
    """One chain: steps 1-5 per iteration, post-burn-in thinned snapshots.

    A 1-based iteration i is retained when i > floor(iters * burnin_frac)
    and (i - burnin) is a multiple of stride.  Fully determined by the seed.
    """
    if iters < 0:
        raise ValueError("iters must be nonnegative")
    if not (0.0 <= burnin_frac < 1.0):
        raise ValueError("burnin_frac must lie in [0, 1)")
    if stride < 1:
        raise ValueError("stride must be a positive integer")
    t0 = time.perf_counter()
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    chain = _Chain(data, hyper, init, rng, options)
    burnin = math.floor(iters * burnin_frac)
    draws: List[GibbsDraw] = []
    for i in range(1, iters + 1):
        chain.step1()
        chain.step2()
        chain.step3()
        chain.step4()
        chain.step5()
        if i > burnin and (i - burnin) % stride == 0:
            draws.append(chain.snapshot_draw())
    meta = ChainMeta(seed=seed, iters=iters, burnin_frac=burnin_frac,
                     stride=stride, wall_clock_s=time.perf_counter() - t0)
    return ChainOutput(draws=tuple(draws), meta=meta)


def _chain_job(args) -> ChainOutput:
    data, hyper, init, iters, burnin_frac, stride, seed, options = args
    return run_chain(data, hyper, init, iters, burnin_frac, stride, seed,
                     options)


def run_chains(data: SequenceDataset, hyper: Hyperparameters,
               inits: Sequence[GibbsState], iters: int, burnin_frac: float,
               stride: int, seeds: Sequence[int], worker_count: int = 1,
               options: SamplerOptions = DEFAULT_OPTIONS
               ) -> List[ChainOutput]:
    """Independent chains, one per (init, seed) pair, outputs in input order.

    Each chain is a pure function of its own arguments, so results are
    identical for any worker_count.
    """
    if len(inits) != len(seeds):
        raise ValueError("one seed per init required")
    jobs = [(data, hyper, init, iters, burnin_frac, stride, seed, options)
            for init, seed in zip(inits, seeds)]
    if worker_count <= 1 or len(jobs) <= 1:
        return [_chain_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(worker_count, len(jobs))) as ex:
        return list(ex.map(_chain_job, jobs))
