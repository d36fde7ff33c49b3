"""Gibbs sweep mechanics: per-step conditionals, state invariants, and
joint-consistency (forward vs successive-conditional simulation) checks.
"""

import math

import numpy as np
import pytest
from scipy.special import logsumexp

from stepclust.combinatorics import (
    layout_from_lengths,
    trunc_poisson_logpmf_all,
)
from stepclust.model import (
    ClusterProfile,
    GibbsState,
    Hyperparameters,
    SequenceDataset,
    residual_ss,
)
from stepclust.sampler import (
    SamplerOptions,
    _Chain,
    init_state,
    run_chain,
    run_chains,
    step1_assignments,
    step2_variances,
    step3_profiles,
    step4_lambda,
    step5_alpha0,
    validate_state,
)
from stepclust.simulate import generate_dataset, scenario_spec
from stepclust.utils import batch_means_se

FIX_ALL_BUT_PARTITION = SamplerOptions(fix_sigma2=True, fix_lambda=True,
                                       fix_alpha0=True)
FIX_ALL_BUT_TARGET = SamplerOptions(fix_partition=True, fix_lambda=True,
                                    fix_alpha0=True)


def _two_cluster_instance(noise=0.05, n_per=2, seed=2):
    """Two well-separated flat clusters on 12 locations (w=3)."""
    hyper = Hyperparameters(w=3)
    lay = layout_from_lengths((8,), 3, 12)
    rng = np.random.default_rng(seed)
    rows = np.vstack(
        [np.zeros(12) + rng.normal(0, noise, 12) for _ in range(n_per)]
        + [np.full(12, 8.0) + rng.normal(0, noise, 12) for _ in range(n_per)])
    state = GibbsState(
        assignments=tuple([1] * n_per + [2] * n_per),
        profiles=(ClusterProfile(layout=lay, levels=(0.0,)),
                  ClusterProfile(layout=lay, levels=(8.0,))),
        sigma2=tuple([noise ** 2] * (2 * n_per)),
        lam=1.0, alpha0=1.0)
    return SequenceDataset.from_values(rows), hyper, state


# --- state validation ----------------------------------------------------------------

def test_validate_state_accepts_coherent_state():
    data, hyper, state = _two_cluster_instance()
    assert validate_state(state, data, hyper) is None


def test_validate_state_messages():
    data, hyper, state = _two_cluster_instance()

    def mutate(**kw):
        return GibbsState(**{**state.__dict__, **kw})

    assert validate_state(mutate(assignments=(1, 1, 2)), data, hyper) == \
        "assignments length does not match number of sequences"
    assert validate_state(mutate(assignments=(1, 1, 3, 3)), data, hyper) == \
        "assignments must cover 1..L with no gaps"
    assert validate_state(mutate(sigma2=(0.1, -0.1, 0.1, 0.1)), data,
                          hyper) == "sigma2 entries must be positive and finite"
    assert validate_state(mutate(lam=0.0), data, hyper) == \
        "lambda must be positive and finite"
    assert validate_state(mutate(alpha0=math.inf), data, hyper) == \
        "alpha0 must be positive and finite"
    bad_levels = (ClusterProfile(layout=state.profiles[0].layout,
                                 levels=(0.0, 1.0)),) + state.profiles[1:]
    assert validate_state(mutate(profiles=bad_levels), data, hyper) == \
        "profile 1: levels length must be K+1"


# --- step 2: variance full conditional -------------------------------------------------

def test_step2_inverse_gamma_moments():
    # RSS = 4 against the zero profile: shape M/2+a = 27, rate RSS/2+1/b = 2.001
    hyper = Hyperparameters(w=10)
    flat = layout_from_lengths((39,), 10, 50)
    y = np.zeros((1, 50))
    y[0, 0] = 2.0
    prof = ClusterProfile(layout=flat, levels=(0.0,))
    assert residual_ss(y[0], flat, prof.levels) == pytest.approx(4.0)
    state = GibbsState(assignments=(1,), profiles=(prof,), sigma2=(1.0,),
                       lam=1.0, alpha0=1.0)
    chain = _Chain(SequenceDataset.from_values(y), hyper, state,
                   np.random.default_rng(np.random.SeedSequence(99)),
                   FIX_ALL_BUT_TARGET)
    n = 50000
    draws = np.empty(n)
    for i in range(n):
        chain.step2()
        draws[i] = chain.sigma2[0]
    shape, rate = 27.0, 2.001
    mean = rate / (shape - 1)
    var = rate ** 2 / ((shape - 1) ** 2 * (shape - 2))
    assert abs(draws.mean() - mean) < 3 * draws.std(ddof=1) / math.sqrt(n)
    emp_var = draws.var(ddof=1)
    se_var = math.sqrt(np.var((draws - draws.mean()) ** 2, ddof=1) / n)
    assert abs(emp_var - var) < 3 * se_var


def test_step2_respects_fix_sigma2():
    data, hyper, state = _two_cluster_instance()
    out = step2_variances(state, data, hyper, np.random.default_rng(0),
                          SamplerOptions(fix_sigma2=True))
    assert out.sigma2 == state.sigma2


# --- step 3: profile refresh -----------------------------------------------------------

def test_step3_flat_levels_are_posterior_normal():
    # M=7, w=3 admits only the flat layout: level | sigma2 ~ N(ybar, sigma2/M)
    hyper = Hyperparameters(w=3)
    flat = layout_from_lengths((3,), 3, 7)
    rng = np.random.default_rng(31)
    y = rng.normal(2.0, 1.0, size=(1, 7))
    s2 = 0.5
    state = GibbsState(assignments=(1,),
                       profiles=(ClusterProfile(layout=flat, levels=(0.0,)),),
                       sigma2=(s2,), lam=1.0, alpha0=1.0)
    chain = _Chain(SequenceDataset.from_values(y), hyper, state,
                   np.random.default_rng(np.random.SeedSequence(41)),
                   FIX_ALL_BUT_TARGET)
    n = 20000
    draws = np.empty(n)
    for i in range(n):
        chain.step3()
        draws[i] = chain.profiles[0].levels[0]
    mu, sd = float(y.mean()), math.sqrt(s2 / 7)
    assert abs(draws.mean() - mu) < 3 * sd / math.sqrt(n)
    assert abs(draws.std(ddof=1) - sd) < 3 * sd / math.sqrt(2 * n)


def test_step3_keeps_layout_support_reachable():
    # the refreshed layout always carries k <= k* and exact spare sums
    data, hyper, state = _two_cluster_instance()
    rng = np.random.default_rng(5)
    st = state
    seen_k = set()
    for _ in range(300):
        st = step3_profiles(st, data, hyper, rng, FIX_ALL_BUT_TARGET)
        assert validate_state(st, data, hyper) is None
        seen_k.update(p.layout.k for p in st.profiles)
    assert 0 in seen_k  # flat layouts remain reachable on flat data


# --- step 1: reseating -------------------------------------------------------------------

def test_step1_no_births_when_alpha0_vanishes():
    data, hyper, state = _two_cluster_instance()
    state = GibbsState(**{**state.__dict__, "alpha0": 1e-12})
    chain = _Chain(data, hyper, state,
                   np.random.default_rng(np.random.SeedSequence(7)),
                   FIX_ALL_BUT_PARTITION)
    for _ in range(1000):
        chain.step1()
        assert len(chain.profiles) == 2
    assert validate_state(chain.snapshot_state(), data, hyper) is None


def test_step1_separated_pairs_stay_together():
    # co-clustering frequencies respect the similarity structure: the two
    # near-identical members pair up far more often than either joins the
    # distant one
    from stepclust.cli import _partition_instance
    data, hyper, sigma2 = _partition_instance()
    flat = layout_from_lengths((8,), 3, 12)
    init = GibbsState(assignments=(1, 1, 1),
                      profiles=(ClusterProfile(layout=flat, levels=(5.0,)),),
                      sigma2=sigma2, lam=1.0, alpha0=1.0)
    out = run_chain(data, hyper, init, iters=4000, burnin_frac=0.1, stride=1,
                    seed=123, options=SamplerOptions(fix_sigma2=True,
                                                     fix_lambda=True,
                                                     fix_alpha0=True))
    together = np.zeros(3)  # pairs (0,1), (0,2), (1,2)
    for d in out.draws:
        a = d.assignments
        together += [a[0] == a[1], a[0] == a[2], a[1] == a[2]]
    freq = together / len(out.draws)
    assert freq[0] > 0.9
    assert freq[0] > freq[1] + 0.5
    assert freq[0] > freq[2] + 0.5


# --- steps 4 and 5: rate hyperparameters ---------------------------------------------------

def test_step4_moves_and_respects_fix():
    data, hyper, state = _two_cluster_instance()
    rng = np.random.default_rng(11)
    st = state
    values = set()
    for _ in range(50):
        st = step4_lambda(st, data, hyper, rng)
        assert st.lam > 0
        values.add(st.lam)
    assert len(values) > 1  # the MH chain accepts some proposals
    fixed = step4_lambda(state, data, hyper, rng,
                         SamplerOptions(fix_lambda=True))
    assert fixed.lam == state.lam


def test_step5_moves_and_respects_fix():
    data, hyper, state = _two_cluster_instance()
    rng = np.random.default_rng(12)
    st = state
    values = set()
    for _ in range(50):
        st = step5_alpha0(st, data, hyper, rng)
        assert st.alpha0 > 0
        values.add(st.alpha0)
    assert len(values) > 1
    fixed = step5_alpha0(state, data, hyper, rng,
                         SamplerOptions(fix_alpha0=True))
    assert fixed.alpha0 == state.alpha0


def _trunc_poisson_sample(lam, k_star, rng):
    logp = trunc_poisson_logpmf_all(lam, k_star)
    return int(rng.choice(k_star + 1, p=np.exp(logp - logsumexp(logp))))


def test_step4_joint_consistency():
    # forward simulation of (lambda, counts) vs the Markov chain that
    # alternates count resimulation with the MH rate move; agreeing moments
    # certify the MH kernel targets the intended conditional
    hyper = Hyperparameters(a_lambda=2.0, b_lambda=2.0, w=10)
    n_seq, n_loc, k_star = 4, 50, 3
    rng = np.random.default_rng(np.random.SeedSequence(61))
    n_sweeps = 20000

    fw_lam = rng.gamma(2.0, 2.0, size=n_sweeps)
    fw_k = np.array([
        np.mean([_trunc_poisson_sample(l, k_star, rng) for _ in range(n_seq)])
        for l in fw_lam])

    spare = {k: n_loc - 1 - (k + 1) * 10 for k in range(k_star + 1)}
    prof_by_k = {
        k: ClusterProfile(
            layout=layout_from_lengths((spare[k],) + (0,) * k, 10, n_loc),
            levels=(0.0,) * (k + 1))
        for k in range(k_star + 1)}
    state = GibbsState(assignments=(1, 2, 3, 4),
                       profiles=(prof_by_k[0],) * 4,
                       sigma2=(1.0,) * 4, lam=float(rng.gamma(2.0, 2.0)),
                       alpha0=1.0)
    data = SequenceDataset.from_values(np.zeros((4, n_loc)))
    chain = _Chain(data, hyper, state, rng,
                   SamplerOptions(fix_partition=True, fix_sigma2=True,
                                  fix_alpha0=True))
    suc_lam = np.empty(n_sweeps)
    suc_k = np.empty(n_sweeps)
    for i in range(n_sweeps):
        ks = [_trunc_poisson_sample(chain.lam, k_star, rng)
              for _ in range(n_seq)]
        chain.profiles = [prof_by_k[k] for k in ks]
        chain.step4()
        suc_lam[i] = chain.lam
        suc_k[i] = np.mean(ks)

    for fw, suc in ((fw_lam, suc_lam), (fw_lam ** 2, suc_lam ** 2),
                    (fw_k, suc_k)):
        se = math.sqrt(fw.std(ddof=1) ** 2 / len(fw)
                       + batch_means_se(suc) ** 2)
        assert abs(fw.mean() - suc.mean()) < 3 * se


def test_step5_joint_consistency():
    # same scheme for the seating concentration: partition | alpha0 is CRP,
    # alpha0 | partition is the beta-augmented gamma mixture
    hyper = Hyperparameters(a_alpha0=2.0, b_alpha0=2.0, w=3)
    n_seq = 6
    rng = np.random.default_rng(np.random.SeedSequence(62))
    n_sweeps = 20000

    def crp_n_clusters(alpha0):
        n_clusters = 0
        seated = 0
        for i in range(n_seq):
            if rng.random() < alpha0 / (alpha0 + seated):
                n_clusters += 1
            seated += 1
        return n_clusters

    fw_a = rng.gamma(2.0, 2.0, size=n_sweeps)
    fw_l = np.array([crp_n_clusters(a) for a in fw_a], dtype=float)

    flat = ClusterProfile(layout=layout_from_lengths((8,), 3, 12),
                          levels=(0.0,))
    state = GibbsState(assignments=(1,) * n_seq, profiles=(flat,),
                       sigma2=(1.0,) * n_seq,
                       lam=1.0, alpha0=float(rng.gamma(2.0, 2.0)))
    data = SequenceDataset.from_values(np.zeros((n_seq, 12)))
    chain = _Chain(data, hyper, state, rng,
                   SamplerOptions(fix_partition=True, fix_sigma2=True,
                                  fix_lambda=True))
    suc_a = np.empty(n_sweeps)
    suc_l = np.empty(n_sweeps)
    for i in range(n_sweeps):
        n_clusters = crp_n_clusters(chain.alpha0)
        chain.profiles = [flat] * n_clusters
        chain.step5()
        suc_a[i] = chain.alpha0
        suc_l[i] = n_clusters

    for fw, suc in ((fw_a, suc_a), (fw_a ** 2, suc_a ** 2), (fw_l, suc_l)):
        se = math.sqrt(fw.std(ddof=1) ** 2 / len(fw)
                       + batch_means_se(suc) ** 2)
        assert abs(fw.mean() - suc.mean()) < 3 * se


# --- full sweeps keep the state coherent ---------------------------------------------------

def test_full_sweeps_preserve_state_invariants():
    data, hyper, state = _two_cluster_instance(noise=0.3)
    rng = np.random.default_rng(71)
    st = state
    steps = (step1_assignments, step2_variances, step3_profiles,
             step4_lambda, step5_alpha0)
    for _ in range(100):
        for step in steps:
            st = step(st, data, hyper, rng)
            msg = validate_state(st, data, hyper)
            assert msg is None, msg


# --- chain protocol ----------------------------------------------------------------------

def test_run_chain_retention_schedule():
    data, hyper, state = _two_cluster_instance()
    out = run_chain(data, hyper, state, iters=40, burnin_frac=0.5, stride=4,
                    seed=3)
    # burn-in 20, then every 4th of the remaining 20
    assert len(out.draws) == 5
    assert out.meta.iters == 40
    assert out.meta.seed == 3
    assert out.meta.wall_clock_s >= 0.0

    empty = run_chain(data, hyper, state, iters=0, burnin_frac=0.5, stride=1,
                      seed=3)
    assert len(empty.draws) == 0


def test_run_chain_seed_reproducible():
    data, hyper, state = _two_cluster_instance(noise=0.3)
    a = run_chain(data, hyper, state, iters=150, burnin_frac=0.4, stride=3,
                  seed=17)
    b = run_chain(data, hyper, state, iters=150, burnin_frac=0.4, stride=3,
                  seed=17)
    assert a.payload() == b.payload()
    c = run_chain(data, hyper, state, iters=150, burnin_frac=0.4, stride=3,
                  seed=18)
    assert a.payload() != c.payload()


def test_run_chain_validates_arguments():
    data, hyper, state = _two_cluster_instance()
    with pytest.raises(ValueError):
        run_chain(data, hyper, state, iters=-1, burnin_frac=0.5, stride=1,
                  seed=0)
    with pytest.raises(ValueError):
        run_chain(data, hyper, state, iters=10, burnin_frac=1.5, stride=1,
                  seed=0)
    with pytest.raises(ValueError):
        run_chain(data, hyper, state, iters=10, burnin_frac=0.5, stride=0,
                  seed=0)
    bad = GibbsState(**{**state.__dict__, "lam": -1.0})
    with pytest.raises(ValueError):
        run_chain(data, hyper, bad, iters=10, burnin_frac=0.5, stride=1,
                  seed=0)


def test_run_chains_matches_serial_across_workers():
    data, hyper, state = _two_cluster_instance(noise=0.3)
    inits = [state] * 4
    seeds = [5, 6, 7, 8]
    serial = run_chains(data, hyper, inits, iters=120, burnin_frac=0.5,
                        stride=2, seeds=seeds, worker_count=1)
    parallel = run_chains(data, hyper, inits, iters=120, burnin_frac=0.5,
                          stride=2, seeds=seeds, worker_count=2)
    assert [o.payload() for o in serial] == [o.payload() for o in parallel]
    assert [o.meta.seed for o in serial] == seeds


def test_run_chains_validates_seed_count():
    data, hyper, state = _two_cluster_instance()
    with pytest.raises(ValueError):
        run_chains(data, hyper, [state, state], iters=10, burnin_frac=0.5,
                   stride=1, seeds=[1])


# --- initialization ------------------------------------------------------------------------

def test_init_state_provided_roundtrip_and_validation():
    data, hyper, state = _two_cluster_instance()
    assert init_state(data, hyper, "provided", state=state) == state
    bad = GibbsState(**{**state.__dict__, "alpha0": -2.0})
    with pytest.raises(ValueError):
        init_state(data, hyper, "provided", state=bad)
    with pytest.raises(ValueError):
        init_state(data, hyper, "no-such-mode", np.random.default_rng(0))


def test_init_state_random_assign():
    data, hyper, _ = _two_cluster_instance()
    st = init_state(data, hyper, "random-assign", np.random.default_rng(4),
                    n_clusters=2)
    assert validate_state(st, data, hyper) is None
    for prof in st.profiles:
        assert prof.layout.k == 0
    # flat levels are the cluster means of the assigned members
    for label in set(st.assignments):
        members = [i for i, a in enumerate(st.assignments) if a == label]
        assert st.profiles[label - 1].levels[0] == pytest.approx(
            float(data.values[members].mean()), rel=1e-12)


def test_init_state_random_assign_compacts_empty_labels():
    data, hyper, _ = _two_cluster_instance(n_per=1)  # N=2
    st = init_state(data, hyper, "random-assign", np.random.default_rng(1),
                    n_clusters=5)
    assert validate_state(st, data, hyper) is None
    assert len(st.profiles) <= 2


def test_init_state_perturbed_truth():
    spec = scenario_spec(1)
    data, truth = generate_dataset(spec, 97)
    hyper = Hyperparameters(w=10)
    st = init_state(data, hyper, "perturbed-truth",
                    np.random.default_rng(np.random.SeedSequence(55)),
                    truth=truth.to_state())
    assert validate_state(st, data, hyper) is None
    assert st.assignments == truth.assignments
    # levels shift by a fixed offset, breaks by a fixed nudge (clamped)
    assert [p.levels for p in st.profiles] == [
        (6.5, 21.5, 11.5), (18.5, 11.5, 3.5)]
    assert [p.layout.change_points for p in st.profiles] == [
        (21, 36), (17, 34)]
    for s2, true_s2 in zip(st.sigma2, truth.sigma2):
        assert s2 > 0
        assert s2 != true_s2
