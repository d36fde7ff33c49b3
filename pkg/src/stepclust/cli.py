"""Command-line entry points: simulate, fit, summarize, oracle-check, bench.

Data travels as wide CSV (one row per sequence: id column then one column
per location); configs, chain draws, states, and summaries as JSON.  Every
run directory records the resolved configuration, the seeds actually used,
and the package version, so any output can be regenerated exactly.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .combinatorics import layout_from_lengths, max_changepoints
from .diagnostics import (
    canonical_partition,
    rhat_table,
    summarize,
)
from .model import (
    ChainMeta,
    ChainOutput,
    ClusterProfile,
    GibbsDraw,
    GibbsState,
    Hyperparameters,
    SequenceDataset,
    make_layout,
)
from .oracle import (
    crp_log_prob,
    dense_log_group_marginal,
    dense_log_marginal_layout,
    dense_residual_ss,
    exact_partition_posterior,
    exact_segmentation_posterior,
    set_partitions,
)
from .sampler import SamplerOptions, _chain_job, init_state, run_chain, run_chains
from .simulate import (
    GroundTruth,
    generate_dataset,
    layout_from_changepoints,
    moving_median,
    rolling_median,
    spec_from_dict,
)


class ConfigError(Exception):
    """Bad configuration or flags (exit 2)."""


class DataError(Exception):
    """Malformed or inconsistent input data (exit 3)."""


# --- serialization ----------------------------------------------------------------

def profile_to_dict(p: ClusterProfile) -> dict:
    return {"k": p.layout.k, "tau": list(p.layout.tau), "m": list(p.layout.m),
            "w": p.layout.w, "n_loc": p.layout.n_loc,
            "levels": list(p.levels)}


def profile_from_dict(d: dict) -> ClusterProfile:
    layout = make_layout(int(d["k"]), tuple(d["tau"]), tuple(d["m"]),
                         int(d["w"]), int(d["n_loc"]))
    return ClusterProfile(layout=layout,
                          levels=tuple(float(v) for v in d["levels"]))


def state_to_dict(s: GibbsState) -> dict:
    return {"assignments": list(s.assignments),
            "profiles": [profile_to_dict(p) for p in s.profiles],
            "sigma2": list(s.sigma2), "lam": s.lam, "alpha0": s.alpha0}


def state_from_dict(d: dict) -> GibbsState:
    return GibbsState(
        assignments=tuple(int(a) for a in d["assignments"]),
        profiles=tuple(profile_from_dict(p) for p in d["profiles"]),
        sigma2=tuple(float(v) for v in d["sigma2"]),
        lam=float(d["lam"]), alpha0=float(d["alpha0"]))


def truth_to_dict(t: GroundTruth) -> dict:
    return {"assignments": list(t.assignments),
            "profiles": [profile_to_dict(p) for p in t.profiles],
            "sigma2": list(t.sigma2)}


def truth_from_dict(d: dict) -> GroundTruth:
    return GroundTruth(
        assignments=tuple(int(a) for a in d["assignments"]),
        profiles=tuple(profile_from_dict(p) for p in d["profiles"]),
        sigma2=tuple(float(v) for v in d["sigma2"]))


def chain_output_to_dict(co: ChainOutput) -> dict:
    return {
        "meta": {"seed": co.meta.seed, "iters": co.meta.iters,
                 "burnin_frac": co.meta.burnin_frac,
                 "stride": co.meta.stride,
                 "wall_clock_s": co.meta.wall_clock_s},
        "draws": [
            {"assignments": list(d.assignments),
             "profiles": [profile_to_dict(p) for p in d.profiles],
             "sigma2": list(d.sigma2), "lam": d.lam, "alpha0": d.alpha0}
            for d in co.draws
        ],
    }


def chain_output_from_dict(d: dict) -> ChainOutput:
    meta = ChainMeta(seed=int(d["meta"]["seed"]),
                     iters=int(d["meta"]["iters"]),
                     burnin_frac=float(d["meta"]["burnin_frac"]),
                     stride=int(d["meta"]["stride"]),
                     wall_clock_s=float(d["meta"]["wall_clock_s"]))
    draws = tuple(
        GibbsDraw(
            assignments=tuple(int(a) for a in dd["assignments"]),
            profiles=tuple(profile_from_dict(p) for p in dd["profiles"]),
            sigma2=tuple(float(v) for v in dd["sigma2"]),
            lam=float(dd["lam"]), alpha0=float(dd["alpha0"]))
        for dd in d["draws"])
    return ChainOutput(draws=draws, meta=meta)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1) + "\n")


def _read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"missing file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc


# --- CSV data ---------------------------------------------------------------------

def write_data_csv(path: Path, data: SequenceDataset) -> None:
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["sequence_id", *data.location_ids])
        for sid, row in zip(data.sequence_ids, data.values):
            wr.writerow([sid, *[repr(float(v)) for v in row]])


def read_data_csv(path: Path) -> SequenceDataset:
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError as exc:
        raise DataError(f"missing data file: {path}") from exc
    if len(rows) < 2:
        raise DataError("data file needs a header row and at least one row")
    header = rows[0]
    n_loc = len(header) - 1
    ids: List[str] = []
    values = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != n_loc + 1:
            rid = row[0] if row else "?"
            raise DataError(
                f"row {i} ({rid}) has {len(row) - 1} values, "
                f"expected {n_loc}")
        ids.append(row[0])
        try:
            values.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise DataError(f"row {i} ({row[0]}): {exc}") from exc
    try:
        return SequenceDataset(values=np.array(values, dtype=float),
                               sequence_ids=tuple(ids),
                               location_ids=tuple(header[1:]))
    except ValueError as exc:
        raise DataError(str(exc)) from exc


# --- window preprocessing -----------------------------------------------------------

def parse_window(text: str) -> Optional[Tuple[str, int]]:
    if text == "off":
        return None
    for prefix, name in (("block:", "block"), ("roll:", "roll")):
        if text.startswith(prefix):
            try:
                return name, int(text[len(prefix):])
            except ValueError:
                break
    raise ConfigError(f"bad --window value {text!r}; use off, block:k, "
                      "or roll:k")


def apply_window(data: SequenceDataset,
                 window: Optional[Tuple[str, int]]) -> SequenceDataset:
    if window is None:
        return data
    mode, size = window
    try:
        fn = moving_median if mode == "block" else rolling_median
        values = np.stack([fn(row, size) for row in data.values])
    except ValueError as exc:
        raise ConfigError(f"window: {exc}") from exc
    return SequenceDataset(
        values=values, sequence_ids=data.sequence_ids,
        location_ids=tuple(f"w{j}" for j in range(values.shape[1])))


# --- config ------------------------------------------------------------------------

def hyper_from_config(cfg: dict, args) -> Hyperparameters:
    h = dict(cfg.get("hyper", {}))
    if getattr(args, "kmax", None) is not None:
        h["k_max_override"] = args.kmax
    if getattr(args, "composition_budget", None) is not None:
        h["composition_budget"] = args.composition_budget
    allowed = {"a_sigma", "b_sigma", "a_lambda", "b_lambda", "a_alpha0",
               "b_alpha0", "w", "k_max_override", "composition_budget"}
    unknown = set(h) - allowed
    if unknown:
        raise ConfigError(f"unknown hyperparameter keys: {sorted(unknown)}")
    try:
        return Hyperparameters(**h)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid hyperparameters: {exc}") from exc


def _int_setting(cfg: dict, args, name: str, default: int) -> int:
    cli_val = getattr(args, name, None)
    if cli_val is not None:
        return cli_val
    return int(cfg.get(name, default))


# --- subcommands ---------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _read_json(Path(args.config))
    if "scenario" not in cfg:
        raise ConfigError("simulate config needs a 'scenario' section")
    try:
        spec = spec_from_dict(cfg["scenario"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad scenario: {exc}") from exc
    n_datasets = int(cfg.get("n_datasets", 1))
    seed_base = args.seed_base if args.seed_base is not None \
        else int(cfg.get("seed_base", 0))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = []
    for i in range(n_datasets):
        seed = seed_base + i
        seeds.append(seed)
        data, truth = generate_dataset(spec, seed)
        write_data_csv(out / f"data_{i:03d}.csv", data)
        _write_json(out / f"truth_{i:03d}.json", truth_to_dict(truth))
    _write_json(out / "simulate_run.json", {
        "version": __version__, "config": cfg, "seed_base": seed_base,
        "seeds": seeds, "n_datasets": n_datasets})
    print(f"wrote {n_datasets} dataset(s) to {out}")
    return 0


def _build_inits(data: SequenceDataset, hyper: Hyperparameters,
                 init_cfg: dict, n_chains: int, seed_base: int
                 ) -> List[GibbsState]:
    mode = init_cfg.get("mode", "random-assign")
    if mode == "random-assign":
        n_clusters = int(init_cfg.get("n_clusters", 2))
        return [
            init_state(data, hyper, "random-assign",
                       np.random.default_rng(
                           np.random.SeedSequence([seed_base, 777, c])),
                       n_clusters=n_clusters)
            for c in range(n_chains)
        ]
    if mode == "provided":
        if "path" not in init_cfg:
            raise ConfigError("provided init needs a 'path'")
        state = state_from_dict(_read_json(Path(init_cfg["path"])))
        try:
            return [init_state(data, hyper, "provided", state=state)
                    for _ in range(n_chains)]
        except ValueError as exc:
            raise ConfigError(f"invalid provided state: {exc}") from exc
    raise ConfigError(f"unknown init mode {mode!r}")


def cmd_fit(args) -> int:
    data = read_data_csv(Path(args.data))
    cfg = _read_json(Path(args.config)) if args.config else {}
    window = parse_window(args.window) if args.window is not None \
        else (parse_window(cfg["window"]) if "window" in cfg else None)
    data = apply_window(data, window)
    hyper = hyper_from_config(cfg, args)
    n_chains = _int_setting(cfg, args, "chains", 2)
    iters = _int_setting(cfg, args, "iters", 5000)
    stride = _int_setting(cfg, args, "stride", 25)
    burnin_frac = args.burnin if args.burnin is not None \
        else float(cfg.get("burnin_frac", 0.5))
    seed_base = args.seed_base if args.seed_base is not None \
        else int(cfg.get("seed_base", 0))
    if n_chains < 1:
        raise ConfigError("chains must be at least 1")
    if iters < 0 or stride < 1 or not (0.0 <= burnin_frac < 1.0):
        raise ConfigError("iters must be >= 0, stride >= 1, and the "
                          "burn-in fraction in [0, 1)")
    try:
        max_changepoints(data.n_loc, hyper.w, hyper.k_max_override)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    init_cfg = cfg.get("init", {"mode": "random-assign", "n_clusters": 2})
    inits = _build_inits(data, hyper, init_cfg, n_chains, seed_base)
    chain_seeds = [seed_base + c for c in range(n_chains)]
    outputs = run_chains(data, hyper, inits, iters, burnin_frac, stride,
                         chain_seeds, worker_count=args.workers)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for c, co in enumerate(outputs):
        _write_json(out / f"chain_{c:02d}.json", chain_output_to_dict(co))
    resolved = {
        "version": __version__, "command": "fit",
        "data_path": str(Path(args.data).resolve()),
        "window": args.window if args.window is not None
        else cfg.get("window", "off"),
        "hyper": {
            "a_sigma": hyper.a_sigma, "b_sigma": hyper.b_sigma,
            "a_lambda": hyper.a_lambda, "b_lambda": hyper.b_lambda,
            "a_alpha0": hyper.a_alpha0, "b_alpha0": hyper.b_alpha0,
            "w": hyper.w, "k_max_override": hyper.k_max_override,
            "composition_budget": hyper.composition_budget,
        },
        "chains": n_chains, "iters": iters, "burnin_frac": burnin_frac,
        "stride": stride, "seed_base": seed_base,
        "chain_seeds": chain_seeds, "init": init_cfg,
    }
    _write_json(out / "run.json", resolved)
    total = sum(len(co.draws) for co in outputs)
    print(f"fit: {n_chains} chain(s), {total} retained draws -> {out}")
    return 0


def cmd_summarize(args) -> int:
    run_dir = Path(args.out)
    chain_paths = sorted(run_dir.glob("chain_*.json"))
    if not chain_paths:
        raise DataError(f"no chain files in {run_dir}")
    chains = [chain_output_from_dict(_read_json(p)) for p in chain_paths]
    pooled = [d for co in chains for d in co.draws]
    if len(pooled) < 2:
        raise DataError("need at least two retained draws to summarize")

    truth_assign = truth_sigma2 = None
    if args.truth:
        truth = truth_from_dict(_read_json(Path(args.truth)))
        truth_assign = truth.assignments
        truth_sigma2 = truth.sigma2
    record = summarize(pooled, truth_assignments=truth_assign,
                       truth_sigma2=truth_sigma2)

    rhat: Dict[str, Optional[float]] = {}
    per_chain = [co.draws for co in chains]
    if len(per_chain) >= 2 and min(len(ds) for ds in per_chain) >= 10 \
            and len({len(ds) for ds in per_chain}) == 1:
        rhat = rhat_table(per_chain)

    _write_json(run_dir / "summary.json", {
        "version": __version__, "summary": record.to_dict(),
        "rhat": rhat})
    with (run_dir / "summary.csv").open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["parameter", "mean", "se", "ci_low", "ci_high",
                     "ci_size"])

        def row(name, s):
            wr.writerow([name, repr(s.mean), repr(s.se), repr(s.ci_low),
                         repr(s.ci_high), repr(s.ci_high - s.ci_low)])

        row("lambda", record.lam)
        row("alpha0", record.alpha0)
        for n, s in enumerate(record.sigma2):
            row(f"sigma2[{n}]", s)
        for c in record.clusters:
            for l, s in enumerate(c.levels):
                row(f"alpha[{c.label}][{l + 1}]", s)
    with (run_dir / "rhat.csv").open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["parameter", "rhat"])
        for name, val in rhat.items():
            wr.writerow([name, "" if val is None else repr(val)])

    msg = (f"clusters (mode): {record.n_clusters_mode}; "
           f"modal partition seen {record.modal_partition_count}"
           f"/{record.n_draws}")
    if record.v_measure_vs_truth is not None:
        msg += f"; V-measure vs truth: {record.v_measure_vs_truth:.4f}"
    print(msg)
    return 0


# --- oracle-check suites --------------------------------------------------------------

def _tv(p: Dict, q: Dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def _segmentation_instance():
    hyper = Hyperparameters(w=2)
    layout = layout_from_changepoints((4,), 2, 7)
    rng = np.random.default_rng(np.random.SeedSequence(11))
    y = ClusterProfile(layout=layout, levels=(0.5, 2.0)).step_values() \
        + rng.normal(0.0, 0.3, 7)
    return y, hyper


def suite_segmentation(n_draws: int = 20000) -> List[Tuple[str, bool, str]]:
    """Alternate the variance and layout steps on one sequence; the layout
    frequencies must match the exhaustive enumeration posterior."""
    y, hyper = _segmentation_instance()
    target = exact_segmentation_posterior(y, hyper, lam=1.0)
    data = SequenceDataset.from_values(y[None, :])
    flat = layout_from_changepoints((), hyper.w, 7)
    init = GibbsState(assignments=(1,),
                      profiles=(ClusterProfile(layout=flat,
                                               levels=(float(y.mean()),)),),
                      sigma2=(0.05,), lam=1.0, alpha0=1.0)
    opts = SamplerOptions(fix_partition=True, fix_lambda=True,
                          fix_alpha0=True)
    out = run_chain(data, hyper, init, iters=n_draws, burnin_frac=0.0,
                    stride=1, seed=2024, options=opts)
    freq: Counter = Counter()
    for d in out.draws:
        lay = d.profiles[0].layout
        freq[(lay.k, lay.change_points)] += 1
    emp = {k: v / len(out.draws) for k, v in freq.items()}
    tv = _tv(emp, target)
    return [("segmentation posterior TV", tv < 0.05,
             f"TV={tv:.4f} (tol 0.05, {n_draws} draws)")]


def _partition_instance():
    hyper = Hyperparameters(w=3)
    lay_a = layout_from_changepoints((5,), 3, 12)
    prof_a = ClusterProfile(layout=lay_a, levels=(0.0, 3.0))
    lay_b = layout_from_changepoints((8,), 3, 12)
    prof_b = ClusterProfile(layout=lay_b, levels=(10.0, 6.0))
    rng = np.random.default_rng(np.random.SeedSequence(5))
    rows = np.stack([
        prof_a.step_values() + rng.normal(0.0, 0.05, 12),
        prof_a.step_values() + rng.normal(0.0, 0.05, 12),
        prof_b.step_values() + rng.normal(0.0, 0.05, 12),
    ])
    sigma2 = (0.05, 0.05, 0.05)
    return SequenceDataset.from_values(rows), hyper, sigma2


def suite_partition(n_draws: int = 50000) -> List[Tuple[str, bool, str]]:
    """Reseat and layout sampling at fixed variances on three sequences (a
    near-identical pair plus a distant one) against the exhaustive
    enumeration posterior over set partitions."""
    data, hyper, sigma2 = _partition_instance()
    target = exact_partition_posterior(data.values, hyper, sigma2,
                                       lam=1.0, alpha0=1.0).partition
    flat = layout_from_changepoints((), hyper.w, 12)
    init = GibbsState(
        assignments=(1, 1, 1),
        profiles=(ClusterProfile(layout=flat,
                                 levels=(float(data.values.mean()),)),),
        sigma2=sigma2, lam=1.0, alpha0=1.0)
    opts = SamplerOptions(fix_sigma2=True, fix_lambda=True, fix_alpha0=True)
    burnin = n_draws // 10
    out = run_chain(data, hyper, init, iters=n_draws + burnin,
                    burnin_frac=burnin / (n_draws + burnin), stride=1,
                    seed=77, options=opts)
    freq: Counter = Counter()
    for d in out.draws:
        freq[tuple(l - 1 for l in canonical_partition(d.assignments))] += 1
    emp = {k: v / len(out.draws) for k, v in freq.items()}
    tv = _tv(emp, target)
    return [("partition posterior TV", tv < 0.05,
             f"TV={tv:.4f} (tol 0.05, {len(out.draws)} draws)")]


def suite_crp() -> List[Tuple[str, bool, str]]:
    checks = []
    singletons = math.exp(crp_log_prob((0, 1, 2), 1.0, 3))
    one_block = math.exp(crp_log_prob((0, 0, 0), 1.0, 3))
    checks.append(("CRP N=3 singletons = 1/6",
                   math.isclose(singletons, 1 / 6, rel_tol=1e-12),
                   f"{singletons:.12f}"))
    checks.append(("CRP N=3 one block = 1/3",
                   math.isclose(one_block, 1 / 3, rel_tol=1e-12),
                   f"{one_block:.12f}"))
    for alpha0 in (0.5, 1.0, 3.7):
        total = sum(math.exp(crp_log_prob(p, alpha0, 4))
                    for p in set_partitions(4))
        checks.append((f"CRP N=4 normalizes (alpha0={alpha0})",
                       abs(total - 1.0) < 1e-12, f"sum={total:.14f}"))
    data, hyper, sigma2 = _partition_instance()
    post = exact_partition_posterior(data.values, hyper, sigma2, 1.0, 1.0)
    total = sum(post.joint.values())
    checks.append(("partition oracle normalizes",
                   abs(total - 1.0) < 1e-12, f"sum={total:.14f}"))
    y, hyper7 = _segmentation_instance()
    seg = exact_segmentation_posterior(y, hyper7, 1.0)
    total = sum(seg.values())
    checks.append(("segmentation oracle normalizes",
                   abs(total - 1.0) < 1e-12, f"sum={total:.14f}"))
    return checks


def suite_densepath(n_instances: int = 200) -> List[Tuple[str, bool, str]]:
    """Diagonal fast path vs dense design-matrix path on random instances."""
    from .marginals import (log_group_marginal, log_marginal_layout)
    from .model import residual_ss
    rng = np.random.default_rng(np.random.SeedSequence(123))
    worst = 0.0
    for _ in range(n_instances):
        n_loc = int(rng.integers(8, 31))
        w = int(rng.integers(2, max(3, n_loc // 4)))
        k_star = max(0, (n_loc - 2 - w) // w)
        k = int(rng.integers(0, k_star + 1))
        m0 = n_loc - 1 - (k + 1) * w
        cuts = np.sort(rng.integers(0, m0 + 1, size=k))
        parts = np.diff(np.concatenate(([0], cuts, [m0])))
        layout = layout_from_lengths(tuple(int(v) for v in parts), w, n_loc)
        hyper = Hyperparameters(w=w)
        n_mem = int(rng.integers(1, 6))
        ys = rng.normal(0.0, 2.0, size=(n_mem, n_loc))
        sig2 = rng.uniform(0.05, 2.0, size=n_mem)
        levels = rng.normal(0.0, 2.0, size=k + 1)

        pairs = [
            (log_marginal_layout(ys[0], layout, hyper),
             dense_log_marginal_layout(ys[0], layout, hyper)),
            (log_group_marginal(ys, sig2, layout),
             dense_log_group_marginal(ys, sig2, layout)),
            (residual_ss(ys[0], layout, levels),
             dense_residual_ss(ys[0], layout, levels)),
        ]
        for fast, dense in pairs:
            scale = max(abs(fast), abs(dense), 1e-30)
            worst = max(worst, abs(fast - dense) / scale)
    return [("fast path vs dense path", worst < 1e-10,
             f"max relative error {worst:.3e} over {n_instances} instances")]


_SUITES = {
    "crp": suite_crp,
    "segmentation": suite_segmentation,
    "partition": suite_partition,
    "densepath": suite_densepath,
}


def cmd_oracle_check(args) -> int:
    names = list(_SUITES) if args.suite == "all" else [args.suite]
    all_ok = True
    for name in names:
        for label, ok, detail in _SUITES[name]():
            all_ok &= ok
            print(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
    if not all_ok:
        raise RuntimeError("oracle checks failed")
    return 0


# --- bench ------------------------------------------------------------------------

def _bench_dataset(spec_dict: dict, hyper: Hyperparameters, seed_base: int,
                   index: int, n_chains: int):
    """Build one dataset's (data, truth, inits, seeds) bundle."""
    spec = spec_from_dict(spec_dict)
    data, truth = generate_dataset(spec, seed_base + 1000 + index)
    truth_state = truth.to_state()
    inits = [init_state(data, hyper, "provided", state=truth_state)]
    perturb_rng = np.random.default_rng(
        np.random.SeedSequence([seed_base, 2000, index]))
    inits.append(init_state(data, hyper, "perturbed-truth", perturb_rng,
                            truth=truth_state))
    while len(inits) < n_chains:
        inits.append(init_state(
            data, hyper, "random-assign",
            np.random.default_rng(
                np.random.SeedSequence([seed_base, 3000, index,
                                        len(inits)]))))
    inits = inits[:n_chains]
    seeds = [seed_base + 100 + index * n_chains + c for c in range(n_chains)]
    return data, truth, inits, seeds


def cmd_bench(args) -> int:
    cfg = _read_json(Path(args.config))
    if "scenarios" not in cfg:
        raise ConfigError("bench config needs a 'scenarios' list")
    hyper = hyper_from_config(cfg, args)
    iters = _int_setting(cfg, args, "iters", 5000)
    stride = _int_setting(cfg, args, "stride", 25)
    n_chains = _int_setting(cfg, args, "chains", 2)
    burnin_frac = args.burnin if args.burnin is not None \
        else float(cfg.get("burnin_frac", 0.5))
    seed_base = args.seed_base if args.seed_base is not None \
        else int(cfg.get("seed_base", 0))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    bundles = []
    for s_idx, scen in enumerate(cfg["scenarios"]):
        n_datasets = int(scen.get("n_datasets", 1))
        spec_dict = {k: v for k, v in scen.items() if k != "n_datasets"}
        for d_idx in range(n_datasets):
            index = s_idx * 1000 + d_idx
            try:
                bundles.append((s_idx, d_idx) + _bench_dataset(
                    spec_dict, hyper, seed_base, index, n_chains))
            except ValueError as exc:
                raise ConfigError(f"scenario {s_idx}: {exc}") from exc

    jobs = []
    for (_, _, data, _, inits, seeds) in bundles:
        for init, seed in zip(inits, seeds):
            jobs.append((data, hyper, init, iters, burnin_frac, stride,
                         seed, SamplerOptions()))
    t0 = time.perf_counter()
    if args.workers <= 1:
        results = [_chain_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.workers) as ex:
            results = list(ex.map(_chain_job, jobs))
    wall = time.perf_counter() - t0

    rows = []
    pos = 0
    for (s_idx, d_idx, data, truth, inits, seeds) in bundles:
        outputs = results[pos:pos + len(seeds)]
        pos += len(seeds)
        pooled = [d for co in outputs for d in co.draws]
        record = summarize(pooled, truth_assignments=truth.assignments,
                           truth_sigma2=truth.sigma2)
        rows.append({
            "scenario": s_idx, "dataset": d_idx,
            "n_seq": data.n_seq, "n_loc": data.n_loc,
            "n_clusters_mode": record.n_clusters_mode,
            "v_measure": record.v_measure_vs_truth,
            "sigma2_mad": record.sigma2_mad,
            "change_points_mode": [list(c.change_points_mode)
                                   for c in record.clusters],
            "levels_mean": [[s.mean for s in c.levels]
                            for c in record.clusters],
            "chain_seconds": [co.meta.wall_clock_s for co in outputs],
        })
    _write_json(out / "bench_results.json", {
        "version": __version__, "config": cfg, "seed_base": seed_base,
        "wall_clock_s": wall, "rows": rows})
    with (out / "bench_table.csv").open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["scenario", "dataset", "n_seq", "n_loc",
                     "n_clusters_mode", "v_measure", "sigma2_mad",
                     "change_points_mode", "seconds"])
        for r in rows:
            wr.writerow([r["scenario"], r["dataset"], r["n_seq"],
                         r["n_loc"], r["n_clusters_mode"],
                         r["v_measure"], r["sigma2_mad"],
                         json.dumps(r["change_points_mode"]),
                         sum(r["chain_seconds"])])
    print(f"bench: {len(rows)} dataset(s) in {wall:.1f}s -> {out}")
    return 0


# --- entry point -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="stepclust",
        description="Cluster ordered sequences by shared piecewise-constant "
                    "change-point profiles.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common_fit_flags(sp):
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--seed-base", type=int, default=None)
        sp.add_argument("--chains", type=int, default=None)
        sp.add_argument("--iters", type=int, default=None)
        sp.add_argument("--burnin", type=float, default=None,
                        help="burn-in fraction in [0,1)")
        sp.add_argument("--stride", type=int, default=None)
        sp.add_argument("--kmax", type=int, default=None)
        sp.add_argument("--composition-budget", type=int, default=None)

    sp = sub.add_parser("simulate", help="generate scenario datasets")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed-base", type=int, default=None)

    sp = sub.add_parser("fit", help="run the sampler on a dataset")
    sp.add_argument("--data", required=True)
    sp.add_argument("--config", default=None)
    sp.add_argument("--out", required=True)
    sp.add_argument("--window", default=None,
                    help="off | block:k | roll:k")
    common_fit_flags(sp)

    sp = sub.add_parser("summarize", help="summarize a finished run")
    sp.add_argument("--out", required=True, help="run directory")
    sp.add_argument("--truth", default=None)

    sp = sub.add_parser("oracle-check", help="run enumeration oracles")
    sp.add_argument("--suite", default="all",
                    choices=["all", *sorted(_SUITES)])

    sp = sub.add_parser("bench", help="scenario benchmark grid")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    common_fit_flags(sp)

    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "fit": cmd_fit,
        "summarize": cmd_summarize,
        "oracle-check": cmd_oracle_check,
        "bench": cmd_bench,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
