"""stepclust: cluster ordered data sequences by shared piecewise-constant
change-point profiles, with a Dirichlet-process mixture sampled by a
five-step Gibbs scheme."""

__version__ = "0.1.0"

from .model import (
    ChainMeta,
    ChainOutput,
    ClusterProfile,
    GibbsDraw,
    GibbsState,
    Hyperparameters,
    SegmentLayout,
    SequenceDataset,
    make_layout,
    residual_ss,
    segment_stats,
    validate_layout,
)
from .combinatorics import (
    compositions,
    count_compositions,
    layout_from_lengths,
    max_changepoints,
    multinomial_logcoef,
    spare_total,
    trunc_poisson_logpmf,
    trunc_poisson_logpmf_all,
)
from .marginals import (
    log_group_marginal,
    log_layout_weight,
    log_marginal_layout,
    log_weight_existing,
    log_weight_new,
    sample_new_profile,
)
from .sampler import (
    SamplerOptions,
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
from .simulate import (
    GroundTruth,
    ScenarioSpec,
    generate_dataset,
    layout_from_changepoints,
    moving_median,
    rolling_median,
    scenario_spec,
)
from .diagnostics import (
    SummaryRecord,
    canonical_partition,
    gelman_rubin,
    relabel,
    summarize,
    v_measure,
)

__all__ = [
    "__version__",
    "ChainMeta", "ChainOutput", "ClusterProfile", "GibbsDraw", "GibbsState",
    "Hyperparameters", "SegmentLayout", "SequenceDataset", "make_layout",
    "residual_ss", "segment_stats", "validate_layout",
    "compositions", "count_compositions", "layout_from_lengths",
    "max_changepoints", "multinomial_logcoef", "spare_total",
    "trunc_poisson_logpmf", "trunc_poisson_logpmf_all",
    "log_group_marginal", "log_layout_weight", "log_marginal_layout",
    "log_weight_existing", "log_weight_new", "sample_new_profile",
    "SamplerOptions", "init_state", "run_chain", "run_chains",
    "step1_assignments", "step2_variances", "step3_profiles",
    "step4_lambda", "step5_alpha0", "validate_state",
    "GroundTruth", "ScenarioSpec", "generate_dataset",
    "layout_from_changepoints", "moving_median", "rolling_median",
    "scenario_spec",
    "SummaryRecord", "canonical_partition", "gelman_rubin", "relabel",
    "summarize", "v_measure",
]
