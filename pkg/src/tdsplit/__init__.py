"""Temporal-difference policy evaluation on finite Markov reward chains.

The package solves a fixed policy's induced chain exactly (stationary
distribution, value function, TD fixed points), certifies that the mean
TD update direction is a gradient splitting of an explicit quadratic,
runs the projected/averaged stochastic learners, and evaluates the
closed-form finite-horizon error bounds those runs are compared against.
"""

from .bellman import (
    FixedPoint,
    SplittingCertificate,
    bellman_apply,
    mean_direction_td0,
    mean_direction_td_lambda,
    mean_value,
    progress_identity,
    splitting_certificate_td0,
    splitting_certificate_td_lambda,
    t_lambda_apply,
    t_lambda_tail_bound,
    td0_fixed_point,
    td_lambda_fixed_point,
    true_value,
)
from .bounds import (
    BoundInputs,
    d_norm_bound_rhs,
    dirichlet_bound_rhs,
    envelope_mixing_time,
    mean_adjusted_bound_rhs,
    mean_estimation_burn_in,
    objective_bound_rhs,
    prepare_bound_inputs,
    tau_trace,
    trace_objective_bound_rhs,
)
from .features import (
    FeatureMap,
    features_from_spec,
    fourier_features,
    identity_features,
    make_feature_map,
    random_unit_row_features,
    value_of,
)
from .geometry import (
    SpectralSummary,
    d_inner,
    d_norm_sq,
    dirichlet_sq,
    laplacian,
    project_onto_ones_complement,
    reversibilization,
)
from .harness import (
    BoundComparison,
    ExperimentConfig,
    ExperimentReport,
    compare_bound,
    persist_report,
    read_run_csv,
    recheck_report,
    sweep_gamma,
    write_run_csv,
)
from .learning import (
    LearnerState,
    ProjectionSpec,
    RunResult,
    TDValueEstimator,
    default_radius,
    mean_adjusted_output,
    run_experiment,
    run_mean_adjusted_td0,
    run_trajectory,
    td0_step,
    td_lambda_step,
)
from .mdp import (
    InducedChain,
    Mdp,
    MixingProfile,
    Policy,
    Trajectory,
    garnet_mdp,
    induce_chain,
    load_instance,
    mixing_profile,
    mixing_time,
    random_chain,
    random_policy,
    sample_trajectory,
    save_instance,
    uniform_policy,
    with_gamma,
)

__version__ = "0.1.0"
