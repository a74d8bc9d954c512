"""Simulators and estimators for randomized experiments under network interference."""

from .core import (
    AssignmentMode,
    DivergenceError,
    ExperimentDesign,
    InterferenceSpec,
    LinearOutcomeParams,
    NoiseSpec,
    NonIdentifiableError,
    PanelData,
    PanelValidation,
    SEState,
    SingularFitError,
    StreamFactory,
    TTEReport,
    panel_from_csv,
    panel_to_csv,
    report_from_json,
    report_to_json,
    spawn_stream,
    validate_panel,
)
from .estimation import (
    ClampBounds,
    RecoveredParams,
    equilibrium_bias,
    estimate_tte_from_means,
    estimate_tte_many,
    estimate_tte_trajectory,
    fit_lag1_ols,
    recover_from_means,
    recover_params,
    sample_means,
    tte_equilibrium,
)
from .gaussian_sim import (
    counterfactual_pair,
    draw_treatments,
    sample_fixed_interference,
    simulate_panel,
    simulate_with_truth,
)
from .graphs import (
    Graph,
    degree_histogram,
    gen_er,
    gen_rgg,
    load_edge_list,
    rgg_radius,
    save_edge_list,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    RunResult,
    Scenario,
    coverage_report,
    emit_figure_data,
    run_experiment,
    run_replication,
)
from .inference import (
    CIResult,
    InferenceFailure,
    ResampleSpec,
    default_q,
    resample_tte_ci,
)
from .jsq import draw_poisson_arrivals, run_jsq
from .scenarios import (
    LiMParams,
    MRTParams,
    QueueParams,
    scenario_counterfactual_pair,
    simulate_binary_mrt,
    simulate_jsq_queue,
    simulate_linear_in_means,
)
from .state_evolution import (
    OutcomeFunction,
    QuadratureMethod,
    QuadratureSpec,
    empirical_moments,
    linear_outcome_function,
    se_step_general,
    se_step_linear,
    se_trajectory,
    trajectory_means,
)

__version__ = "0.1.0"
