"""Simulation and analysis toolkit for pairwise interaction protocols on
graphs: exact-majority dynamics, annihilation/charge dynamics, interaction-
counting clocks, and the spectral quantities that govern their running
times."""

__version__ = "0.1.0"

from .clock import (
    ClockParams,
    PhaseClockReport,
    PhaseTrace,
    calibrate_broadcast_constant,
    clock_params_for_graph,
    derive_clock_params,
    detect_sync_steps,
    enumerate_clock_states,
    measure_tick_gaps,
    phase_clock_window,
    phase_update,
    solve_J,
    validate_phase_clock,
)
from .dynamics import (
    ClearingResult,
    DominationResult,
    ExtinctionResult,
    InfluenceResult,
    annihilation_protocol,
    annihilation_z,
    assign_inputs,
    four_state_protocol,
    four_state_stabilized,
    majority_split,
    measure_clearing_time,
    measure_extinction_time,
    run_domination_coupling,
    track_influence,
)
from .engine import (
    CountCondition,
    ProtocolSpec,
    RunResult,
    StoppingRule,
    Trace,
    run_continuous,
    run_discrete,
    run_discrete_reference,
)
from .experiments import (
    ConfigError,
    ExperimentConfig,
    ExperimentResult,
    ScalingReport,
    SummaryStats,
    TrialRecord,
    default_horizon,
    majority_default_horizon,
    run_experiment,
    scaling_report,
    state_count_audit,
    summarize,
    theory_bound,
    write_records_jsonl,
    write_summary_csv,
)
from .graphs import (
    GRAPH_FAMILIES,
    Graph,
    GraphParameterError,
    bfs_distances,
    build_graph,
    complete_graph,
    cycle_graph,
    diameter,
    edge_expansion,
    graph_from_edgelist,
    graph_from_json,
    graph_to_edgelist,
    graph_to_json,
    grid_graph,
    lollipop_graph,
    path_graph,
    random_regular_graph,
    star_graph,
    validate_graph,
)
from .majority import (
    MajorityParams,
    MajorityToken,
    StabilizationResult,
    SyncRecord,
    certified_stabilized,
    doubling_checks,
    init_words,
    interact,
    interact_reference,
    majority_params_for_graph,
    measure_stabilization,
    pack_token,
    phase_study_words,
    run_majority,
    theta_cap,
    token_output,
    token_potential_scaled,
    total_potential,
    unpack_token,
)
from .rng import RandomStream, derive_key, mix64
from .spectral import (
    SpectralSummary,
    build_RS,
    generator_matrix,
    lambda_top,
    population_walk_matrix,
    relaxation_time,
    restricted_generator,
    rs_spectrum_check,
    spectral_sandwich_check,
    spectral_summary,
    verify_lambda_RS_bound,
    walk_eigenvalues,
)

__all__ = [name for name in dir() if not name.startswith("_")]
