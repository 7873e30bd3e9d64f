"""Two-timescale stochastic approximation of hybrid inclusions.

Discrete runs on hybrid index domains, step-size schedules and window
calculus, closeness and boundary-layer diagnostics, chain searches, and
a momentum-descent study system, with a CLI driver on top.
"""

__version__ = "0.1.0"

from .chains import (
    Chain,
    ChainLeg,
    ChainSearchError,
    InvarianceReport,
    chain_to_json,
    find_chain,
    simulate_solution_leg,
    validate_chain,
    weak_invariance_spot_check,
)
from .config import ConfigError, DEFAULT_CONFIG, load_config, parse_config_text
from .diagnostics import (
    ClosenessResult,
    ClosenessTrace,
    GraphContainmentTrace,
    RescaledDriftTrace,
    TrackingErrorTrace,
    boundary_layer_rescaled_drift,
    closeness_sup,
    closeness_trace,
    default_n_grid,
    diagnostics_report,
    graph_containment_trace,
    tracking_error_trace,
    write_report_json,
    write_trace_csv,
)
from .heavy_ball import (
    FiniteSumObjective,
    HeavyBallParams,
    analytic_quadratic_bound,
    component_deviation_bound,
    default_initial_state,
    deviation_bound_envelope,
    distance_to_rest_set,
    fast_tracker_oracle,
    membership,
    momentum_flow,
    momentum_reset,
    nonconvex_demo,
    quadratic_sum,
    reduced_heavy_ball,
    tracking_map,
    two_timescale_heavy_ball,
)
from .hybrid_time import (
    HybridIndex,
    HybridSequence,
    HybridSequenceDomain,
    jbar,
    kbar,
    omega_limit_estimate,
    read_sequence_csv,
    write_sequence_csv,
)
from .registry import Instance, build_instance, heavy_ball_instance, linear_decay_instance
from .schedules import (
    NestingThresholdError,
    StepSchedule,
    TwoTimescaleSchedule,
    check_admissible,
    check_fast_moment_condition,
    check_two_timescale_admissible,
    index_set,
    m_of,
    nesting_threshold,
    tau,
)
from .simulate import (
    DriftOracle,
    JumpRecord,
    SimRun,
    euler_flow_step,
    residuals,
    run,
    run_single,
    step_policy,
)
from .systems import (
    BasicConditionsReport,
    Box,
    HybridSystem,
    TrackingMap,
    TwoTimescaleSystem,
    boundary_layer,
    reduced_system,
    restrict_to_box,
    restricted_graph_distance,
    sampled_basic_conditions,
)

__all__ = [name for name in dir() if not name.startswith("_")]
