"""Analytic model and Monte Carlo simulator for packet loss rate and network
capacity of sporadic broadcast traffic on a multichannel slotted random-access
sidelink (5G NR V2X Mode 2 style)."""

from .config import (
    ConfigError,
    DerivedConstants,
    ScenarioConfig,
    TrafficIntensityError,
    db_to_linear,
    dbm_to_watts,
    derived_constants,
    linear_to_db,
    repetition_probability,
    transmit_probability,
    truncation_depth,
    validate_config,
    watts_to_dbm,
)
from .overlap import OverlapDistribution, overlap_distribution, overlap_distribution_oracle
from .link import (
    EesmOutcome,
    ExclusionProfile,
    eesm_receive,
    effective_sinr,
    exclusion_profile,
    exclusion_radius,
    pathloss,
    sinr_no_interference,
    sinr_one_interferer,
)
from .analytic import (
    CapacityResult,
    PlrCurvePoint,
    RecursionTable,
    capacity,
    capacity_sweep,
    loss_recursion,
    plr,
    plr_at_distance,
    repetition_noncollision_prob,
    success_prob,
    success_prob_series,
)
from .sim import (
    TRACE_COLUMNS,
    AttemptRecord,
    SimConfig,
    SimReport,
    attempt_trace,
    build_topology,
    replication_rng,
    run,
    trace_to_csv,
    validate_sim_config,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
