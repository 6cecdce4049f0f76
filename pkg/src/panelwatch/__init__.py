"""Multi-stream change detection with SR-CUSUM alarms and BH isolation."""

from .detector import (
    OVERSHOOT_RHO,
    AlarmReport,
    DetectionOutcome,
    DetectorConfig,
    DetectorStateError,
    PanelEvidence,
    PanelState,
    calibrate_limit,
    fresh_panels,
    run_detection,
    snapshot_alarm,
    step_all,
    update_cusum,
    update_sr,
)
from .distributions import (
    NullLawParams,
    NumericError,
    argmax_density,
    argmax_given_max_cdf,
    argmax_given_max_density,
    argmax_max_moments,
    argmax_survival,
    corrected_exponential_cdf,
    ig_overshoot_cdf,
    joint_density,
    joint_tail,
    max_tail,
)
from .isolation import IsolationResult, aggregate_changepoint, bh_select, isolate, pvalues
from .simulate import (
    AlphaMetrics,
    AlphaOutcome,
    EmptyExperimentError,
    ReplicationRecord,
    Scenario,
    ScenarioMetrics,
    gen_replication,
    metrics_rows,
    run_experiment,
    run_replication,
    scenario_from_dict,
)

__version__ = "0.1.0"
