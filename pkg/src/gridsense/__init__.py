"""Data-driven voltage regulation for balanced radial distribution feeders.

Estimates line parameters and the active switch configuration from
voltage/injection measurements, derives voltage-sensitivity matrices, and
dispatches DER setpoints through a convex controller; a built-in nonlinear
power-flow simulator closes the loop for validation studies.
"""

from .controller import (
    ControlProblem,
    ControlSetpoints,
    DerFleet,
    default_weights,
    evaluate_cost,
    solve_control,
)
from .errors import (
    AllMasked,
    CycleDetected,
    DimensionMismatch,
    Disconnected,
    DuplicateEdge,
    EmptyWindow,
    GridSenseError,
    InvalidFeeder,
    NoFeasibleConfiguration,
    NotConverged,
    UnknownLine,
)
from .estimator import (
    IdentifiabilityReport,
    MeasurementSnapshot,
    MeasurementWindow,
    ParameterEstimate,
    RegressionSystem,
    SensitivityEstimate,
    assemble_regression,
    check_identifiability,
    estimate,
    estimate_parameters,
    read_measurements_csv,
    residual_error,
    write_measurements_csv,
)
from .feeder import (
    Bus,
    ConfigurationSet,
    FeederModel,
    FeederTopology,
    Line,
    build_topology,
    downstream_buses,
    enumerate_configurations,
    load_feeder,
)
from .metrics import Metrics, compute_mape
from .scenario import (
    ControllerConfig,
    EstimatorConfig,
    LoadConfig,
    Scenario,
    load_scenario,
    resolve_feeder,
)
from .sensitivity import (
    InjectionState,
    LineParameters,
    SensitivityMatrices,
    predict_squared_voltages,
    rank_one_terms,
    sensitivity_matrices,
)
from .simulate import (
    LoadProfile,
    NoiseModel,
    PowerFlowResult,
    ScenarioEvent,
    Trace,
    apply_noise,
    run_closed_loop,
    solve_power_flow,
    synthesize_loads,
)

__version__ = "0.1.0"
