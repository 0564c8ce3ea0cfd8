"""Synchronous machine simulation, observability analysis, and sensorless EKF."""

from .machine import (
    Inputs,
    MachineKind,
    MachineParams,
    MachineState,
    MechanicalParams,
    SYRM,
    WRSM_NONSALIENT,
    WRSM_SALIENT,
    current_derivative,
    default_wrsm,
    electromagnetic_torque,
    equivalent_resistance,
    inductance_matrix,
    inductance_matrix_d1,
    inductance_matrix_d2,
    initial_state,
    inv_park,
    ipmsm,
    magnetic_energy,
    park,
    spmsm,
    state_derivative,
)
from .observability import (
    ObservabilityReport,
    ObservabilitySample,
    delta_y_closed_form,
    delta_y_numeric,
    effective_saliency,
    numeric_rank,
    observability_condition,
    observability_submatrix,
    observability_vector,
    sample_at,
)
from .ekf import (
    EkfConfig,
    EkfState,
    default_config,
    ekf_predict,
    ekf_step,
    ekf_update,
    kalman_update,
    linearize,
)
from .simulation import (
    COLUMNS,
    ControllerGains,
    HfInjection,
    PiController,
    Scenario,
    SimulationDiverged,
    SpeedProfile,
    TimeSeriesLog,
    hf_setpoint,
    pi_step,
    run_scenario,
)
from .config import ConfigError, bundled_scenario_path, load_scenario, scenario_from_dict
from .reporting import REPORT_SCHEMA, dump_json, dumps_json, position_error, summarize, wrap_angle

__version__ = "0.1.0"
