from dcgrid.grid.backend import Grid, GridState, SensitivityMatrix, estimate_sensitivity, voltages_vector
from dcgrid.grid.feeder import (
    TAP_MAX,
    TAP_MIN,
    TAP_STEP,
    Bus,
    Capacitor,
    FeederError,
    FeederModel,
    Line,
    PVGenerator,
    Regulator,
    SpotLoad,
    load_feeder,
    save_feeder,
    snap_tap,
)
from dcgrid.grid.powerflow import BusVoltages, PowerFlowDivergence, SweepSolver, solve_power_flow

__all__ = [
    "TAP_MAX",
    "TAP_MIN",
    "TAP_STEP",
    "Bus",
    "BusVoltages",
    "Capacitor",
    "FeederError",
    "FeederModel",
    "Grid",
    "GridState",
    "Line",
    "PVGenerator",
    "PowerFlowDivergence",
    "Regulator",
    "SensitivityMatrix",
    "SpotLoad",
    "SweepSolver",
    "estimate_sensitivity",
    "load_feeder",
    "save_feeder",
    "snap_tap",
    "solve_power_flow",
    "voltages_vector",
]
