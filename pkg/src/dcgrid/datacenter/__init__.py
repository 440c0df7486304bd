from dcgrid.datacenter.backend import Datacenter, DatacenterState, ReplicaRamp, ramp_multiplier
from dcgrid.datacenter.fits import LogisticCurveRegressor, LogisticFit
from dcgrid.datacenter.power_range import (
    PowerRange,
    feasible_power_range_w,
    match_peak_replicas,
    power_curve_rows,
    replica_power_w,
)
from dcgrid.datacenter.spec import (
    InferenceModelSpec,
    ITLNoise,
    ModelDeployment,
    SpecError,
    StepSchedule,
    TrainingOverlay,
    load_spec,
    save_spec,
)
from dcgrid.datacenter.traces import TraceError, TraceStore, load_trace_store, trace_power_w

__all__ = [
    "Datacenter",
    "DatacenterState",
    "ITLNoise",
    "InferenceModelSpec",
    "LogisticCurveRegressor",
    "LogisticFit",
    "ModelDeployment",
    "PowerRange",
    "ReplicaRamp",
    "SpecError",
    "StepSchedule",
    "TraceError",
    "TraceStore",
    "TrainingOverlay",
    "feasible_power_range_w",
    "load_spec",
    "load_trace_store",
    "match_peak_replicas",
    "power_curve_rows",
    "ramp_multiplier",
    "replica_power_w",
    "save_spec",
    "trace_power_w",
]
