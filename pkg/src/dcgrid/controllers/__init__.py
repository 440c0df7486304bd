"""Controllers behind one contract, plus a name-based factory for config files."""

from __future__ import annotations

from dcgrid.controllers.base import Controller, NoCoordination, no_coordination_step
from dcgrid.controllers.droop import DroopController, DroopParams, droop_pressure, droop_step
from dcgrid.controllers.ladder import LogBatchState, snap_to_ladder
from dcgrid.controllers.ofo import (
    ModelCurves,
    OFOController,
    OFODuals,
    OFOParams,
    ofo_dual_update,
    ofo_lagrangian,
    ofo_primal_gradient,
)
from dcgrid.controllers.tap import AdaptiveTapController, TapParams, adaptive_tap_step

CONTROLLERS = ("none", "droop", "ofo", "tap")


class ControllerConfigError(ValueError):
    pass


def make_controller(name: str, params: dict | None = None) -> Controller:
    """Build a controller from ``{"controller": name, "params": {...}}``-style config."""
    params = dict(params or {})
    dt = params.pop("dt_s", None)
    try:
        if name == "none":
            ctrl = NoCoordination(dt if dt is not None else 1)
        elif name == "droop":
            ctrl = DroopController(DroopParams(**params), dt=dt if dt is not None else 1)
        elif name == "ofo":
            ctrl = OFOController(OFOParams(**params), dt=dt if dt is not None else 1)
        elif name == "tap":
            ctrl = AdaptiveTapController(TapParams(**params), dt=dt if dt is not None else 5)
        else:
            raise ControllerConfigError(f"unknown controller {name!r}; valid names: {', '.join(CONTROLLERS)}")
    except ControllerConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ControllerConfigError(f"bad parameters for controller {name!r}: {exc}") from None
    return ctrl


__all__ = [
    "CONTROLLERS",
    "AdaptiveTapController",
    "Controller",
    "ControllerConfigError",
    "DroopController",
    "DroopParams",
    "LogBatchState",
    "ModelCurves",
    "NoCoordination",
    "OFOController",
    "OFODuals",
    "OFOParams",
    "TapParams",
    "adaptive_tap_step",
    "droop_pressure",
    "droop_step",
    "make_controller",
    "no_coordination_step",
    "ofo_dual_update",
    "ofo_lagrangian",
    "ofo_primal_gradient",
    "snap_to_ladder",
]
