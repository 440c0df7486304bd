"""Online feedback optimization: one primal-dual step per control period.

Primal variables are per-model log2 batch sizes. Voltage bounds and ITL
deadlines are dualized; voltage dependence on datacenter power enters
through a finite-difference sensitivity matrix refreshed every ``tau_h_s``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Optional

import numpy as np

from dcgrid.commands import SetBatchSize
from dcgrid.controllers.base import Controller
from dcgrid.controllers.ladder import LogBatchState, snap_to_ladder
from dcgrid.datacenter.fits import LogisticFit
from dcgrid.grid.powerflow import PowerFlowDivergence


@dataclass(frozen=True)
class OFOParams:
    alpha_t: float = 1e-4
    beta_s: float = 1.0
    k_v: float = 1e6
    rho_x: float = 0.05
    rho_v: float = 1.0
    rho_l: float = 1.0
    tau_h_s: float = 300.0
    delta_p_w: float = 100e3
    v_lo: float = 0.95
    v_hi: float = 1.05
    central_difference: bool = False
    # False: power and throughput curves enter per replica; True: multiplied by active replicas
    aggregate_curves: bool = True
    # span multipliers on OFO's private copy of the fits, for model-mismatch studies
    fit_scale: Mapping[str, float] = field(default_factory=lambda: {"power": 1.0, "throughput": 1.0, "itl": 1.0})

    def __post_init__(self) -> None:
        for name in ("alpha_t", "beta_s", "k_v", "rho_x", "rho_v", "rho_l", "tau_h_s", "delta_p_w"):
            if getattr(self, name) < 0:
                raise ValueError(f"OFO parameter {name} must be nonnegative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fit_scale"] = dict(self.fit_scale)
        return d


@dataclass
class OFODuals:
    lambda_under: np.ndarray
    lambda_over: np.ndarray
    mu: dict[str, float]

    @classmethod
    def zeros(cls, n: int, labels) -> "OFODuals":
        return cls(np.zeros(n), np.zeros(n), {lbl: 0.0 for lbl in labels})

    @property
    def eta(self) -> np.ndarray:
        return self.lambda_over - self.lambda_under


@dataclass(frozen=True)
class ModelCurves:
    """Curves for one model as OFO sees them; power and throughput are multiplied by ``replicas``."""

    power: LogisticFit
    throughput: LogisticFit
    itl: LogisticFit
    replicas: int
    itl_target_s: float
    phase_share: tuple[float, float, float]

    def P(self, x):
        return self.replicas * self.power(x)

    def dP(self, x):
        return self.replicas * self.power.derivative(x)

    def T(self, x):
        return self.replicas * self.throughput(x)

    def dT(self, x):
        return self.replicas * self.throughput.derivative(x)


def ofo_dual_update(duals: OFODuals, voltages: np.ndarray, itl: Mapping[str, float],
                    itl_targets: Mapping[str, float], params: OFOParams) -> OFODuals:
    v = np.asarray(voltages, dtype=float)
    under = np.maximum(duals.lambda_under + params.rho_v * (params.v_lo - v), 0.0)
    over = np.maximum(duals.lambda_over + params.rho_v * (v - params.v_hi), 0.0)
    mu = {lbl: max(0.0, m + params.rho_l * (itl[lbl] - itl_targets[lbl])) for lbl, m in duals.mu.items()}
    return OFODuals(under, over, mu)


def ofo_primal_gradient(label: str, duals: OFODuals, H: np.ndarray, curves: ModelCurves,
                        params: OFOParams, x: float, x_prev: float) -> float:
    voltage_weight = float(duals.eta @ (H @ np.asarray(curves.phase_share)))
    return (-params.alpha_t * curves.dT(x)
            + params.k_v * voltage_weight * curves.dP(x)
            + duals.mu[label] * curves.itl.derivative(x)
            + 2.0 * params.beta_s * (x - x_prev))


def ofo_lagrangian(xs: Mapping[str, float], x_prev: Mapping[str, float], duals: OFODuals, H: np.ndarray,
                   curves: Mapping[str, ModelCurves], params: OFOParams) -> float:
    """Scalar Lagrangian (minimization form) linearized in power through ``H``."""
    p_phase = np.zeros(3)
    value = 0.0
    for lbl, c in curves.items():
        x = xs[lbl]
        value -= params.alpha_t * c.T(x)
        value += params.beta_s * (x - x_prev[lbl]) ** 2
        value += duals.mu[lbl] * (c.itl(x) - c.itl_target_s)
        p_phase += np.asarray(c.phase_share) * c.P(x)
    value += params.k_v * float(duals.eta @ (H @ p_phase))
    return value


def _scaled(fit: LogisticFit, scale: float) -> LogisticFit:
    return fit if scale == 1.0 else replace(fit, span=fit.span * scale)


@dataclass
class _SiteState:
    duals: OFODuals
    x: dict[str, LogBatchState]
    H: Optional[np.ndarray] = None
    last_refresh_s: Optional[float] = None


class OFOController(Controller):
    """Per-datacenter OFO instances sharing one parameter set."""

    name = "ofo"

    def __init__(self, params: OFOParams = OFOParams(), dt=1, datacenters=None):
        super().__init__(dt)
        self.params = params
        self.only = None if datacenters is None else set(datacenters)
        self.reset()

    def reset(self) -> None:
        self.sites: dict[str, _SiteState] = {}

    def curves(self, dc) -> dict[str, ModelCurves]:
        scale = self.params.fit_scale
        out = {}
        for dep in dc.deployments:
            spec = dep.spec
            out[dep.label] = ModelCurves(
                power=_scaled(spec.power_fit, scale.get("power", 1.0)),
                throughput=_scaled(spec.throughput_fit, scale.get("throughput", 1.0)),
                itl=_scaled(spec.itl_fit, scale.get("itl", 1.0)),
                replicas=dc.state.active_replicas_by_model[dep.label] if self.params.aggregate_curves else 1,
                itl_target_s=spec.itl_deadline_s,
                phase_share=tuple(dep.phase_share),
            )
        return out

    def _refresh_sensitivity(self, site: _SiteState, dc_id: str, grid, t: float, events) -> None:
        due = site.last_refresh_s is None or t - site.last_refresh_s >= self.params.tau_h_s - 1e-9
        if not due:
            return
        try:
            sens = grid.estimate_sensitivity(dc_id, self.params.delta_p_w, central=self.params.central_difference)
            site.H = sens.H
            events.emit(t, f"ofo/{dc_id}", "sensitivity_refresh", bus=sens.bus)
        except PowerFlowDivergence as exc:
            if site.H is None:
                site.H = np.zeros((len(grid.v_index), 3))
            events.emit(t, f"ofo/{dc_id}", "warning", message=f"sensitivity probe diverged: {exc}")
        site.last_refresh_s = t

    def step(self, clock, datacenters, grid, events):
        t = clock.time_s
        v = grid.voltages_vector()
        commands = []
        for dc_id, dc in datacenters.items():
            if self.only is not None and dc_id not in self.only:
                continue
            state = dc.state
            site = self.sites.get(dc_id)
            if site is None:
                labels = [d.label for d in dc.deployments]
                site = _SiteState(
                    duals=OFODuals.zeros(len(v), labels),
                    x={d.label: LogBatchState.from_batch(state.batch_size_by_model[d.label],
                                                         d.spec.feasible_batch_sizes) for d in dc.deployments},
                )
                self.sites[dc_id] = site
            self._refresh_sensitivity(site, dc_id, grid, t, events)
            targets = {d.label: d.spec.itl_deadline_s for d in dc.deployments}
            # the primal step uses the duals from before this update
            duals = site.duals
            site.duals = ofo_dual_update(duals, v, state.itl_by_model, targets, self.params)
            curves = self.curves(dc)
            changed = {}
            for dep in dc.deployments:
                lbl = dep.label
                st = site.x[lbl]
                grad = ofo_primal_gradient(lbl, duals, site.H, curves[lbl], self.params, st.x, st.x_prev)
                st.move_to(st.x - self.params.rho_x * grad)
                new = snap_to_ladder(st.x, dep.spec.feasible_batch_sizes)
                if new != state.batch_size_by_model[lbl]:
                    changed[lbl] = new
            if changed:
                commands.append(SetBatchSize(changed, target=dc_id))
        return commands
