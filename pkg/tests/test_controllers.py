import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from builders import logistic_spec, small_site, star_feeder
from dcgrid import run_episode
from dcgrid.controllers import (
    ControllerConfigError,
    DroopParams,
    LogBatchState,
    ModelCurves,
    OFOController,
    OFODuals,
    OFOParams,
    TapParams,
    adaptive_tap_step,
    droop_pressure,
    droop_step,
    make_controller,
    no_coordination_step,
    ofo_dual_update,
    ofo_lagrangian,
    ofo_primal_gradient,
    snap_to_ladder,
)
from dcgrid.datacenter import LogisticFit
from dcgrid.scenario import canonical_scenario, empty_scenario
from dcgrid.system import load_system

LADDER = (8, 16, 32, 64, 128, 256, 512)


def test_snap_examples():
    assert snap_to_ladder(6.4, LADDER) == 64
    assert snap_to_ladder(7.0, LADDER) == 128
    assert snap_to_ladder(math.log2(96), LADDER) == 64


@given(st.floats(-2, 12, allow_nan=False))
def test_snap_idempotent(x):
    b = snap_to_ladder(x, LADDER)
    assert snap_to_ladder(math.log2(b), LADDER) == b


@given(st.floats(-50, 50, allow_nan=False), st.floats(-50, 50, allow_nan=False))
def test_projection_stays_in_bounds(x0, x1):
    st_ = LogBatchState.from_batch(128, (8, 16, 32, 64, 128))
    st_.move_to(x0)
    st_.move_to(x1)
    assert st_.x_lo <= st_.x <= st_.x_hi


def _dc_state(batch=128, itl=0.02, label="m"):
    return SimpleNamespace(batch_size_by_model={label: batch}, itl_by_model={label: itl})


def test_droop_undervoltage_example():
    spec = logistic_spec(ladder=LADDER, deadline=0.1)
    states = {"m": LogBatchState.from_batch(128, spec.feasible_batch_sizes)}
    v = np.array([0.93, 1.0, 1.0])
    assert droop_pressure(v, DroopParams()) == pytest.approx(0.02)
    assert droop_step(v, _dc_state(), {"m": spec}, DroopParams(), states) == {"m": 64}
    assert states["m"].x == pytest.approx(6.0)


def test_droop_in_band_is_quiet():
    spec = logistic_spec()
    states = {"m": LogBatchState.from_batch(64, spec.feasible_batch_sizes)}
    assert droop_step(np.array([0.951, 1.049]), _dc_state(64), {"m": spec}, DroopParams(), states) == {}
    # inside the deadband as well
    assert droop_step(np.array([0.9485]), _dc_state(64), {"m": spec}, DroopParams(), states) == {}


def test_droop_latency_guard_blocks_increase():
    spec = logistic_spec(deadline=0.05)
    states = {"m": LogBatchState.from_batch(64, spec.feasible_batch_sizes)}
    over = np.array([1.07, 1.0])
    assert droop_step(over, _dc_state(64, itl=0.06), {"m": spec}, DroopParams(), states) == {}
    assert states["m"].x == pytest.approx(6.0)
    assert droop_step(over, _dc_state(64, itl=0.02), {"m": spec}, DroopParams(), states) == {"m": 128}


def test_dual_update_examples():
    params = OFOParams()
    duals = OFODuals.zeros(2, ["m"])
    out = ofo_dual_update(duals, np.array([0.94, 1.0]), {"m": 0.06}, {"m": 0.05}, params)
    assert out.lambda_under[0] == pytest.approx(0.01)
    assert out.lambda_under[1] == 0.0 and np.all(out.lambda_over == 0.0)
    assert out.mu["m"] == pytest.approx(0.01)
    decayed = ofo_dual_update(OFODuals(np.array([0.001, 0]), np.array([0.0, 0.003]), {"m": 0.0}),
                              np.array([1.0, 1.0]), {"m": 0.01}, {"m": 0.05}, params)
    assert np.all(decayed.lambda_under == 0.0) and np.all(decayed.lambda_over == 0.0) and decayed.mu["m"] == 0.0


@settings(max_examples=100)
@given(st.lists(st.floats(0.8, 1.2), min_size=3, max_size=3), st.lists(st.floats(0, 1), min_size=6, max_size=6),
       st.floats(0, 0.2), st.floats(0, 1))
def test_duals_stay_nonnegative(v, lam, itl, mu):
    duals = OFODuals(np.array(lam[:3]), np.array(lam[3:]), {"m": mu})
    out = ofo_dual_update(duals, np.array(v), {"m": itl}, {"m": 0.05}, OFOParams())
    assert np.all(out.lambda_under >= 0) and np.all(out.lambda_over >= 0) and out.mu["m"] >= 0


def _curves(replicas=1):
    spec = logistic_spec()
    return ModelCurves(spec.power_fit, spec.throughput_fit, spec.itl_fit, replicas, 0.05, (1 / 3, 1 / 3, 1 / 3))


def test_gradient_only_throughput_term_when_duals_zero():
    c = _curves()
    g = ofo_primal_gradient("m", OFODuals.zeros(3, ["m"]), np.zeros((3, 3)), c, OFOParams(), 6.0, 6.0)
    assert g == pytest.approx(-1e-4 * c.dT(6.0))
    assert g < 0


def test_gradient_sign_under_sustained_undervoltage():
    H = -1e-7 * np.eye(3)
    duals = OFODuals(np.full(3, 0.5), np.zeros(3), {"m": 0.0})
    assert duals.eta @ H @ np.full(3, 1 / 3) > 0
    assert ofo_primal_gradient("m", duals, H, _curves(), OFOParams(), 6.0, 6.0) > 0


def test_gradient_matches_lagrangian_finite_difference():
    rng = np.random.default_rng(0)
    c = _curves(replicas=50)
    params = OFOParams()
    for _ in range(10):
        duals = OFODuals(rng.uniform(0, 0.1, 3), rng.uniform(0, 0.1, 3), {"m": rng.uniform(0, 1)})
        H = -rng.uniform(1e-8, 1e-7, (3, 3))
        x, xp = rng.uniform(3, 8), rng.uniform(3, 8)
        h = 1e-5
        fd = (ofo_lagrangian({"m": x + h}, {"m": xp}, duals, H, {"m": c}, params)
              - ofo_lagrangian({"m": x - h}, {"m": xp}, duals, H, {"m": c}, params)) / (2 * h)
        g = ofo_primal_gradient("m", duals, H, c, params, x, xp)
        assert abs(g - fd) <= 1e-5 * max(abs(g), 1e-12)


def test_ofo_defaults():
    p = OFOParams()
    assert (p.alpha_t, p.beta_s, p.k_v, p.rho_x, p.rho_v, p.rho_l, p.tau_h_s, p.delta_p_w) == \
        (1e-4, 1.0, 1e6, 0.05, 1.0, 1.0, 300.0, 100e3)
    with pytest.raises(ValueError):
        OFOParams(rho_x=-1)


def test_ofo_slack_drives_batches_to_ladder_top():
    site = small_site(replicas=20, batch=64)
    log = run_episode(star_feeder(), [site], OFOController(), empty_scenario(1800), 1800)
    b = log.batch_size["m"]
    assert b[-1] == 256
    assert np.all(np.diff(b) >= 0)
    top = int(np.argmax(b == 256))
    assert np.all(b[top:] == 256)


def test_sensitivity_refresh_count():
    system = load_system()
    log = run_episode(system.feeder, system.datacenters, OFOController(), canonical_scenario(), 3600)
    refresh = [e for e in log.events if e.kind == "sensitivity_refresh"]
    assert len(refresh) == 13  # t = 0 plus 12 refreshes
    assert [e.time_s for e in refresh][1:] == [300.0 * k for k in range(1, 13)]


def test_tap_rules():
    params = TapParams("vreg")
    assert adaptive_tap_step(np.array([0.93, 1.0]), 1.0, 10.0, 0.0, params) == pytest.approx(1.00625)
    assert adaptive_tap_step(np.array([0.949, 1.051]), 1.0, 10.0, 0.0, params) is None
    assert adaptive_tap_step(np.array([0.93]), 1.0, 30.0, 60.0, params) is None
    assert adaptive_tap_step(np.array([1.07]), 1.0, 10.0, 0.0, params) == pytest.approx(0.99375)
    assert adaptive_tap_step(np.array([0.93]), 1.1, 10.0, 0.0, params) is None


def test_tap_controller_discipline():
    feeder = star_feeder(dc_bus_kw=400.0, line_z=0.4 + 0.8j)
    log = run_episode(feeder, [small_site(replicas=2000)], make_controller("tap", {"regulator": "vreg"}),
                      duration_s=600)
    taps = log.taps["vreg"]
    changes = np.flatnonzero(np.diff(taps)) + 1
    assert len(changes) > 0
    assert np.all(np.abs(np.diff(taps)[changes - 1]) <= 0.00625 + 1e-12)
    assert np.all(np.diff(log.times[changes]) >= 60.0 - 1e-9)


def test_no_coordination_is_inert():
    assert no_coordination_step() == []
    system = load_system()
    log = run_episode(system.feeder, system.datacenters, make_controller("none"), canonical_scenario(), 600)
    assert all(np.all(b == 128) for b in log.batch_size.values())
    assert log.metrics().batch_switch_count == 0


def test_factory_errors():
    with pytest.raises(ControllerConfigError, match="valid names"):
        make_controller("pid")
    with pytest.raises(ControllerConfigError):
        make_controller("droop", {"gain": -1})
    with pytest.raises(ControllerConfigError):
        make_controller("ofo", {"nonsense": 1})
    assert make_controller("droop", {"gain": 10}).params.gain == 10


def test_in_band_quiescence_for_droop():
    site = small_site(replicas=20, batch=64)
    log = run_episode(star_feeder(), [site], make_controller("droop"), empty_scenario(60), 60)
    assert log.metrics().batch_switch_count == 0
    assert log.events.of_kind("command") == []


def test_model_curves_scale_with_replicas():
    c = _curves(replicas=10)
    fit: LogisticFit = c.power
    assert c.P(6.0) == pytest.approx(10 * fit(6.0))
    assert c.dP(6.0) == pytest.approx(10 * fit.derivative(6.0))
