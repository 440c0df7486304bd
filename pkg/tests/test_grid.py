import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from builders import KV, random_radial_feeder, star_feeder, two_bus_feeder, z3
from dcgrid.commands import SetTaps
from dcgrid.grid import (
    Bus,
    FeederError,
    FeederModel,
    Grid,
    Line,
    PowerFlowDivergence,
    SpotLoad,
    SweepSolver,
    estimate_sensitivity,
    load_feeder,
    save_feeder,
    snap_tap,
    solve_power_flow,
)
from dcgrid.grid.backend import voltages_vector
from dcgrid.clock import SimulationClock
from dcgrid.system import load_system
from oracles import newton_power_flow, two_bus_dv_dp, two_bus_voltage

VS = KV * 1e3


def test_flat_profile_without_load():
    feeder, _ = random_radial_feeder(np.random.default_rng(0), with_caps=False, with_regulator=False)
    v = solve_power_flow(feeder, {})
    assert np.allclose(v.pu, feeder.source_pu, atol=1e-12)


def test_two_bus_matches_closed_form_quadratic():
    feeder = two_bus_feeder(1.0, 1.0, 100.0)
    v = solve_power_flow(feeder, {("m", "a"): 100e3})
    expected = two_bus_voltage(VS, 1.0, 1.0, 100e3, 0.0) / VS
    assert v.magnitude("m", "a") == pytest.approx(expected, abs=1e-8)


def test_two_bus_with_tap_matches_scaled_source():
    # an ideal ratio on the line acts like a source at tap * Vs
    feeder = two_bus_feeder(1.0, 1.0, 100.0, tap=1.05)
    v = solve_power_flow(feeder, {("m", "a"): 100e3})
    expected = two_bus_voltage(1.05 * VS, 1.0, 1.0, 100e3, 0.0) / VS
    assert v.magnitude("m", "a") == pytest.approx(expected, abs=1e-8)
    untapped = solve_power_flow(two_bus_feeder(1.0, 1.0, 100.0), {("m", "a"): 100e3})
    assert v.magnitude("m", "a") > untapped.magnitude("m", "a")


def test_source_magnitude_is_exact():
    feeder, loads = random_radial_feeder(np.random.default_rng(3))
    v = solve_power_flow(feeder, loads)
    for p in "abc":
        assert v.magnitude("b0", p) == feeder.source_pu


@pytest.mark.parametrize("seed", range(5))
def test_sweep_matches_newton_on_random_feeders(seed):
    feeder, loads = random_radial_feeder(np.random.default_rng(100 + seed))
    sweep = solve_power_flow(feeder, loads, tol=1e-12)
    newton = newton_power_flow(feeder, loads)
    for (bus, ph), phasor in newton.items():
        base = feeder.bus_by_id[bus].kv_ln * 1e3
        assert abs(sweep.magnitude(bus, ph) - abs(phasor) / base) < 1e-6


def test_divergence_carries_residual():
    feeder = two_bus_feeder(5.0, 5.0, 2000.0)
    with pytest.raises(PowerFlowDivergence) as info:
        solve_power_flow(feeder, {("m", "a"): 2e6})
    assert info.value.residual > 0 or math.isnan(info.value.residual)


def test_power_balance_at_solution():
    feeder, loads = random_radial_feeder(np.random.default_rng(7), with_caps=False, with_regulator=False)
    solver = SweepSolver(feeder, tol=1e-12)
    s = solver.loads_vector(loads)
    v = solver.solve(s)
    currents = solver.branch_currents(v, s)
    # power entering each bus equals what it consumes plus what it sends on
    for ln in feeder.lines:
        child = ln.to_bus
        phases = feeder.bus_by_id[child].phases
        idx = [solver.node[(child, p)] for p in phases]
        inflow = v.phasors[idx] * np.conj(currents[ln.id])
        local = s[idx]
        outflow = np.zeros(len(phases), dtype=complex)
        for out in feeder.lines:
            if out.from_bus == child:
                for k, p in enumerate(feeder.bus_by_id[out.to_bus].phases):
                    outflow[phases.index(p)] += v.phasors[solver.node[(child, p)]] * np.conj(currents[out.id][k])
        assert np.allclose(inflow, local + outflow, atol=1e-3 * np.max(np.abs(s)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_monotone_drop_with_consuming_loads(seed):
    # mutual coupling can lift a lightly loaded phase, so the lines here are uncoupled
    rng = np.random.default_rng(seed)
    feeder, loads = random_radial_feeder(rng, with_caps=False, with_regulator=False, coupled=False)
    loads = {k: complex(abs(v.real), abs(v.imag)) for k, v in loads.items()}
    v = solve_power_flow(feeder, loads)
    mags = v.by_bus()
    for ln in feeder.lines:
        for p in feeder.bus_by_id[ln.to_bus].phases:
            assert mags[ln.to_bus][p] <= mags[ln.from_bus][p] + 1e-9


def test_resolve_is_idempotent():
    feeder, loads = random_radial_feeder(np.random.default_rng(11))
    solver = SweepSolver(feeder)
    s = solver.loads_vector(loads)
    first = solver.solve(s)
    again = solver.solve(s, v_init=first.phasors)
    assert np.max(np.abs(again.pu - first.pu)) <= solver.tol


def test_snap_tap_rules():
    assert snap_tap(1.00625) == 1.00625
    assert snap_tap(1.2) == pytest.approx(1.10)
    assert snap_tap(0.5) == pytest.approx(0.90)
    # 1.003 is closer to 1.0 than to 1.00625
    assert snap_tap(1.003) == 1.0
    assert snap_tap(1.004) == 1.00625


def test_feeder_rejects_cycles_and_bad_taps():
    buses = [Bus("s"), Bus("a"), Bus("b")]
    lines = [Line("1", "s", "a", z3(1 + 1j)), Line("2", "a", "b", z3(1 + 1j)), Line("3", "s", "b", z3(1 + 1j))]
    with pytest.raises(FeederError):
        FeederModel("loop", buses, lines, "s")
    with pytest.raises(FeederError):
        two_bus_feeder(tap=1.003)
    with pytest.raises(FeederError):
        FeederModel("x", [Bus("s", "a"), Bus("m", "ab")], [Line("1", "s", "m", z3(1))], "s")
    with pytest.raises(FeederError):
        FeederModel("x", [Bus("s"), Bus("m")], [Line("1", "s", "m", z3(1))], "s", loads=[SpotLoad("q", "a", 1.0)])


def test_feeder_json_roundtrip(tmp_path):
    feeder, loads = random_radial_feeder(np.random.default_rng(5))
    save_feeder(feeder, tmp_path / "f.json")
    back = load_feeder(tmp_path / "f.json")
    assert np.allclose(solve_power_flow(back, loads).pu, solve_power_flow(feeder, loads).pu)


def test_two_bus_sensitivity_matches_analytic_derivative():
    feeder = two_bus_feeder(1.0, 1.0, 100.0)
    solver = SweepSolver(feeder, tol=1e-12)
    base = solver.loads_vector({("m", "a"): 100e3})
    sens = estimate_sensitivity(solver, "m", 1e3, base, central=True)
    analytic = two_bus_dv_dp(VS, 1.0, 1.0, 100e3, 0.0) / VS
    assert sens.H[solver.node[("m", "a")], 0] == pytest.approx(analytic, rel=1e-2)
    assert sens.H[solver.node[("s", "a")], 0] == 0.0


def test_probe_at_source_gives_zero_column():
    feeder, loads = random_radial_feeder(np.random.default_rng(9))
    solver = SweepSolver(feeder)
    sens = estimate_sensitivity(solver, "b0", 1e4, solver.loads_vector(loads))
    # only re-solve round-off remains
    assert np.max(np.abs(sens.H)) < 1e-12


def test_bundled_feeder_own_bus_sensitivity_negative():
    system = load_system()
    grid = Grid(system.feeder)
    clock = SimulationClock(grid.dt)
    grid.step(clock, {"dc0": [(1e6, 1e6, 1e6)]})
    sens = grid.estimate_sensitivity("dc0", 100e3)
    bus = system.feeder.datacenters["dc0"]
    for k, p in enumerate("abc"):
        assert sens.H[grid.solver.node[(bus, p)], k] < 0


def test_grid_step_datacenter_power_lowers_voltage():
    feeder = star_feeder()
    grid = Grid(feeder)
    clock = SimulationClock(grid.dt)
    zero = grid.step(clock, {"dc0": [(0.0, 0.0, 0.0)]})
    assert np.allclose(zero.voltages_vector(), 1.0)
    lo = grid.step(clock, {"dc0": [(0.5e6,) * 3]}).voltages.magnitude("dc", "a")
    hi = grid.step(clock, {"dc0": [(0.8e6,) * 3]}).voltages.magnitude("dc", "a")
    assert hi < lo < 1.0


def test_grid_averages_power_samples():
    feeder = star_feeder()
    a, b = Grid(feeder), Grid(feeder)
    clock = SimulationClock(a.dt)
    va = a.step(clock, {"dc0": [(0.2e6,) * 3, (0.6e6,) * 3]}).voltages_vector()
    vb = b.step(clock, {"dc0": [(0.4e6,) * 3]}).voltages_vector()
    assert np.allclose(va, vb)


def test_pv_raises_voltage():
    system = load_system()
    from dcgrid.scenario import Profile

    def dc_voltage(peak):
        grid = Grid(system.feeder, pv_profiles={"pv": Profile("flat", peak, 3600.0)})
        state = grid.step(SimulationClock(grid.dt), {"dc0": [(1e6,) * 3]})
        return state.voltages.magnitude(system.feeder.datacenters["dc0"], "a")

    assert dc_voltage(1.0) >= dc_voltage(0.0)


def test_set_taps_applies_at_next_solve():
    feeder = star_feeder()
    grid = Grid(feeder)
    clock = SimulationClock(grid.dt)
    before = grid.step(clock, {"dc0": [(0.3e6,) * 3]})
    grid.apply_command(SetTaps({"vreg": 1.2}))
    assert before.tap_positions["vreg"] == 1.0
    after = grid.step(clock, {"dc0": [(0.3e6,) * 3]})
    assert after.tap_positions["vreg"] == pytest.approx(1.10)
    assert after.voltages.magnitude("dc", "a") > before.voltages.magnitude("dc", "a")


def test_voltages_vector_ordering_and_length():
    feeder = FeederModel("v", [Bus("s"), Bus("x"), Bus("y", "a")],
                         [Line("1", "s", "x", z3(0.1 + 0.1j)), Line("2", "x", "y", z3(0.1 + 0.1j))], "s")
    grid = Grid(feeder)
    state = grid.step(SimulationClock(grid.dt), {})
    assert len(voltages_vector(state)) == 7
    assert grid.v_index == (("s", "a"), ("s", "b"), ("s", "c"), ("x", "a"), ("x", "b"), ("x", "c"), ("y", "a"))
