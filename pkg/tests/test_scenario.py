import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from builders import small_site, star_feeder
from dcgrid.scenario import (
    EVAL_COLUMNS,
    EvaluationError,
    Profile,
    SamplingConfig,
    Scenario,
    ScenarioLibrary,
    ScreeningConfig,
    build_library,
    canonical_scenario,
    evaluate_controllers,
    format_table,
    rows_to_csv,
    sample_scenario,
    screening_decision,
    summarize,
    violation_type,
)
from dcgrid.datacenter import ramp_multiplier

SHORT = SamplingConfig(horizon_s=60.0, overlay_start_s=(0, 40), overlay_duration_s=(5, 20),
                       ramp_start_s=(0, 50), ramp_duration_s=(1, 10))


def _tiny():
    """Weak star feeder where a few short scenarios pass screening and most do not."""
    return star_feeder(line_z=0.3 + 0.6j), [small_site(replicas=2500)]


def test_sampling_is_deterministic():
    assert sample_scenario(7) == sample_scenario(7)
    assert sample_scenario(7).to_dict() != sample_scenario(8).to_dict()


def test_overlay_probability_zero():
    cfg = SamplingConfig(overlay_probability=0.0)
    assert all(sample_scenario(s, cfg).training_overlay is None for s in range(1000))


def test_overlay_probability_rate():
    hits = sum(sample_scenario(s).training_overlay is not None for s in range(10_000))
    assert abs(hits / 10_000 - 0.69) <= 0.02


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sampled_quantities_respect_horizon(seed):
    sc = sample_scenario(seed)
    H = sc.horizon_s
    if sc.training_overlay:
        assert 0 <= sc.training_overlay.start_s <= sc.training_overlay.start_s + sc.training_overlay.duration_s <= H
    for ramps in sc.replica_ramps.values():
        assert 1 <= len(ramps) <= 2
        for r in ramps:
            assert r.amplitude > 0 and 0 <= r.start_s <= r.start_s + r.duration_s <= H
        for a, b in zip(ramps, ramps[1:]):
            assert b.start_s >= a.start_s + a.duration_s
    for prof in [*sc.pv_profiles.values(), *sc.tvl_profiles.values()]:
        assert min(prof(t) for t in np.linspace(0, H, 50)) >= 0


def test_scenario_dict_roundtrip():
    sc = sample_scenario(3)
    assert Scenario.from_dict(sc.to_dict()) == sc


def test_canonical_scenario():
    sc = canonical_scenario()
    assert sc.training_overlay.power_w(1500.0) == pytest.approx(0.96e6)
    assert sc.training_overlay.power_w(500.0) == 0.0
    assert ramp_multiplier(sc.replica_ramps["dc0"], 3200.0) == 0.5
    assert ramp_multiplier(sc.replica_ramps["dc0"], 2400.0) == 1.0


def test_profile_shapes():
    p = Profile("rising_falling", 2.0, 100.0)
    assert p(50.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        Profile("zigzag", 1.0, 100.0)


def test_screening_examples():
    assert screening_decision(0.5, 0.0)[0] is False
    assert screening_decision(19.52, 1.04)[0] is True
    assert screening_decision(10.0, 4.0)[0] is False
    assert screening_decision(10.0, 3.0)[0] is True  # exactly 70 % recovery
    assert screening_decision(1.0, 0.0)[0] is False  # threshold is strict


def test_violation_type():
    assert violation_type(1.0, 0.0) == "under"
    assert violation_type(0.0, 2.0) == "over"
    assert violation_type(1.0, 2.0) == "both"
    assert violation_type(0.0, 0.0) == "none"


def test_empty_library():
    feeder, sites = _tiny()
    lib = build_library(0, 0, "test", feeder, sites, SHORT)
    assert lib.records == [] and lib.summary()["n"] == 0


@pytest.fixture(scope="module")
def tiny_library():
    feeder, sites = _tiny()
    return build_library(12, 0, "test", feeder, sites, SHORT)


def test_library_records_and_roundtrip(tiny_library, tmp_path):
    lib = tiny_library
    assert [r.seed for r in lib.records] == list(range(12))
    assert 0 < len(lib.accepted) < 12
    for r in lib.accepted:
        assert r.baseline_integral > 1.0 and (r.baseline_integral - r.ofo_integral) / r.baseline_integral >= 0.7
    lib.save(tmp_path / "a.json")
    back = ScenarioLibrary.load(tmp_path / "a.json")
    back.save(tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert back.accepted_scenarios() == lib.accepted_scenarios()


def test_library_rebuild_is_identical(tiny_library, tmp_path):
    feeder, sites = _tiny()
    again = build_library(12, 0, "test", feeder, sites, SHORT, workers=2)
    tiny_library.save(tmp_path / "a.json")
    again.save(tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_disjoint_seed_ranges():
    feeder, sites = _tiny()
    a = build_library(3, 0, "train", feeder, sites, SHORT)
    b = build_library(3, 3, "test", feeder, sites, SHORT)
    assert not set(a.seed_range) & set(b.seed_range)
    assert not {r.seed for r in a.records} & {r.seed for r in b.records}


def _scenarios(n):
    return [sample_scenario(s, SHORT) for s in range(n)]


def test_evaluate_shape_and_determinism():
    feeder, sites = _tiny()
    rows = evaluate_controllers(_scenarios(10), ["none", "droop", "ofo"], feeder, sites, n_scenarios=10, repeats=5)
    assert len(rows) == 150
    table = summarize(rows)
    assert all(std == 0.0 for cols in table.values() for _, std in cols.values())
    again = evaluate_controllers(_scenarios(10), ["none", "droop", "ofo"], feeder, sites, repeats=5, workers=2)
    assert rows_to_csv(rows) == rows_to_csv(again)
    assert rows_to_csv(rows).splitlines()[0] == ",".join(EVAL_COLUMNS)
    header = format_table(table).splitlines()[0].split("\t")
    assert header[1:] == ["integral_voltage_violation_pus", "mean_throughput_tps", "batch_switch_count",
                          "latency_violation_rate"]


def test_evaluate_none_matches_fixed_batch_throughput():
    feeder, sites = _tiny()
    quiet = SamplingConfig(horizon_s=60.0, overlay_probability=0.0, ramp_amplitude=(1.0, 1.0))
    rows = evaluate_controllers([sample_scenario(0, quiet)], ["none"], feeder, sites)
    spec = sites[0].deployments[0].spec
    assert rows[0].metrics["mean_throughput_tps"] == pytest.approx(2500 * spec.throughput_fit.at_batch(128))
    assert rows[0].metrics["batch_switch_count"] == 0


def test_evaluate_rejects_too_many_scenarios():
    feeder, sites = _tiny()
    with pytest.raises(EvaluationError):
        evaluate_controllers(_scenarios(2), ["none"], feeder, sites, n_scenarios=3)


def test_screening_config_serializes():
    d = ScreeningConfig().to_dict()
    assert d["min_baseline_pus"] == 1.0 and d["min_recovery"] == 0.7 and d["ofo"]["rho_x"] == 0.05
