from __future__ import annotations

import json
import math

import numpy as np
import pytest

from cayley_search.experiments import (
    FAIL_FRACTION,
    fit_power_law,
    format_csv,
    gamma_deviation_study,
    merged_weights,
    noise_study,
    perturbation_study,
    rerun,
    sweep_branching,
    sweep_size_small_M,
    write_csv,
    write_sidecar,
)
from cayley_search.graph import ConnectHalfGroupsToRoot, ResizeGroup, ReweighEdge

UNIFORM_33 = {"kind": "cayley", "r": 2, "M": 33}


def test_merged_weights():
    assert merged_weights(2, 100) == (100.0, 1.0)
    assert merged_weights(3, 10) == (100.0, 10.0, 1.0)


def test_fit_power_law_recovers_exponent():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    slope, pre = fit_power_law(x, 3.0 * x**-1.5)
    assert slope == pytest.approx(-1.5)
    assert pre == pytest.approx(3.0)


# --- sweeps ----------------------------------------------------------------


def test_uniform_branching_sweep_is_flat():
    recs = sweep_branching(2, [25, 50, 100, 200])
    assert [r.extra["M"] for r in recs] == [25, 50, 100, 200]
    assert all(r.success >= 0.99 for r in recs)
    assert max(r.success for r in recs) - min(r.success for r in recs) < 0.01


def test_weighted_branching_sweep():
    recs = sweep_branching(2, [50, 100, 200], mode="single")
    succ = [r.success for r in recs]
    assert all(s >= 0.97 for s in succ)
    assert succ == sorted(succ)


def test_smallest_branching_factor_record():
    (rec,) = sweep_branching(2, [2])
    assert rec.extra["N"] == 7
    assert 0.0 <= rec.success <= 1.0


def test_sweep_validation():
    with pytest.raises(ValueError):
        sweep_branching(2, [])
    with pytest.raises(ValueError):
        sweep_branching(2, [4], mode="sideways")


def test_parallel_sweep_keeps_input_order():
    serial = sweep_branching(2, [40, 10, 20])
    par = sweep_branching(2, [40, 10, 20], jobs=2)
    assert [r.extra["M"] for r in par] == [40, 10, 20]
    assert [r.success for r in par] == [r.success for r in serial]


def test_small_m_sweep_height_one():
    (rec,) = sweep_size_small_M([1])
    assert rec.extra["N"] == 3


def test_small_m_sweep_height_fifteen():
    (rec,) = sweep_size_small_M([15])
    assert rec.extra["N"] == 65535
    assert rec.success > 0.75
    assert rec.extra["gap_sqrtN"] == pytest.approx(1.764, rel=0.05)


def test_small_m_gap_exponent():
    recs = sweep_size_small_M([8, 10, 12, 15])
    slope, _ = fit_power_law([r.extra["N"] for r in recs], [r.extra["gap"] for r in recs])
    assert abs(slope + 0.5) < 0.05


def test_small_m_height_limit():
    with pytest.raises(ValueError):
        sweep_size_small_M([21])


# --- detuned rate ----------------------------------------------------------


@pytest.fixture(scope="module")
def detuned():
    return gamma_deviation_study(3, [100, 500, 1000])


def test_detuned_time_is_pi_m(detuned):
    assert detuned[0].extra["gamma"] == 1.0
    assert detuned[0].total_time == pytest.approx(math.pi * 100, rel=0.05)


@pytest.mark.parametrize("i,target,tol", [(0, 0.20, 0.03), (1, 0.09, 0.02), (2, 0.065, 0.015)])
def test_detuned_success_levels(detuned, i, target, tol):
    assert abs(detuned[i].success - target) <= tol


def test_detuned_success_exponent(detuned):
    slope, _ = fit_power_law([r.extra["M"] for r in detuned], [r.success for r in detuned])
    assert abs(slope + 0.5) <= 0.1


def test_detuned_constant_factor(detuned):
    assert all(1 / 3 <= r.extra["expected_time_ratio"] <= 3 for r in detuned)


def test_detuned_both_modes():
    recs = gamma_deviation_study(3, [50], gamma_mode="both")
    assert [r.extra["gamma"] for r in recs] == [1.0, 1.04]
    with pytest.raises(ValueError):
        gamma_deviation_study(3, [50], gamma_mode="sideways")


# --- noise -----------------------------------------------------------------


def test_zero_noise_has_no_spread():
    (rec,) = noise_study(UNIFORM_33, [0.0], trials=4)
    assert rec.extra["std"] == 0.0
    assert rec.success == pytest.approx(rec.extra["baseline_success"], abs=1e-12)


def test_small_noise_keeps_mean_success():
    (rec,) = noise_study(UNIFORM_33, [1e-3], trials=20, seed=42)
    assert abs(rec.extra["relative_change"]) < 0.05
    assert len(rec.diagnostics["trial_success"]) == 20
    assert rec.extra["stderr"] == pytest.approx(rec.extra["std"] / math.sqrt(20))


def test_noise_mean_decreases_with_sigma():
    low, high = noise_study(UNIFORM_33, [1e-3, 1e-1], trials=20)
    assert high.success <= low.success


def test_noise_is_reproducible():
    a = noise_study(UNIFORM_33, [1e-2], trials=3, seed=5)[0]
    b = noise_study(UNIFORM_33, [1e-2], trials=3, seed=5)[0]
    assert a.diagnostics["trial_success"] == b.diagnostics["trial_success"]


def test_weighted_noise_degradation_is_reported():
    spec = {"kind": "cayley", "r": 2, "M": 50, "layer_weights": [50, 1]}
    (rec,) = noise_study(spec, [1e-2], trials=3, schedule_mode="merged")
    assert 0 < rec.extra["baseline_success"] <= 1
    assert "relative_change" in rec.extra


def test_noise_trials_validation():
    with pytest.raises(ValueError):
        noise_study(UNIFORM_33, [1e-3], trials=0)


# --- perturbations ---------------------------------------------------------


def test_identity_resize_equals_baseline():
    rec = perturbation_study({"kind": "cayley", "r": 2, "M": 20}, ResizeGroup(20))
    assert rec.success == pytest.approx(rec.extra["baseline_success"], abs=1e-10)


def test_moderate_resize_keeps_success():
    rec = perturbation_study({"kind": "cayley", "r": 2, "M": 100}, ResizeGroup(500))
    assert rec.success > 0.99


def test_reweighed_edge_keeps_success():
    rec = perturbation_study({"kind": "cayley", "r": 2, "M": 100}, ReweighEdge(1e4))
    assert rec.success > 0.99


def test_half_groups_to_root_fails():
    rec = perturbation_study({"kind": "cayley", "r": 2, "M": 50}, ConnectHalfGroupsToRoot())
    assert rec.extra["failed"]
    assert rec.success < FAIL_FRACTION * rec.extra["baseline_success"]


# --- records and files -----------------------------------------------------


def test_record_reruns_identically():
    rec = sweep_branching(2, [30])[0]
    again = rerun(rec)
    assert again.success == rec.success
    assert again.total_time == rec.total_time


def test_perturbed_record_reruns_identically():
    rec = perturbation_study({"kind": "cayley", "r": 2, "M": 10}, ResizeGroup(4))
    assert rerun(rec).success == rec.success


def test_record_is_self_describing():
    rec = sweep_branching(2, [30])[0]
    doc = json.loads(json.dumps(rec.to_dict()))
    assert doc["spec"]["graph"]["M"] == 30
    assert 0 <= doc["success"] <= 1 and doc["total_time"] >= 0


def test_csv_header_and_append(tmp_path):
    path = tmp_path / "out.csv"
    write_csv(path, [{"M": 10, "success": 0.5}], "cayley-search sweep-m --M-list 10")
    write_csv(path, [{"M": 20, "success": 0.25}], "ignored", append=True)
    lines = path.read_text().splitlines()
    assert lines == ["# cayley-search sweep-m --M-list 10", "M,success", "10,0.5", "20,0.25"]


def test_csv_formatting():
    text = format_csv([{"a": True, "b": 0.1}, {"a": False, "c": 2}])
    assert text.splitlines() == ["a,b,c", "true,0.1,", "false,,2"]


def test_sidecar(tmp_path):
    side = write_sidecar(tmp_path / "out.csv", {"r": 2, "w": np.array([1.0, 2.0])})
    assert side.name == "out.csv.json"
    assert json.loads(side.read_text()) == {"r": 2, "w": [1.0, 2.0]}
