import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from conftest import random_unitary
from transmon_lab import gates
from transmon_lab.calibrate import (
    CalibrationError,
    GateCalibration,
    calibrate_frequencies,
    calibrate_table,
    distance_objective,
    fit_phase_slope,
    gate_map,
    gate_target,
    optimize_gate,
    rotation_vector,
    scan_cr_amplitudes,
    vz_phase_correction,
    write_report,
)
from transmon_lab.model import TWO_PI, BasisConfig, DeviceParameters
from transmon_lab.optimize import OptimizerConfig
from transmon_lab.pulses import literature_table
from transmon_lab.solver import Propagator

SMALL = BasisConfig(-4, 4, 1)


@pytest.fixture(scope="module")
def small_prop():
    return Propagator(DeviceParameters.reference(), SMALL, 1e-3)


def test_distance_objective_examples(rng):
    U = random_unitary(rng)
    assert distance_objective(U, U) == pytest.approx(0.0, abs=1e-24)
    assert distance_objective(np.exp(2.1j) * U, U) == pytest.approx(0.0, abs=1e-12)
    assert distance_objective(np.eye(4), np.diag([1, 1, 1, 1j])) == pytest.approx(8 - 2 * math.sqrt(10))


def test_vz_recovers_planted_phases(rng):
    U = random_unitary(rng)
    M = gates.zz_frame(-0.1, 0.2) @ U
    assert vz_phase_correction(M, U) == pytest.approx((0.1, -0.2), abs=1e-4)
    assert vz_phase_correction(U, U) == pytest.approx((0.0, 0.0), abs=1e-6)


@settings(max_examples=10, deadline=None)
@given(a=st.floats(-3.0, 3.0), b=st.floats(-3.0, 3.0), seed=st.integers(0, 2**32 - 1))
def test_vz_grid_search_finds_large_phases(a, b, seed):
    U = random_unitary(np.random.default_rng(seed))
    phi = vz_phase_correction(gates.zz_frame(a, b) @ U, U, grid=8)
    M = gates.zz_frame(*phi) @ gates.zz_frame(a, b) @ U
    assert distance_objective(M, U) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("rate, beat", [(0.003, 0.0012), (-0.02, 0.0), (0.0, 0.002)])
def test_phase_slope_through_beat_node(rate, beat):
    t = np.arange(0.0, 4000.0, 0.5)
    c = 0.5 * np.cos(beat * t / 2) * np.exp(1j * rate * t)
    got, rms = fit_phase_slope(t, c)
    assert got == pytest.approx(rate, abs=1e-9)
    assert rms < 1e-6


def test_phase_slope_with_noise():
    rng = np.random.default_rng(2)
    t = np.arange(0.0, 4000.0, 1.0)
    c = 0.5 * np.exp(1j * (0.01 * t + 0.02 * rng.normal(size=t.size)))
    got, rms = fit_phase_slope(t, c)
    assert got == pytest.approx(0.01, abs=1e-6)
    assert rms == pytest.approx(0.02, rel=0.1)


def test_phase_slope_rejects_zero_signal():
    with pytest.raises(CalibrationError):
        fit_phase_slope(np.arange(5.0), np.zeros(5))


@settings(max_examples=20, deadline=None)
@given(axis=st.tuples(*[st.floats(-1, 1)] * 3), rate=st.floats(0.01, 1.0))
def test_rotation_vector_recovers_planted_rotation(axis, rate):
    n = np.array(axis)
    if np.linalg.norm(n) < 0.1:
        n = np.array([1.0, 0.0, 0.0])
    w = rate * n / np.linalg.norm(n)
    t = np.linspace(0.0, 5.0 / rate, 2001)
    r0 = np.array([0.0, 0.0, 1.0]) if abs(w[2]) < 0.9 * rate else np.array([1.0, 0.0, 0.0])
    r = Rotation.from_rotvec(np.outer(t, w)).apply(r0)
    got, ok = rotation_vector(t, r)
    assert ok
    perp = w - np.dot(w, r0) * r0 if np.allclose(np.cross(w, r0), 0) else w
    np.testing.assert_allclose(got, perp, atol=1e-3 * rate)


def test_rotation_vector_static_and_tiny_motion():
    t = np.linspace(0.0, 10.0, 11)
    still = np.tile([0.0, 0.0, 1.0], (11, 1))
    assert rotation_vector(t, still) == (pytest.approx(np.zeros(3)), True)
    jitter = still.copy()
    jitter[::2, 0] = 1e-6
    w, ok = rotation_vector(t, jitter)
    assert not ok and not w.any()


def test_gate_names_and_targets():
    np.testing.assert_allclose(gate_target("GD2_pi"), gates.x_gate(2, math.pi))
    np.testing.assert_allclose(gate_target("GF2_CR4"), gates.cnot(2, 1))
    for bad in ("GD3_pi", "GF1_CR3", "XX1_pi", "GD1_pi/4"):
        with pytest.raises(ValueError):
            gate_target(bad)


def test_decoupled_frequencies_equal_bare():
    dev = DeviceParameters.from_ghz(g1=0.0, g2=0.0)
    prop = Propagator(dev, BasisConfig(-6, 6, 1), 1e-3)
    w = calibrate_frequencies(dev, BasisConfig(-6, 6, 1), duration=200.0, stride=1.0)
    np.testing.assert_allclose(np.array(w) / TWO_PI, np.array(prop.omega_bar) / TWO_PI, atol=1e-3)


def test_resonator_lowers_frequencies(reference_device):
    bare = Propagator(reference_device, SMALL, 1e-3).omega_bar
    w = calibrate_frequencies(reference_device, SMALL, duration=300.0, stride=1.0)
    shift = (np.array(w) - np.array(bare)) / TWO_PI
    assert np.all(shift < 0)


def test_failed_frequency_fit_raises(reference_device):
    with pytest.raises(CalibrationError, match="residual"):
        calibrate_frequencies(reference_device, SMALL, duration=20.0, stride=1.0, max_rms=-1.0)


def test_cr_scan_zero_drive_and_linear_regime(small_prop):
    grid = np.linspace(0.0, 0.004, 5)
    scan = scan_cr_amplitudes(small_prop, 1, 2, grid, window=40.0)
    assert scan.valid.all()
    assert abs(scan.ix[0, 0]) < 1e-5 and abs(scan.zx[0, 0]) < 1e-5
    for series in (scan.ix[:, 0], scan.zx[:, 0]):
        fit = np.polyfit(grid, series, 1)
        resid = series - np.polyval(fit, grid)
        assert 1 - resid.var() / series.var() > 0.99
    assert len(scan.rows()) == 5


def test_cancel_drive_moves_ix_only(small_prop):
    scan = scan_cr_amplitudes(small_prop, 1, 2, [0.002], [0.0, 0.001, 0.002], window=40.0)
    d_ix = np.diff(scan.ix[0])
    d_zx = np.diff(scan.zx[0])
    assert d_ix[0] == pytest.approx(d_ix[1], rel=0.05)
    assert np.abs(d_zx).max() < 0.05 * abs(d_ix[0])


def test_cr_scan_rejects_same_qubit(small_prop):
    with pytest.raises(ValueError):
        scan_cr_amplitudes(small_prop, 1, 1, [0.0])


def test_gate_map_applies_frame(small_prop):
    table = literature_table(small_prop.omega_bar)
    raw, T = gate_map(small_prop, "GD1_pi", table, correct=False)
    corrected, _ = gate_map(small_prop, "GD1_pi", table)
    assert T == 83.0
    np.testing.assert_allclose(corrected, gates.zz_frame(-0.00354, 0.00283) @ raw, atol=1e-12)


@pytest.fixture(scope="module")
def optimized(small_prop):
    table = literature_table(small_prop.omega_bar)
    return optimize_gate(small_prop, "GD1_pi/2", table, OptimizerConfig(max_evals=14))


def test_optimization_never_increases_distance(optimized, small_prop):
    table, cal = optimized
    assert min(cal.history) <= cal.delta_seed
    assert cal.delta <= cal.delta_seed
    assert cal.n_evals <= 14 + 2 and not cal.converged
    M, _ = gate_map(small_prop, "GD1_pi/2", table)
    assert distance_objective(M, gate_target("GD1_pi/2")) == pytest.approx(cal.delta, abs=1e-12)
    assert table.gd["GD1_pi/2"].phi1 == cal.vz[0]


def test_optimization_is_a_fixed_point():
    # decoupled device with frequencies fitted at the same step, so the seed is near optimal
    dev = DeviceParameters.from_ghz(g1=0.0, g2=0.0)
    basis = BasisConfig(-4, 4, 0)
    w = calibrate_frequencies(dev, basis, tau=2e-3, duration=100.0, stride=0.5)
    prop = Propagator(dev.with_omega_bar(w), basis, 2e-3)
    cfg = OptimizerConfig(max_evals=60, tol=1e-9)
    first, cal = optimize_gate(prop, "GD1_pi/2", literature_table(prop.omega_bar), cfg)
    assert cal.converged
    _, again = optimize_gate(prop, "GD1_pi/2", first, cfg)
    assert again.delta_seed - min(again.history) < cfg.tol
    np.testing.assert_allclose(again.params, cal.params, rtol=1e-3)


def test_optimize_reports_failure_threshold(optimized):
    _, cal = optimized
    failed = GateCalibration(**{**vars(cal), "threshold": cal.delta / 2})
    assert not failed.passed
    assert failed.report()["passed"] is False


def test_calibrate_table_checkpoints_and_report(small_prop, tmp_path):
    seen = []
    table, reports = calibrate_table(
        small_prop, literature_table((1.0, 2.0)), names=["GD2_pi"], cfg=OptimizerConfig(max_evals=4),
        checkpoint=lambda t, c: seen.append(c.name),
    )
    assert seen == ["GD2_pi"]
    assert table.omega_bar == tuple(small_prop.omega_bar)
    write_report(tmp_path / "r.json", table.omega_bar, reports)
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["gates"][0]["name"] == "GD2_pi"
    assert set(doc["gates"][0]) >= {"seed", "params", "history", "vz", "passed"}
