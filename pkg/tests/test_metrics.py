import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_unitary
from oracles import haar_average_fidelity, unitary_diamond_rate
from transmon_lab.metrics import (
    ComputationalMap,
    RandomStateStream,
    average_gate_fidelity,
    diamond_error_rate,
    distance,
    fidelity_bounds,
    gate_metrics,
    haar_state,
    statistical_distance,
    unitarity,
    write_metrics_csv,
)

N = 20_000


@pytest.fixture
def U(rng):
    return random_unitary(rng)


def within_3_sigma(value_err, expected):
    value, err = value_err
    return abs(value - expected) <= 3 * err + 1e-12


def test_distance_examples(U):
    assert distance(U, U) == pytest.approx(0.0, abs=1e-24)
    assert distance(np.eye(4), np.diag([1, 1, 1, 1j])) == pytest.approx(8 - 2 * math.sqrt(10), abs=1e-12)


@settings(max_examples=50)
@given(phi=st.floats(-10, 10), seed=st.integers(0, 2**32 - 1))
def test_distance_phase_invariant(phi, seed):
    rng = np.random.default_rng(seed)
    U = random_unitary(rng)
    M = 0.9 * random_unitary(rng) @ np.diag(rng.uniform(0.5, 1, 4))
    assert distance(np.exp(1j * phi) * M, U) == pytest.approx(distance(M, U), abs=1e-12)
    assert distance(np.exp(1j * phi) * U, U) == pytest.approx(0.0, abs=1e-12)


def test_distance_zero_trace_uses_unit_phase():
    M = np.diag([1, -1, 1, -1]).astype(complex)
    assert distance(M, np.eye(4)) == pytest.approx(8.0)


def test_fidelity_examples(U):
    assert average_gate_fidelity(ComputationalMap(U, U), N)[0] == pytest.approx(1.0, abs=1e-14)
    assert within_3_sigma(average_gate_fidelity(ComputationalMap(0.9 * U, U), N), 0.81)
    flip = U @ np.diag([1, 1, 1, -1])
    assert within_3_sigma(average_gate_fidelity(ComputationalMap(flip, U), N), 0.4)


def test_fidelity_rejects_few_samples(U):
    with pytest.raises(ValueError):
        average_gate_fidelity(ComputationalMap(U, U), 10)


def test_unitary_channel_oracle(rng):
    stream = RandomStateStream(5)
    states = stream.sample(N)
    for _ in range(50):
        U = random_unitary(rng)
        M = random_unitary(rng)
        f = average_gate_fidelity(ComputationalMap(M, U), states=states)
        assert within_3_sigma(f, haar_average_fidelity(M, U))
    for _ in range(8):
        # small unitary errors so the hull may or may not contain the origin
        U = random_unitary(rng)
        H = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        V = random_unitary(rng) if rng.random() < 0.25 else _expm_herm(0.3 * (H + H.conj().T))
        eta = diamond_error_rate(ComputationalMap(V @ U, U), n_seeds=2000, seed=1)
        assert eta == pytest.approx(unitary_diamond_rate(V), abs=0.01)


def _expm_herm(H):
    w, v = np.linalg.eigh(H)
    return (v * np.exp(1j * w)) @ v.conj().T


def test_diamond_examples(U):
    assert diamond_error_rate(ComputationalMap(U, U), n_seeds=500) == pytest.approx(0.0, abs=1e-6)
    flip = ComputationalMap(U @ np.diag([1, 1, 1, -1]), U)
    assert diamond_error_rate(flip, n_seeds=2000) == pytest.approx(1.0, abs=0.01)
    damp = ComputationalMap(math.sqrt(0.9) * U, U)
    assert diamond_error_rate(damp, n_seeds=2000) == pytest.approx(0.05, abs=0.005)


def test_diamond_reproducible_across_seeds(rng):
    U = random_unitary(rng)
    V = _expm_herm(0.05 * np.diag([0.3, -0.1, 0.5, 0.0]))
    M = 0.995 * V @ U
    etas = [diamond_error_rate(ComputationalMap(M, U), n_seeds=2000, seed=s) for s in range(3)]
    assert max(etas) - min(etas) < 0.005 * max(etas) + 1e-6


def test_unitarity_examples(U):
    assert within_3_sigma(unitarity(ComputationalMap(U, np.eye(4)), N), 1.0)
    assert unitarity(ComputationalMap(U, np.eye(4)), N)[0] == pytest.approx(1.0, abs=1e-10)
    assert unitarity(ComputationalMap(math.sqrt(0.9) * U, U), N)[0] == pytest.approx(0.81, abs=1e-10)


@pytest.mark.parametrize(
    "f, expected",
    [(1.0, (0.0, 0.0)), (0.9943, (0.0071, 0.34)), (0.9946, (0.0068, 0.33))],
)
def test_fidelity_bounds(f, expected):
    lo, hi = fidelity_bounds(f)
    assert lo == pytest.approx(expected[0], abs=6e-5)
    assert hi == pytest.approx(expected[1], abs=6e-3)


def test_fidelity_bounds_reject_out_of_range():
    with pytest.raises(ValueError):
        fidelity_bounds(1.5)


def test_bound_sandwich_and_phase_invariance(rng):
    U = random_unitary(rng)
    V = _expm_herm(0.05 * (lambda A: A + A.conj().T)(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))))
    M = 0.997 * V @ U
    m = gate_metrics(ComputationalMap(M, U), n_samples=N, n_seeds=2000)
    assert m.eta_pauli - 3 * m.f_stderr <= m.eta <= m.eta_ub
    m2 = gate_metrics(ComputationalMap(np.exp(0.7j) * M, U), n_samples=N, n_seeds=2000)
    assert m2.delta == pytest.approx(m.delta, abs=1e-12)
    assert m2.f_avg == pytest.approx(m.f_avg, abs=1e-12)
    assert m2.u == pytest.approx(m.u, abs=1e-12)
    assert m2.eta == pytest.approx(m.eta, abs=1e-4)


def test_stderr_scales_as_inverse_sqrt(rng):
    U = random_unitary(rng)
    cmap = ComputationalMap(0.95 * random_unitary(rng), U)
    errs = [average_gate_fidelity(cmap, n, seed=3)[1] for n in (1000, 10_000, 100_000)]
    assert errs[0] / errs[1] == pytest.approx(math.sqrt(10), rel=0.15)
    assert errs[1] / errs[2] == pytest.approx(math.sqrt(10), rel=0.15)


def test_haar_stream():
    a = RandomStateStream(9).sample(100_000)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-12)
    p = np.abs(a[:, 0]) ** 2
    assert abs(p.mean() - 0.25) < 3 * p.std() / math.sqrt(len(p))
    np.testing.assert_array_equal(RandomStateStream(4).sample(5), RandomStateStream(4).sample(5))
    assert np.linalg.norm(haar_state(RandomStateStream(1))) == pytest.approx(1.0)


@pytest.mark.parametrize(
    "p, q, expected",
    [
        ((0.1, 0.2, 0.3, 0.4), (0.1, 0.2, 0.3, 0.4), 0.0),
        ((1, 0, 0, 0), (0, 1, 0, 0), 1.0),
        ((1, 0, 0, 0), (0.75, 0.25, 0, 0), 0.25),
        ((1, 0, 0, 0), (0.9, 0.0, 0.0, 0.0), 0.05),
    ],
)
def test_statistical_distance(p, q, expected):
    assert statistical_distance(p, q) == pytest.approx(expected)


def test_statistical_distance_errors():
    with pytest.raises(ValueError):
        statistical_distance((1, 0), (1, 0, 0))
    with pytest.raises(ValueError):
        statistical_distance((1.1, -0.1), (1, 0))


def test_map_validation():
    with pytest.raises(ValueError, match="unitary"):
        ComputationalMap(np.eye(4), 2 * np.eye(4))
    with pytest.raises(ValueError, match="singular value"):
        ComputationalMap(1.1 * np.eye(4), np.eye(4))
    with pytest.raises(ValueError, match="shape"):
        ComputationalMap(np.eye(2), np.eye(4))


def test_metrics_csv_columns(tmp_path, U):
    m = gate_metrics(ComputationalMap(U, U, "X1_pi", 83.0), n_samples=2000, n_seeds=100)
    path = tmp_path / "m.csv"
    write_metrics_csv(path, [m])
    header, row = path.read_text().splitlines()
    assert header == "gate,T_ns,delta,f_avg,eta,eta_pauli,eta_ub,u"
    assert row.startswith("X1_pi,83.000,")
