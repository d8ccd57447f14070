import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import rosen

from transmon_lab.optimize import OptimizerConfig, nelder_mead


def bowl(x):
    return (x[0] - 1) ** 2 + (x[1] - 2) ** 2


def test_quadratic_bowl():
    res = nelder_mead(bowl, [0.0, 0.0], OptimizerConfig(max_evals=2000, tol=1e-16))
    assert res.converged
    np.testing.assert_allclose(res.x, [1.0, 2.0], atol=1e-6)


def test_rosenbrock_with_restarts():
    cfg = OptimizerConfig(scale=0.1, max_evals=5000, tol=1e-14, restarts=3)
    res = nelder_mead(rosen, [-1.2, 1.0], cfg)
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-3)


def test_constant_objective_stops_at_once():
    res = nelder_mead(lambda x: 3.0, [0.5, 0.5, 0.5])
    assert res.converged
    assert res.n_evals == 4
    assert res.fun == 3.0


def test_exhaustion_returns_best_so_far():
    res = nelder_mead(rosen, [-1.2, 1.0], OptimizerConfig(max_evals=20, tol=1e-14))
    assert res.exhausted
    assert res.n_evals <= 21
    assert res.fun == min(res.history)
    assert res.fun < rosen(np.array([-1.2, 1.0]))


def test_deterministic():
    a = nelder_mead(rosen, [-1.2, 1.0], OptimizerConfig(max_evals=300))
    b = nelder_mead(rosen, [-1.2, 1.0], OptimizerConfig(max_evals=300))
    assert a.history == b.history
    np.testing.assert_array_equal(a.x, b.x)


def test_nan_is_treated_as_worse():
    f = lambda x: np.nan if x[0] > 0.2 else (x[0] + 1) ** 2
    res = nelder_mead(f, [0.0], OptimizerConfig(scale=0.1, relative=False, max_evals=500))
    assert res.x[0] == pytest.approx(-1.0, abs=1e-3)


def test_invalid_inputs():
    with pytest.raises(ValueError, match="tol"):
        OptimizerConfig(tol=0.0)
    with pytest.raises(ValueError, match="max_evals"):
        nelder_mead(bowl, [0.0, 0.0], OptimizerConfig(max_evals=2))
    with pytest.raises(ValueError, match="finite"):
        nelder_mead(lambda x: np.inf, [0.0])
    with pytest.raises(ValueError, match="non-empty"):
        nelder_mead(bowl, [])


@settings(max_examples=25, deadline=None)
@given(x0=st.lists(st.floats(-5, 5), min_size=1, max_size=4))
def test_never_worse_than_seed(x0):
    f = lambda x: float(np.sum((x - 0.3) ** 2) + np.sum(np.cos(3 * x)))
    res = nelder_mead(f, x0, OptimizerConfig(max_evals=200))
    assert res.fun <= f(np.asarray(x0))
