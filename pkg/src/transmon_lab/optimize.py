"""Downhill-simplex minimizer shared by pulse calibration and the diamond-norm search."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class OptimizerConfig:
    """Simplex settings.

    ``scale`` is the initial simplex offset per parameter, either absolute
    (``relative=False``) or as a fraction of the seed value.  Parameters whose
    seed is zero get the absolute ``floor`` instead of a relative offset.
    """

    scale: float | Sequence[float] = 0.05
    relative: bool = True
    floor: float = 1e-3
    max_evals: int = 500
    tol: float = 1e-8
    xtol: float = 0.0
    restarts: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    n_evals: int
    converged: bool
    history: list[float] = field(default_factory=list)

    @property
    def exhausted(self) -> bool:
        return not self.converged


def _initial_simplex(x0: np.ndarray, cfg: OptimizerConfig) -> np.ndarray:
    n = len(x0)
    scale = np.broadcast_to(np.asarray(cfg.scale, dtype=float), (n,))
    simplex = np.tile(x0, (n + 1, 1))
    for i in range(n):
        step = scale[i] * abs(x0[i]) if cfg.relative else scale[i]
        if step == 0.0:
            step = cfg.floor
        simplex[i + 1, i] += step
    return simplex


def nelder_mead(
    objective: Callable[[np.ndarray], float],
    x0: Sequence[float],
    cfg: OptimizerConfig | None = None,
) -> OptimizeResult:
    """Minimize ``objective`` with reflection 1, expansion 2, contraction 1/2, shrink 1/2.

    Deterministic for a fixed ``x0`` and ``cfg``.  Stops when the spread of
    objective values over the simplex drops below ``cfg.tol`` (and the simplex
    diameter below ``cfg.xtol``) or when ``cfg.max_evals`` is used up; in the
    latter case the best vertex is returned with ``converged=False``.
    Restarts rebuild the simplex around the incumbent and spend the
    remaining budget.
    """
    cfg = cfg or OptimizerConfig()
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 1 or len(x0) == 0:
        raise ValueError("x0 must be a non-empty vector")
    if cfg.max_evals < len(x0) + 1:
        raise ValueError("max_evals must be at least dimension + 1")
    n_evals = 0
    history: list[float] = []

    def f(x):
        nonlocal n_evals
        n_evals += 1
        val = float(objective(x))
        if math.isnan(val):
            val = math.inf
        history.append(val)
        return val

    first = f(x0)
    if not math.isfinite(first):
        raise ValueError("objective is not finite at x0")

    best_x, best_f = x0.copy(), first
    converged = False
    for attempt in range(cfg.restarts + 1):
        simplex = _initial_simplex(best_x, cfg)
        values = np.empty(len(simplex))
        values[0] = best_f
        for i in range(1, len(simplex)):
            values[i] = f(simplex[i])
        converged = False
        while n_evals < cfg.max_evals:
            order = np.argsort(values, kind="stable")
            simplex, values = simplex[order], values[order]
            spread = values[-1] - values[0]
            diameter = np.max(np.abs(simplex[1:] - simplex[0]))
            if spread <= cfg.tol and (cfg.xtol == 0.0 or diameter <= cfg.xtol):
                converged = True
                break
            centroid = simplex[:-1].mean(axis=0)
            worst = simplex[-1]
            xr = centroid + (centroid - worst)
            fr = f(xr)
            if fr < values[0]:
                xe = centroid + 2.0 * (centroid - worst)
                fe = f(xe)
                if fe < fr:
                    simplex[-1], values[-1] = xe, fe
                else:
                    simplex[-1], values[-1] = xr, fr
                continue
            if fr < values[-2]:
                simplex[-1], values[-1] = xr, fr
                continue
            if fr < values[-1]:
                xc = centroid + 0.5 * (xr - centroid)
                fc = f(xc)
                accept = fc <= fr
            else:
                xc = centroid + 0.5 * (worst - centroid)
                fc = f(xc)
                accept = fc < values[-1]
            if accept:
                simplex[-1], values[-1] = xc, fc
                continue
            for i in range(1, len(simplex)):
                simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0])
                values[i] = f(simplex[i])
        i = int(np.argmin(values))
        if values[i] < best_f:
            best_x, best_f = simplex[i].copy(), float(values[i])
        if n_evals >= cfg.max_evals:
            break
    return OptimizeResult(best_x, best_f, n_evals, converged, history)
