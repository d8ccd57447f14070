"""Gate-error metrics for a 4x4 computational map M against an ideal unitary U.

With the discrepancy channel D(rho) = M U^dag rho U M^dag:

* distance          Delta = ||M - z U||_F^2 with the best global phase z
* average fidelity  mean over Haar states of |<psi| M U^dag |psi>|^2
* diamond error     one half of the diamond norm of D - id, from a search over
                    generalized Choi-Kraus representations
* bounds            (d+1)(1-F)/d <= eta <= sqrt(d(d+1)(1-F))
* unitarity         purity of the trace-removed actual channel
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from .optimize import OptimizerConfig, nelder_mead

D_COMPUTATIONAL = 4
DEFAULT_SAMPLES = 100_000
DEFAULT_S_SEEDS = 10_000


@dataclass
class ComputationalMap:
    """Actual map ``M`` on the computational subspace and its ideal target ``U``."""

    M: np.ndarray
    U: np.ndarray
    label: str = ""
    duration: float = 0.0

    def __post_init__(self):
        self.M = np.asarray(self.M, dtype=complex)
        self.U = np.asarray(self.U, dtype=complex)
        if self.M.shape != self.U.shape or self.M.shape[0] != self.M.shape[1]:
            raise ValueError("M and U must be square matrices of equal shape")
        if not np.allclose(self.U @ self.U.conj().T, np.eye(len(self.U)), atol=1e-10):
            raise ValueError("U is not unitary")
        smax = np.linalg.norm(self.M, 2)
        if smax > 1 + 1e-6:
            raise ValueError(f"M has singular value {smax:.9f} > 1")

    @property
    def dim(self) -> int:
        return len(self.M)

    def discrepancy(self) -> np.ndarray:
        return self.M @ self.U.conj().T


@dataclass
class GateMetrics:
    gate: str
    T_ns: float
    delta: float
    f_avg: float
    eta: float
    eta_pauli: float
    eta_ub: float
    u: float
    n_samples: int = 0
    f_stderr: float = 0.0
    u_stderr: float = 0.0

    def row(self) -> dict:
        return {k: getattr(self, k) for k in METRIC_COLUMNS}


METRIC_COLUMNS = ("gate", "T_ns", "delta", "f_avg", "eta", "eta_pauli", "eta_ub", "u")


# phase-aligned distance -------------------------------------------------------

def distance(M: np.ndarray, U: np.ndarray) -> float:
    """||M - zU||_F^2 with z = +-sqrt(Tr(MU^dag)/conj(Tr(MU^dag))); the smaller branch wins.

    At Tr(MU^dag) = 0 the phase is undefined and z = 1 is used.
    """
    M = np.asarray(M, dtype=complex)
    U = np.asarray(U, dtype=complex)
    tr = np.trace(M @ U.conj().T)
    if abs(tr) == 0.0:
        zs = (1.0,)
    else:
        z = np.sqrt(tr / np.conj(tr))
        zs = (z, -z)
    return float(min(np.linalg.norm(M - z * U, "fro") ** 2 for z in zs))


# Haar states ----------------------------------------------------------------

class RandomStateStream:
    """Seeded source of Haar-random pure states (normalized complex Gaussians)."""

    def __init__(self, seed: int | None = 0, dim: int = D_COMPUTATIONAL):
        self.dim = dim
        self._rng = np.random.default_rng(seed)

    def sample(self, n: int) -> np.ndarray:
        z = self._rng.standard_normal((n, self.dim)) + 1j * self._rng.standard_normal((n, self.dim))
        return z / np.linalg.norm(z, axis=1, keepdims=True)


def haar_state(stream: RandomStateStream) -> np.ndarray:
    return stream.sample(1)[0]


def _as_map(m, U=None) -> ComputationalMap:
    if isinstance(m, ComputationalMap):
        return m
    return ComputationalMap(m, np.eye(len(m)) if U is None else U)


def average_gate_fidelity(cmap, n_samples: int = DEFAULT_SAMPLES, seed: int | None = 0,
                          states: np.ndarray | None = None) -> tuple[float, float]:
    """Monte Carlo average of <psi|D(|psi><psi|)|psi> = |<psi|M U^dag|psi>|^2; returns (mean, stderr)."""
    cmap = _as_map(cmap)
    if states is None:
        if n_samples < 1000:
            raise ValueError("use at least 1000 samples")
        states = RandomStateStream(seed, cmap.dim).sample(n_samples)
    V = cmap.discrepancy()
    amp = np.einsum("si,ij,sj->s", states.conj(), V, states)
    vals = np.abs(amp) ** 2
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals)))


def unitarity(cmap, n_samples: int = DEFAULT_SAMPLES, seed: int | None = 0,
              states: np.ndarray | None = None) -> tuple[float, float]:
    """d/(d-1) times the Haar mean of Tr[G'^dag G'] with G'(rho) = X - Tr(X)/d id, X = M(rho - id/d)M^dag."""
    cmap = _as_map(cmap)
    d = cmap.dim
    if states is None:
        if n_samples < 1000:
            raise ValueError("use at least 1000 samples")
        states = RandomStateStream(seed, d).sample(n_samples)
    M = cmap.M
    out = M @ states.T  # columns M|psi>
    MMd = M @ M.conj().T
    # X = M|psi><psi|M^dag - MM^dag/d;  ||X||_F^2 - |Tr X|^2 / d
    norm_out = np.sum(np.abs(out) ** 2, axis=0)
    cross = np.real(np.einsum("is,ij,js->s", out.conj(), MMd, out))
    fro = norm_out**2 - 2.0 * cross / d + np.real(np.trace(MMd @ MMd)) / d**2
    trX = norm_out - np.real(np.trace(MMd)) / d
    vals = d / (d - 1) * (fro - trX**2 / d)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals)))


def fidelity_bounds(f_avg: float, d: int = D_COMPUTATIONAL) -> tuple[float, float]:
    """(eta_Pauli, eta_ub) from the average gate fidelity."""
    if not -1e-12 <= f_avg <= 1 + 1e-12:
        raise ValueError(f"fidelity must lie in [0, 1], got {f_avg}")
    infid = max(0.0, 1.0 - f_avg)
    return (d + 1) * infid / d, math.sqrt(d * (d + 1) * infid)


# diamond norm ---------------------------------------------------------------

class _DiamondObjective:
    """Half the product of sqrt spectral norms for the Kraus pairs (V, -id) and (V, id)."""

    def __init__(self, V: np.ndarray):
        d = len(V)
        I = np.eye(d)
        Vd = V.conj().T
        self.blocks = (Vd @ V, Vd, V, I)

    def _norms(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        VdV, Vd, V, I = self.blocks
        F1 = (X[:, 0, 0, None, None] * VdV - X[:, 0, 1, None, None] * Vd
              - X[:, 1, 0, None, None] * V + X[:, 1, 1, None, None] * I)
        F2 = (Y[:, 0, 0, None, None] * VdV + Y[:, 0, 1, None, None] * Vd
              + Y[:, 1, 0, None, None] * V + Y[:, 1, 1, None, None] * I)
        F1 = 0.5 * (F1 + F1.conj().swapaxes(1, 2))
        F2 = 0.5 * (F2 + F2.conj().swapaxes(1, 2))
        n1 = np.abs(np.linalg.eigvalsh(F1)).max(axis=1)
        n2 = np.abs(np.linalg.eigvalsh(F2)).max(axis=1)
        return 0.5 * np.sqrt(n1) * np.sqrt(n2)

    def batch(self, S: np.ndarray, max_cond: float = 1e8) -> np.ndarray:
        cond = np.linalg.cond(S)
        ok = np.isfinite(cond) & (cond < max_cond)
        out = np.full(len(S), np.inf)
        if ok.any():
            Sk = S[ok]
            Sinv = np.linalg.inv(Sk)
            X = Sinv.conj().swapaxes(1, 2) @ Sinv
            Y = Sk @ Sk.conj().swapaxes(1, 2)
            out[ok] = self._norms(X, Y)
        return out

    def __call__(self, params: np.ndarray) -> float:
        return float(self.batch(_params_to_s(params)[None])[0])


def _params_to_s(params: np.ndarray) -> np.ndarray:
    A = (params[:4] + 1j * params[4:]).reshape(2, 2)
    return scipy.linalg.expm(A)


def _expm_2x2(A: np.ndarray) -> np.ndarray:
    """Batched closed-form exponential of 2x2 complex matrices."""
    tr = (A[:, 0, 0] + A[:, 1, 1]) / 2
    B = A - tr[:, None, None] * np.eye(2)
    det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
    q = np.sqrt(-det)
    small = np.abs(q) < 1e-8
    qs = np.where(small, 1.0, q)
    sinhc = np.where(small, 1.0 + q**2 / 6.0, np.sinh(qs) / qs)
    out = np.cosh(q)[:, None, None] * np.eye(2) + sinhc[:, None, None] * B
    return np.exp(tr)[:, None, None] * out


def diamond_error_rate(cmap, n_seeds: int = DEFAULT_S_SEEDS, seed: int | None = 0,
                       cfg: OptimizerConfig | None = None) -> float:
    """eta = 1/2 inf_S ||...||^{1/2} ||...||^{1/2} over invertible 2x2 S.

    Random seeds S = exp(A) with standard-normal complex A, then a simplex
    polish of the 8 real parameters of A from the best seed.
    """
    cmap = _as_map(cmap)
    obj = _DiamondObjective(cmap.discrepancy())
    rng = np.random.default_rng(seed)
    params = rng.standard_normal((n_seeds, 8))
    A = (params[:, :4] + 1j * params[:, 4:]).reshape(-1, 2, 2)
    vals = obj.batch(_expm_2x2(A))
    # identity S is a natural candidate as well
    vals_id = obj.batch(np.eye(2, dtype=complex)[None])[0]
    if vals_id <= vals.min():
        x0, f0 = np.zeros(8), vals_id
    else:
        i = int(np.argmin(vals))
        x0, f0 = params[i], vals[i]
    cfg = cfg or OptimizerConfig(scale=0.1, relative=False, max_evals=4000, tol=1e-12, restarts=2)
    res = nelder_mead(obj, x0, cfg)
    return float(min(res.fun, f0))


# distributions ----------------------------------------------------------------

def statistical_distance(p: Sequence[float], q: Sequence[float]) -> float:
    """Half the l1 distance; ``q`` is not renormalized (leakage stays visible)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("distributions must have the same length")
    if (p < 0).any() or (q < -1e-15).any():
        raise ValueError("probabilities must be non-negative")
    return float(0.5 * np.abs(p - q).sum())


# full report ------------------------------------------------------------------

def gate_metrics(cmap: ComputationalMap, n_samples: int = DEFAULT_SAMPLES, seed: int = 0,
                 n_seeds: int = DEFAULT_S_SEEDS) -> GateMetrics:
    states = RandomStateStream(seed, cmap.dim).sample(n_samples)
    f, f_err = average_gate_fidelity(cmap, states=states)
    u, u_err = unitarity(cmap, states=states)
    eta = diamond_error_rate(cmap, n_seeds=n_seeds, seed=seed)
    lo, hi = fidelity_bounds(min(f, 1.0), cmap.dim)
    return GateMetrics(
        gate=cmap.label, T_ns=cmap.duration, delta=distance(cmap.M, cmap.U), f_avg=f, eta=eta,
        eta_pauli=lo, eta_ub=hi, u=u, n_samples=n_samples, f_stderr=f_err, u_stderr=u_err,
    )


def write_metrics_csv(path: str | Path, rows: Sequence[GateMetrics]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)
        for r in rows:
            writer.writerow([r.gate, f"{r.T_ns:.3f}", f"{r.delta:.6f}", f"{r.f_avg:.6f}", f"{r.eta:.6f}",
                             f"{r.eta_pauli:.6f}", f"{r.eta_ub:.6f}", f"{r.u:.6f}"])
