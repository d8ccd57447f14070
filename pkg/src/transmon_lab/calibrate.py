"""Frequency calibration, cross-resonance scans and simplex refinement of pulse parameters."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import gates
from .metrics import distance
from .model import BasisConfig, DeviceParameters, TWO_PI
from .optimize import OptimizeResult, OptimizerConfig, nelder_mead
from .pulses import (
    ANGLES,
    FLAT_RISE,
    FLAT_SIGMA,
    CalibratedGateTable,
    DriveTerm,
    PhaseFrame,
    PulseSchedule,
    cnot_schedule,
    gd_name,
    gf_name,
    single_qubit_gate,
)
from .solver import TAU_FAST, Propagator

__all__ = [
    "CalibrationError",
    "CrScanResult",
    "GateCalibration",
    "OptimizerConfig",
    "calibrate_frequencies",
    "calibrate_table",
    "distance_objective",
    "gate_map",
    "gate_target",
    "nelder_mead",
    "optimize_gate",
    "scan_cr_amplitudes",
    "vz_phase_correction",
]

FREQUENCY_WINDOW = 4000.0  # ns of free evolution
FREQUENCY_STRIDE = 0.1  # ns between coherence samples
MAX_PHASE_RMS = 0.1  # rad, residual of the linear phase fit
THRESHOLDS = {"single": 0.01, "cr1": 0.1, "cr2": 0.05, "cr4": 0.05}
SINGLE_KEYS = ("omega0", "beta")
CROSS_KEYS = {
    "cr1": ("t_cr", "omega_cr", "phi_cr", "omega_cancel", "phi_cancel"),
    "cr2": ("t_cr", "omega_cr"),
    "cr4": ("t_cr", "omega_cr"),
}


class CalibrationError(RuntimeError):
    """A calibration step could not meet its acceptance threshold."""


distance_objective = distance


# frequencies -----------------------------------------------------------------

def _coherences(a: np.ndarray) -> np.ndarray:
    """<0|rho_i|1> of each qubit from rotating-frame amplitudes (1, K, M1, M2)."""
    a = a[0]
    c1 = np.sum(a[:, 0, :] * a[:, 1, :].conj())
    c2 = np.sum(a[:, :, 0] * a[:, :, 1].conj())
    return np.array([c1, c2])


def fit_phase_slope(times: np.ndarray, c: np.ndarray, iterations: int = 3) -> tuple[float, float]:
    """Rotation rate (rad/ns) of a coherence and the rms residual (rad) of its phase fit.

    With the other qubit in a superposition the coherence is a two-tone
    signal whose envelope passes through zero, flipping its sign.  Squaring
    removes the flips; the rate is seeded from the amplitude-weighted mean
    phase increment and refined by weighted linear regression of the
    demodulated phase, so no unwrapping across the node is needed.
    """
    z = np.asarray(c) ** 2
    dt = np.diff(times)
    w = np.abs(z[1:] * z[:-1])
    if not np.any(w > 0):
        raise CalibrationError("coherence is identically zero")
    rate = float(np.sum(w * np.angle(z[1:] * z[:-1].conj()) / dt) / np.sum(w))
    weight = np.abs(z)
    sw = np.sqrt(weight)
    design = np.c_[times, np.ones_like(times)]
    for _ in range(iterations):
        y = z * np.exp(-1j * rate * times)
        phase = np.angle(y * np.conj(np.sum(y)))
        coef, *_ = np.linalg.lstsq(design * sw[:, None], phase * sw, rcond=None)
        rate += coef[0]
    resid = phase - design @ coef
    rms = float(np.sqrt(np.sum(weight * resid**2) / np.sum(weight)))
    return rate / 2.0, rms / 2.0


def calibrate_frequencies(
    device: DeviceParameters,
    basis: BasisConfig | None = None,
    tau: float = TAU_FAST,
    duration: float = FREQUENCY_WINDOW,
    stride: float = FREQUENCY_STRIDE,
    max_rms: float = MAX_PHASE_RMS,
) -> tuple[float, float]:
    """Shifted qubit frequencies (rad/ns) from free evolution of |++>.

    The coherence of each qubit is sampled in a frame rotating at the bare
    transmon frequency, so only the slow resonator-induced drift remains,
    and its phase slope is fit by :func:`fit_phase_slope`.
    """
    bare = replace(device, omega_bar=None)
    prop = Propagator(bare, basis, tau)
    w_bare = prop.omega_bar
    psi = prop.computational_states().sum(axis=0) / 2.0
    times, c = prop.trajectory(psi, None, 0.0, duration, stride=stride, reduce=_coherences)
    result = []
    for q in range(2):
        rate, rms = fit_phase_slope(times, c[:, q])
        if rms > max_rms:
            raise CalibrationError(f"qubit {q + 1}: phase fit residual {rms:.3g} rad exceeds {max_rms}")
        result.append(w_bare[q] + rate)
    return result[0], result[1]


# cross-resonance scans ----------------------------------------------------------

@dataclass
class CrScanResult:
    """Conditional target rotations over a grid of CR and cancel amplitudes.

    ``ix`` and ``zx`` have shape (len(omega_cr), len(omega_cancel)) and hold
    the x components (rad/ns) of (w0 + w1)/2 and (w0 - w1)/2, where w_c is the
    fitted rotation vector of the target Bloch vector with the control in |c>.
    ``rates`` keeps the full vectors, shape (n_cr, n_cancel, 2, 3).
    """

    control: int
    target: int
    omega_cr: np.ndarray
    omega_cancel: np.ndarray
    ix: np.ndarray
    zx: np.ndarray
    rates: np.ndarray
    valid: np.ndarray

    def rows(self) -> list[dict]:
        out = []
        for i, j in itertools.product(range(len(self.omega_cr)), range(len(self.omega_cancel))):
            out.append({
                "omega_cr": float(self.omega_cr[i]),
                "omega_cancel": float(self.omega_cancel[j]),
                "ix": float(self.ix[i, j]),
                "zx": float(self.zx[i, j]),
                "valid": bool(self.valid[i, j]),
            })
        return out


def _bloch(a: np.ndarray, target: int) -> np.ndarray:
    """Target-qubit Bloch vectors from amplitudes (B, K, M1, M2), levels 0 and 1 only."""
    if target == 1:
        a0, a1 = a[:, :, 0, :], a[:, :, 1, :]
    else:
        a0, a1 = a[:, :, :, 0], a[:, :, :, 1]
    r01 = np.sum(a0 * a1.conj(), axis=(1, 2))
    r00 = np.sum(np.abs(a0) ** 2, axis=(1, 2))
    r11 = np.sum(np.abs(a1) ** 2, axis=(1, 2))
    return np.stack([2 * r01.real, -2 * r01.imag, r00 - r11], axis=-1)


def rotation_vector(times: np.ndarray, r: np.ndarray, min_motion: float = 1e-4) -> tuple[np.ndarray, bool]:
    """Least-squares w with dr/dt = w x r; returns (w, resolved).

    Directions the trajectory does not constrain (singular values below 1% of
    the largest) are set to zero.

    A trajectory that moves less than ``min_motion`` in total is reported as
    w = 0 and unresolved unless it is completely static.
    """
    drdt = np.gradient(r, times, axis=0)
    motion = float(np.sum(np.linalg.norm(np.diff(r, axis=0), axis=1)))
    if motion < min_motion:
        return np.zeros(3), motion == 0.0 or motion < 1e-12
    # w x r = -[r]_x w
    x, y, z = r[:, 0], r[:, 1], r[:, 2]
    zero = np.zeros_like(x)
    A = -np.stack([
        np.stack([zero, -z, y], axis=-1),
        np.stack([z, zero, -x], axis=-1),
        np.stack([-y, x, zero], axis=-1),
    ], axis=1).reshape(-1, 3)
    # the component of w along a static r is unobservable; drop it rather than fit noise
    w, *_ = np.linalg.lstsq(A, drdt.reshape(-1), rcond=1e-2)
    return w, True


def _cr_drive(control: int, target: int, omega_cr: float, omega_cancel: float, window: float,
              table_omega: tuple[float, float]) -> PulseSchedule:
    w = table_omega[target - 1]
    total = window + 2 * FLAT_RISE
    terms = [DriveTerm(control, "flat_top", 0.0, total, omega_cr, FLAT_SIGMA, w, 0.0, target)]
    if omega_cancel != 0.0:
        terms.append(DriveTerm(target, "flat_top", 0.0, total, omega_cancel, FLAT_SIGMA, w, 0.0, target))
    return PulseSchedule(tuple(terms), total)


def scan_cr_amplitudes(
    propagator: Propagator,
    control: int,
    target: int,
    omega_cr: Sequence[float],
    omega_cancel: Sequence[float] = (0.0,),
    window: float = 100.0,
    stride: float = 0.5,
) -> CrScanResult:
    """Target rotation rates conditional on the control state over a CR amplitude grid.

    Each grid point drives the control at the target frequency (and the
    target with the cancel amplitude, same phase) with a flat top whose
    plateau lasts ``window`` ns; only the plateau is fitted.
    """
    if {control, target} != {1, 2}:
        raise ValueError("control and target must be distinct qubits 1 and 2")
    omega_cr = np.asarray(omega_cr, dtype=float)
    omega_cancel = np.asarray(omega_cancel, dtype=float)
    grid = list(itertools.product(range(len(omega_cr)), range(len(omega_cancel))))
    rates = np.zeros((len(omega_cr), len(omega_cancel), 2, 3))
    valid = np.ones((len(omega_cr), len(omega_cancel)), dtype=bool)
    states = []
    for c in (0, 1):
        m = (c, 0) if control == 1 else (0, c)
        states.append(propagator.basis_state(0, *m))
    total = window + 2 * FLAT_RISE
    for g0 in range(0, len(grid), 2):
        points = grid[g0:g0 + 2]
        lanes, drives = [], []
        for i, j in points:
            drive = _cr_drive(control, target, omega_cr[i], omega_cancel[j], window, propagator.omega_bar)
            lanes += states
            drives += [drive, drive]
        times, samples = propagator.trajectory(
            np.array(lanes), drives, 0.0, total, stride=stride,
            reduce=lambda a: _bloch(a, target),
        )
        plateau = (times >= FLAT_RISE) & (times <= FLAT_RISE + window)
        for p, (i, j) in enumerate(points):
            for c in (0, 1):
                w, ok = rotation_vector(times[plateau], samples[plateau, 2 * p + c])
                rates[i, j, c] = w
                valid[i, j] &= ok
    ix = 0.5 * (rates[..., 0, 0] + rates[..., 1, 0])
    zx = 0.5 * (rates[..., 0, 0] - rates[..., 1, 0])
    return CrScanResult(control, target, omega_cr, omega_cancel, ix, zx, rates, valid)


# gate optimization --------------------------------------------------------------

def _parse_gate(name: str) -> tuple[str, int, str]:
    """'GD1_pi/2' -> ('single', 1, 'pi/2'); 'GF2_CR1' -> ('cr1', 2, 'cr1')."""
    try:
        head, tail = name.split("_", 1)
        qubit = int(head[2:])
        if head.startswith("GD") and tail in ANGLES and qubit in (1, 2):
            return "single", qubit, tail
        if head.startswith("GF") and tail.lower() in CROSS_KEYS and qubit in (1, 2):
            return tail.lower(), qubit, tail.lower()
    except ValueError:
        pass
    raise ValueError(f"unknown gate name {name!r}")


def gate_target(name: str) -> np.ndarray:
    """Ideal unitary a table entry implements: X rotation for GD, CNOT for GF."""
    kind, qubit, arg = _parse_gate(name)
    if kind == "single":
        return gates.x_gate(qubit, ANGLES[arg])
    return gates.cnot(qubit, 3 - qubit)


def gate_map(propagator: Propagator, name: str, table: CalibratedGateTable,
             correct: bool = True) -> tuple[np.ndarray, float]:
    """(Z_frame M, duration) of one gate started in the trivial frame."""
    kind, qubit, arg = _parse_gate(name)
    if kind == "single":
        sched, frame = single_qubit_gate(qubit, arg, PhaseFrame(), table, correct=correct)
    else:
        sched, frame = cnot_schedule(kind, qubit, 3 - qubit, PhaseFrame(), table, correct=correct)
    M = propagator.computational_maps(sched, 0.0, [sched.duration])[0]
    return gates.zz_frame(*frame.as_tuple()) @ M, sched.duration


def vz_phase_correction(M: np.ndarray, U: np.ndarray, grid: int = 0,
                        cfg: OptimizerConfig | None = None) -> tuple[float, float]:
    """Phases minimizing distance((Z_phi1 x Z_phi2) M, U), wrapped to (-pi, pi].

    The search starts at (0, 0); with ``grid > 0`` the best point of a
    grid x grid lattice over the torus is used instead.
    """
    cfg = cfg or OptimizerConfig(scale=0.05, relative=False, max_evals=2000, tol=1e-15, restarts=2)

    def f(x):
        return distance(gates.zz_frame(x[0], x[1]) @ M, U)

    start = np.zeros(2)
    if grid > 0:
        axis = np.linspace(-math.pi, math.pi, grid, endpoint=False)
        start = np.array(min(itertools.product(axis, axis), key=f))
    res = nelder_mead(f, start, cfg)
    wrap = [math.remainder(v, TWO_PI) for v in res.x]
    return wrap[0], wrap[1]


@dataclass
class GateCalibration:
    """Outcome of refining one table entry."""

    name: str
    keys: tuple[str, ...]
    seed: list[float]
    params: list[float]
    delta_seed: float
    delta: float
    vz: tuple[float, float]
    n_evals: int
    converged: bool
    threshold: float
    history: list[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.delta <= self.threshold

    def report(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _entry(table: CalibratedGateTable, name: str):
    kind = _parse_gate(name)[0]
    store = table.gd if kind == "single" else table.gf
    if name not in store:
        raise KeyError(f"table has no entry {name}")
    return store, kind


def optimize_gate(
    propagator: Propagator,
    name: str,
    table: CalibratedGateTable,
    cfg: OptimizerConfig | None = None,
    threshold: float | None = None,
    log: Callable[[str], None] | None = None,
) -> tuple[CalibratedGateTable, GateCalibration]:
    """Refine one table entry against the distance objective, then fit its VZ correction.

    Singles vary (omega0, beta), echoed CNOTs (t_cr, omega_cr) and CR1 all
    five drive parameters.  For CR1 the stage-one objective already
    minimizes over the frame phases, since a one-pulse CNOT carries large Z
    rotations that the drive parameters cannot absorb.  Returns the updated
    copy of the table and a report; the input table is left unchanged.
    """
    cfg = cfg or OptimizerConfig()
    store, kind = _entry(table, name)
    keys = SINGLE_KEYS if kind == "single" else CROSS_KEYS[kind]
    threshold = THRESHOLDS[kind] if threshold is None else threshold
    U = gate_target(name)
    seed_entry = store[name]
    x0 = np.array([getattr(seed_entry, k) for k in keys])
    work = table.copy()
    wstore = work.gd if kind == "single" else work.gf

    def build(x):
        wstore[name] = replace(seed_entry, phi1=0.0, phi2=0.0, **dict(zip(keys, map(float, x))))
        return gate_map(propagator, name, work, correct=True)[0]

    def objective(x):
        if kind != "single" and x[0] < 0:
            return math.inf
        M = build(x)
        if kind == "cr1":
            phi = vz_phase_correction(M, U, grid=8)
            val = distance(gates.zz_frame(*phi) @ M, U)
        else:
            val = distance(M, U)
        if log:
            log(f"{name} {np.array2string(np.asarray(x), precision=6)} delta={val:.6g}")
        return val

    res: OptimizeResult = nelder_mead(objective, x0, cfg)
    M = build(res.x)
    vz = vz_phase_correction(M, U, grid=8 if kind == "cr1" else 0)
    final = replace(seed_entry, **dict(zip(keys, map(float, res.x))), phi1=vz[0], phi2=vz[1])
    wstore[name] = final
    delta = distance(gates.zz_frame(*vz) @ M, U)
    cal = GateCalibration(
        name, tuple(keys), [float(v) for v in x0], [float(v) for v in res.x],
        float(res.history[0]), float(delta), vz, res.n_evals, res.converged, threshold,
        [float(v) for v in res.history],
    )
    return work, cal


DEFAULT_ORDER = (
    "GD1_pi/2", "GD2_pi/2", "GD1_pi", "GD2_pi",
    "GF1_CR1", "GF2_CR1", "GF1_CR2", "GF2_CR2", "GF1_CR4", "GF2_CR4",
)


def calibrate_table(
    propagator: Propagator,
    seed: CalibratedGateTable,
    names: Sequence[str] = DEFAULT_ORDER,
    cfg: OptimizerConfig | None = None,
    budgets: dict[str, int] | None = None,
    checkpoint: Callable[[CalibratedGateTable, GateCalibration], None] | None = None,
    log: Callable[[str], None] | None = None,
) -> tuple[CalibratedGateTable, list[GateCalibration]]:
    """Refine the named entries in order; single-qubit pulses should come first
    because the echoed CNOTs reuse them."""
    cfg = cfg or OptimizerConfig()
    table = seed.copy()
    table = replace(table, omega_bar=tuple(propagator.omega_bar))
    reports = []
    for name in names:
        budget = (budgets or {}).get(name, cfg.max_evals)
        table, cal = optimize_gate(propagator, name, table, replace(cfg, max_evals=budget), log=log)
        reports.append(cal)
        if checkpoint:
            checkpoint(table, cal)
    return table, reports


def write_report(path: str | Path, omega_bar: tuple[float, float], reports: Sequence[GateCalibration]) -> None:
    doc = {
        "omega_bar_ghz": [w / TWO_PI for w in omega_bar],
        "gates": [r.report() for r in reports],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
