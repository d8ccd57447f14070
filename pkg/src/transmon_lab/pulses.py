"""Drive synthesis: DRAG Gaussians, flat-topped cross-resonance pulses, CNOT
schedules and virtual-Z frame tracking.

A pulse on qubit ``i`` contributes Omega(t) cos(omega t - gamma) to n_gi(t).
Virtual Z gates never emit pulses; they shift the phase of every later pulse
oscillating at the corresponding qubit frequency:

    GD(gamma) Z_phi = Z_phi GD(gamma - phi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import TWO_PI

GATE_TIME = 83.0  # ns, single-qubit pulses
FLAT_SIGMA = 5.0  # ns, rise/fall width of CR pulses
FLAT_RISE = 3.0 * FLAT_SIGMA
SCHEMES = ("cr1", "cr2", "cr4")
ANGLES = {"pi/2": math.pi / 2, "pi": math.pi}


# envelopes ---------------------------------------------------------------

def _gauss_norm(T: float, sigma: float) -> float:
    return math.exp(-(T**2) / (8.0 * sigma**2))


def gaussian_envelope(t, omega0: float, T: float, sigma: float | None = None):
    """Baseline-subtracted Gaussian on [0, T]; zero at both ends, omega0 at T/2."""
    sigma = T / 4.0 if sigma is None else sigma
    t = np.asarray(t, dtype=float)
    c = _gauss_norm(T, sigma)
    val = omega0 * (np.exp(-((t - T / 2) ** 2) / (2 * sigma**2)) - c) / (1.0 - c)
    return np.where((t >= 0) & (t <= T), val, 0.0)


def gaussian_derivative(t, omega0: float, T: float, sigma: float | None = None):
    """Time derivative of :func:`gaussian_envelope` (nonzero at the endpoints)."""
    sigma = T / 4.0 if sigma is None else sigma
    t = np.asarray(t, dtype=float)
    c = _gauss_norm(T, sigma)
    val = -omega0 * (t - T / 2) / sigma**2 * np.exp(-((t - T / 2) ** 2) / (2 * sigma**2)) / (1.0 - c)
    return np.where((t >= 0) & (t <= T), val, 0.0)


def flat_top_envelope(t, omega: float, t_cr: float, sigma: float = FLAT_SIGMA):
    """3-sigma Gaussian rise, plateau of length ``t_cr``, symmetric fall.

    The rise and fall are baseline-subtracted so the envelope starts and ends
    at exactly zero.
    """
    t = np.asarray(t, dtype=float)
    rise = 3.0 * sigma
    total = t_cr + 2 * rise
    base = math.exp(-(rise**2) / (2 * sigma**2))
    edge = np.minimum(t, total - t)
    ramp = (np.exp(-((edge - rise) ** 2) / (2 * sigma**2)) - base) / (1.0 - base)
    val = omega * np.where(edge >= rise, 1.0, ramp)
    return np.where((t >= 0) & (t <= total), val, 0.0)


# schedule building blocks ---------------------------------------------------

_ENVELOPES = ("gaussian", "gaussian_derivative", "flat_top")


@dataclass(frozen=True)
class DriveTerm:
    """One shaped microwave pulse on ``qubit``.

    ``frame`` names the qubit whose frequency the carrier follows (the target
    for a cross-resonance drive); virtual Z gates on that qubit shift ``gamma``.
    For flat tops ``sigma`` is the rise width and the plateau is
    ``t_off - t_on - 6 sigma``.
    """

    qubit: int
    envelope: str
    t_on: float
    t_off: float
    amplitude: float
    sigma: float
    omega: float
    gamma: float
    frame: int

    def __post_init__(self):
        if self.envelope not in _ENVELOPES:
            raise ValueError(f"unknown envelope {self.envelope!r}")
        if not self.t_off > self.t_on:
            raise ValueError("t_off must exceed t_on")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.qubit not in (1, 2) or self.frame not in (1, 2):
            raise ValueError("qubit and frame must be 1 or 2")

    @property
    def duration(self) -> float:
        return self.t_off - self.t_on

    def envelope_at(self, t) -> np.ndarray:
        local = np.asarray(t, dtype=float) - self.t_on
        if self.envelope == "gaussian":
            return gaussian_envelope(local, self.amplitude, self.duration, self.sigma)
        if self.envelope == "gaussian_derivative":
            return gaussian_derivative(local, self.amplitude, self.duration, self.sigma)
        return flat_top_envelope(local, self.amplitude, self.duration - 6 * self.sigma, self.sigma)

    def value(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.envelope_at(t) * np.cos(self.omega * t - self.gamma)

    def breakpoints(self) -> tuple[float, ...]:
        if self.envelope == "flat_top":
            r = 3 * self.sigma
            return (self.t_on, self.t_on + r, self.t_off - r, self.t_off)
        return (self.t_on, self.t_off)

    def shifted(self, dt: float) -> "DriveTerm":
        return replace(self, t_on=self.t_on + dt, t_off=self.t_off + dt)


@dataclass(frozen=True)
class PulseSchedule:
    """Time-ordered drive terms; n_gi(t) is the sum of the active terms on qubit i."""

    terms: tuple[DriveTerm, ...] = ()
    duration: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        latest = max((d.t_off for d in self.terms), default=0.0)
        if self.duration < latest - 1e-12:
            object.__setattr__(self, "duration", latest)

    def ng(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros((2, len(t)))
        if not self.terms:
            return out
        lo, hi = t[0], t[-1]
        for d in self.terms:
            if d.t_off < lo or d.t_on > hi:
                continue
            out[d.qubit - 1] += d.value(t)
        return out

    def breakpoints(self) -> tuple[float, ...]:
        pts = {0.0, self.duration}
        for d in self.terms:
            pts.update(d.breakpoints())
        return tuple(sorted(pts))

    def max_frequency(self) -> float:
        return max((abs(d.omega) for d in self.terms), default=0.0)

    def then(self, other: "PulseSchedule") -> "PulseSchedule":
        """Append ``other`` (whose times start at 0) right after this schedule."""
        shifted = tuple(d.shifted(self.duration) for d in other.terms)
        return PulseSchedule(self.terms + shifted, self.duration + other.duration)

    def shifted(self, dt: float) -> "PulseSchedule":
        return PulseSchedule(tuple(d.shifted(dt) for d in self.terms), self.duration + dt)

    def count(self, envelope: str, qubit: int | None = None) -> int:
        return sum(1 for d in self.terms if d.envelope == envelope and (qubit is None or d.qubit == qubit))


def concatenate(parts: Iterable[PulseSchedule]) -> PulseSchedule:
    out = PulseSchedule()
    for p in parts:
        out = out.then(p)
    return out


# virtual Z bookkeeping ------------------------------------------------------

def _wrap(phi: float) -> float:
    return float(math.remainder(phi, TWO_PI))


@dataclass(frozen=True)
class PhaseFrame:
    """Accumulated virtual-Z phases (phi_1, phi_2), kept in (-pi, pi]."""

    phi1: float = 0.0
    phi2: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "phi1", _wrap(self.phi1))
        object.__setattr__(self, "phi2", _wrap(self.phi2))

    def phase(self, qubit: int) -> float:
        return self.phi1 if qubit == 1 else self.phi2

    def as_tuple(self) -> tuple[float, float]:
        return (self.phi1, self.phi2)


def apply_vz(frame: PhaseFrame, qubit: int, phi: float) -> PhaseFrame:
    if qubit == 1:
        return PhaseFrame(frame.phi1 + phi, frame.phi2)
    if qubit == 2:
        return PhaseFrame(frame.phi1, frame.phi2 + phi)
    raise ValueError(f"qubit must be 1 or 2, got {qubit}")


def shift_pulse_phase(term: DriveTerm, frame: PhaseFrame) -> DriveTerm:
    """gamma -> gamma - phi of the qubit whose frequency the pulse follows."""
    return replace(term, gamma=term.gamma - frame.phase(term.frame))


def shift_schedule(schedule: PulseSchedule, frame: PhaseFrame) -> PulseSchedule:
    return PulseSchedule(tuple(shift_pulse_phase(d, frame) for d in schedule.terms), schedule.duration)


# calibrated gate table ----------------------------------------------------

@dataclass
class SingleQubitPulse:
    omega0: float
    beta: float
    phi1: float = 0.0
    phi2: float = 0.0


@dataclass
class CrossResonancePulse:
    t_cr: float
    omega_cr: float
    phi_cr: float = 0.0
    omega_cancel: float = 0.0
    phi_cancel: float = 0.0
    phi1: float = 0.0
    phi2: float = 0.0


class TableError(ValueError):
    """Malformed or incomplete calibrated gate table."""


def gd_name(qubit: int, angle: str) -> str:
    return f"GD{qubit}_{angle}"


def gf_name(control: int, scheme: str) -> str:
    return f"GF{control}_{scheme.upper()}"


@dataclass
class CalibratedGateTable:
    """Pulse parameters per gate plus the qubit frequencies they were tuned at.

    ``omega_bar`` is in rad/ns; ``gd`` is keyed by names like ``GD1_pi/2`` and
    ``gf`` by names like ``GF2_CR1`` (superscript = control qubit).
    """

    omega_bar: tuple[float, float]
    gd: dict[str, SingleQubitPulse] = field(default_factory=dict)
    gf: dict[str, CrossResonancePulse] = field(default_factory=dict)

    def single(self, qubit: int, angle: str) -> SingleQubitPulse:
        try:
            return self.gd[gd_name(qubit, angle)]
        except KeyError:
            raise TableError(f"no calibration for {gd_name(qubit, angle)}") from None

    def cross(self, control: int, scheme: str) -> CrossResonancePulse:
        try:
            return self.gf[gf_name(control, scheme)]
        except KeyError:
            raise TableError(f"no calibration for {gf_name(control, scheme)}") from None

    def copy(self) -> "CalibratedGateTable":
        return CalibratedGateTable(
            tuple(self.omega_bar),
            {k: replace(v) for k, v in self.gd.items()},
            {k: replace(v) for k, v in self.gf.items()},
        )

    # file IO: floats are written with repr so a save/load round trip is exact
    def dumps(self) -> str:
        lines = ["[frequencies]"]
        lines += [f"omega_bar{i + 1} = {w / TWO_PI!r}" for i, w in enumerate(self.omega_bar)]
        lines += ["", "[gd]", "# pulse omega0 beta_ns phi1 phi2"]
        for name, p in self.gd.items():
            lines.append(" ".join([name] + [repr(float(v)) for v in (p.omega0, p.beta, p.phi1, p.phi2)]))
        lines += ["", "[gf]", "# pulse t_cr_ns omega_cr phi_cr omega_cancel phi_cancel phi1 phi2"]
        for name, p in self.gf.items():
            vals = (p.t_cr, p.omega_cr, p.phi_cr, p.omega_cancel, p.phi_cancel, p.phi1, p.phi2)
            lines.append(" ".join([name] + [repr(float(v)) for v in vals]))
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str, source: str = "<table>") -> "CalibratedGateTable":
        section = None
        freqs: dict[str, float] = {}
        gd: dict[str, SingleQubitPulse] = {}
        gf: dict[str, CrossResonancePulse] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            where = f"{source}:{lineno}"
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip().lower()
                if section not in ("frequencies", "gd", "gf"):
                    raise TableError(f"{where}: unknown section [{section}]")
                continue
            try:
                if section == "frequencies":
                    key, value = (s.strip() for s in line.split("=", 1))
                    freqs[key] = float(value)
                elif section == "gd":
                    name, *vals = line.split()
                    if len(vals) != 4:
                        raise TableError(f"{where}: [gd] rows need 4 numbers")
                    gd[name] = SingleQubitPulse(*map(float, vals))
                elif section == "gf":
                    name, *vals = line.split()
                    if len(vals) != 7:
                        raise TableError(f"{where}: [gf] rows need 7 numbers")
                    gf[name] = CrossResonancePulse(*map(float, vals))
                else:
                    raise TableError(f"{where}: data outside a section")
            except TableError:
                raise
            except ValueError:
                raise TableError(f"{where}: cannot parse {raw.strip()!r}") from None
        if set(freqs) != {"omega_bar1", "omega_bar2"}:
            raise TableError(f"{source}: [frequencies] needs omega_bar1 and omega_bar2")
        values = list(freqs.values()) + [
            v for p in list(gd.values()) + list(gf.values()) for v in vars(p).values()
        ]
        if not all(math.isfinite(v) for v in values):
            raise TableError(f"{source}: non-finite entry")
        omega_bar = (TWO_PI * freqs["omega_bar1"], TWO_PI * freqs["omega_bar2"])
        return cls(omega_bar, gd, gf)

    @classmethod
    def load(cls, path: str | Path) -> "CalibratedGateTable":
        path = Path(path)
        try:
            text = path.read_text()
        except (OSError, UnicodeDecodeError) as exc:
            raise TableError(f"cannot read {path}: {exc}") from None
        return cls.loads(text, str(path))


def literature_table(omega_bar: tuple[float, float]) -> CalibratedGateTable:
    """Published optimized parameters, used as optimization seeds."""
    gd = {
        "GD1_pi/2": SingleQubitPulse(0.00222, 0.231, -0.00202, 0.00328),
        "GD2_pi/2": SingleQubitPulse(0.00227, 0.289, -0.00013, -0.00159),
        "GD1_pi": SingleQubitPulse(0.00444, 0.219, -0.00354, 0.00283),
        "GD2_pi": SingleQubitPulse(0.00454, 0.224, -0.00026, -0.00339),
    }
    gf = {
        "GF1_CR1": CrossResonancePulse(41.86, 0.079, 0.54, 0.0062, 0.00, -2.10, 0.04),
        "GF2_CR1": CrossResonancePulse(128.19, 0.094, -2.89, -0.0016, 1.72, 3.25, 1.40),
        "GF1_CR2": CrossResonancePulse(102.97, 0.011, phi1=0.00, phi2=0.00),
        "GF2_CR2": CrossResonancePulse(71.56, 0.071, phi1=0.00, phi2=0.00),
        "GF1_CR4": CrossResonancePulse(50.24, 0.010, phi1=0.00, phi2=-0.01),
        "GF2_CR4": CrossResonancePulse(30.16, 0.069, phi1=-0.01, phi2=0.00),
    }
    return CalibratedGateTable(tuple(omega_bar), gd, gf)


# gate pulses ----------------------------------------------------------------

def drag_pulse(qubit: int, angle: str, gamma: float, table: CalibratedGateTable, t0: float = 0.0,
               T: float = GATE_TIME) -> PulseSchedule:
    """Gaussian at omega_bar_i with phase gamma plus beta * dOmega/dt at gamma + pi/2."""
    p = table.single(qubit, angle)
    w = table.omega_bar[qubit - 1]
    sigma = T / 4.0
    terms = (
        DriveTerm(qubit, "gaussian", t0, t0 + T, p.omega0, sigma, w, gamma, qubit),
        DriveTerm(qubit, "gaussian_derivative", t0, t0 + T, p.beta * p.omega0, sigma, w, gamma + math.pi / 2, qubit),
    )
    return PulseSchedule(terms, t0 + T)


def flat_top_pulse(qubit: int, frame: int, amplitude: float, t_cr: float, gamma: float,
                   table: CalibratedGateTable, t0: float = 0.0) -> PulseSchedule:
    w = table.omega_bar[frame - 1]
    total = t_cr + 2 * FLAT_RISE
    term = DriveTerm(qubit, "flat_top", t0, t0 + total, amplitude, FLAT_SIGMA, w, gamma, frame)
    return PulseSchedule((term,), t0 + total)


def cross_resonance(control: int, target: int, scheme: str, gamma: float, table: CalibratedGateTable,
                    t0: float = 0.0) -> PulseSchedule:
    """GF pulse: flat top on the control at the target frequency (plus the cancel drive for CR1)."""
    p = table.cross(control, scheme)
    extra = p.phi_cr if scheme == "cr1" else 0.0
    sched = flat_top_pulse(control, target, p.omega_cr, p.t_cr, gamma + extra, table, t0)
    if scheme == "cr1" and p.omega_cancel != 0.0:
        cancel = flat_top_pulse(target, target, p.omega_cancel, p.t_cr, gamma + p.phi_cancel, table, t0)
        sched = PulseSchedule(sched.terms + cancel.terms, max(sched.duration, cancel.duration))
    return sched


def vz_correction(frame: PhaseFrame, correction: tuple[float, float]) -> PhaseFrame:
    """Fold the per-gate (phi_1, phi_2) correction into the frame; emits no pulses."""
    return PhaseFrame(frame.phi1 + correction[0], frame.phi2 + correction[1])


def single_qubit_gate(qubit: int, angle: str, frame: PhaseFrame, table: CalibratedGateTable,
                      t0: float = 0.0, correct: bool = True) -> tuple[PulseSchedule, PhaseFrame]:
    """X rotation pulse in the current frame; returns (schedule, frame after the gate)."""
    sched = drag_pulse(qubit, angle, -frame.phase(qubit), table, t0)
    if correct:
        p = table.single(qubit, angle)
        frame = vz_correction(frame, (p.phi1, p.phi2))
    return sched, frame


def _xi(control: int, target: int, table: CalibratedGateTable) -> float:
    return 0.0 if table.omega_bar[control - 1] > table.omega_bar[target - 1] else math.pi


def cnot_schedule(scheme: str, control: int, target: int, frame: PhaseFrame, table: CalibratedGateTable,
                  t0: float = 0.0, correct: bool = True) -> tuple[PulseSchedule, PhaseFrame]:
    """Pulse sequence of one CNOT in the given scheme; returns (schedule, frame after the gate).

    Only the target frame phase enters the emitted pulses; the control frame
    commutes through the gate.  Echoed schemes leave a Z of (xi - pi/2) on the
    control, folded into the returned frame.
    """
    scheme = scheme.lower()
    if scheme not in SCHEMES:
        raise ValueError(f"unknown CNOT scheme {scheme!r}")
    if control == target or {control, target} != {1, 2}:
        raise ValueError("control and target must be distinct qubits 1 and 2")
    th = frame.phase(target)
    xi = _xi(control, target, table)
    pi = math.pi

    def gd(q, angle, gamma, t):
        return drag_pulse(q, angle, gamma, table, t)

    def gf(gamma, t):
        return cross_resonance(control, target, scheme, gamma, table, t)

    parts: list[PulseSchedule] = []
    t = t0
    if scheme == "cr1":
        parts.append(gf(-th, t))
    elif scheme == "cr2":
        a = gd(target, "pi/2", xi - th, t)
        b = gd(control, "pi", 0.0, t)
        parts.append(PulseSchedule(a.terms + b.terms, a.duration))
        t = parts[-1].duration
        for step in (lambda t: gf(-th, t), lambda t: gd(control, "pi", pi / 2, t), lambda t: gf(pi - th, t)):
            parts.append(step(t))
            t = parts[-1].duration
    else:
        sequence = (
            lambda t: gd(target, "pi/2", xi - th, t),
            lambda t: gf(-th, t),
            lambda t: gd(control, "pi", pi / 2, t),
            lambda t: gf(pi - th, t),
            lambda t: gd(target, "pi", pi + xi - th, t),
            lambda t: gf(pi - th, t),
            lambda t: gd(control, "pi", 3 * pi / 2, t),
            lambda t: gf(-th, t),
        )
        for step in sequence:
            parts.append(step(t))
            t = parts[-1].duration
    terms = tuple(d for p in parts for d in p.terms)
    sched = PulseSchedule(terms, max(p.duration for p in parts))
    if scheme != "cr1":
        frame = apply_vz(frame, control, xi - pi / 2)
    if correct:
        p = table.cross(control, scheme)
        frame = vz_correction(frame, (p.phi1, p.phi2))
    return sched, frame


def merge(schedules: Sequence[PulseSchedule]) -> PulseSchedule:
    """Overlay schedules that already carry absolute times."""
    terms = tuple(d for s in schedules for d in s.terms)
    return PulseSchedule(terms, max((s.duration for s in schedules), default=0.0))
