"""Time integration of the driven device with a second-order product formula.

Each step of length tau applies

    U2(tau) = prod_j exp(-i tau A_j / 2) * prod_j^reversed exp(-i tau A_j / 2)

with the A_j taken in the order: CPB 1 even pairs, odd pairs; CPB 2 even,
odd; all diagonal terms (charging energy with the drive at the step
midpoint, resonator energy); coupling even, odd.  The off-diagonal factors
are sums of independent 2x2 blocks whose exponentials are closed-form
rotations, so every factor is exactly unitary.  The stepping itself runs in
a compiled kernel (``_propagate``) that advances ``BATCH`` states at once.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from ._propagate import BATCH, run_steps
from .model import (
    TWO_PI,
    BasisConfig,
    DeviceParameters,
    TransmonEigenbasis,
    device_eigenbases,
    hamiltonian_terms,
)

TAU_FULL = 1e-4  # ns
TAU_FAST = 1e-3  # ns
MIN_STEPS_PER_PERIOD = 20
CHUNK_STEPS = 16384

COMPUTATIONAL_LABELS = ("00", "01", "10", "11")


class Drive(Protocol):
    """Anything that yields n_g(t) for both qubits."""

    def ng(self, t: np.ndarray) -> np.ndarray:
        """Return an array of shape (2, len(t))."""

    def breakpoints(self) -> Sequence[float]:
        """Times where the drive is not smooth."""

    def max_frequency(self) -> float:
        """Largest carrier frequency in rad/ns (0 for no drive)."""


class _NoDrive:
    def ng(self, t):
        return np.zeros((2, len(t)))

    def breakpoints(self):
        return ()

    def max_frequency(self):
        return 0.0


NO_DRIVE = _NoDrive()


class UnderResolvedError(ValueError):
    """Time step too coarse for the fastest drive component."""


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.t_end < self.t_start:
            raise ValueError("t_end must not precede t_start")
        n = (self.t_end - self.t_start) / self.tau
        if abs(n - round(n)) > 1e-6 * max(1.0, n):
            raise ValueError("duration is not close to a whole number of steps")

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t_start) / self.tau))


@dataclass
class StateVector:
    """Amplitudes indexed (k, n1, n2) in the charge basis or (k, m1, m2) in the transmon basis."""

    amplitudes: np.ndarray
    basis: str = "charge"
    time: float = 0.0

    def __post_init__(self):
        if self.basis not in ("charge", "transmon"):
            raise ValueError(f"unknown basis tag {self.basis!r}")
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.basis, self.time)


@dataclass
class Trajectory:
    """Samples of transmon-basis, rotating-frame amplitudes along a propagation."""

    times: list[float] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)

    def as_array(self) -> np.ndarray:
        return np.array(self.states)


class Propagator:
    """Product-formula integrator bound to one device and basis.

    Immutable after construction; concurrent use from several threads is safe
    because every propagation works on its own buffers.
    """

    def __init__(self, device: DeviceParameters, basis: BasisConfig | None = None, tau: float = TAU_FULL):
        if not tau > 0:
            raise ValueError("tau must be positive")
        self.device = device
        self.basis = basis = basis or BasisConfig()
        self.tau = float(tau)
        self.shape = basis.shape
        K, N1, N2 = self.shape
        self._n1 = basis.charges.copy()
        self._n2 = basis.charges.copy()
        self._ec = [0.0, 0.0]
        self._v = [np.zeros(N1 - 1), np.zeros(N2 - 1)]
        self._diag = np.zeros((K, N1, N2))
        self._w = np.zeros((max(K - 1, 0), N1, N2))
        for term in hamiltonian_terms(device, basis):
            fk, f1, f2 = term.factors
            if term.kind == "charging":
                self._ec[term.qubit - 1] = term.ec
                self._diag += fk.diag[:, None, None] * f1.diag[None, :, None] * f2.diag[None, None, :]
            elif term.kind == "resonator":
                self._diag += fk.diag[:, None, None] * f1.diag[None, :, None] * f2.diag[None, None, :]
            elif term.kind == "josephson":
                self._v[term.qubit - 1] = np.real((f1 if term.qubit == 1 else f2).off).copy()
            elif term.kind == "coupling":
                self._w += np.real(fk.off)[:, None, None] * f1.diag[None, :, None] * f2.diag[None, None, :]
            else:
                raise ValueError(f"unsupported term kind {term.kind!r}")
        self.eigenbases: tuple[TransmonEigenbasis, TransmonEigenbasis] = device_eigenbases(device, basis)
        self._b1 = self.eigenbases[0].vectors
        self._b2 = self.eigenbases[1].vectors
        self._b1h = np.ascontiguousarray(self._b1.conj().T)
        self._b2c = np.ascontiguousarray(self._b2.conj())

    # basis changes -------------------------------------------------------

    def to_transmon(self, amplitudes: np.ndarray) -> np.ndarray:
        """a_{k m1 m2} = sum conj(B1_{n1 m1}) conj(B2_{n2 m2}) a_{k n1 n2}; leading axes are batch axes."""
        return self._b1h @ np.asarray(amplitudes) @ self._b2c

    def to_charge(self, amplitudes: np.ndarray) -> np.ndarray:
        return self._b1 @ np.asarray(amplitudes) @ self._b2.T

    def basis_state(self, k: int, m1: int, m2: int) -> np.ndarray:
        """Charge-basis image of |k, m1, m2>."""
        psi = np.zeros(self.shape, dtype=complex)
        psi[k] = np.outer(self._b1[:, m1], self._b2[:, m2])
        return psi

    def computational_states(self) -> np.ndarray:
        return np.array([self.basis_state(0, int(s[0]), int(s[1])) for s in COMPUTATIONAL_LABELS])

    # propagation ---------------------------------------------------------

    def check_resolution(self, drives: Iterable[Drive], tau: float | None = None) -> None:
        tau = self.tau if tau is None else tau
        for drive in drives:
            w = drive.max_frequency()
            if w > 0 and TWO_PI / (w * tau) < MIN_STEPS_PER_PERIOD:
                raise UnderResolvedError(
                    f"tau = {tau * 1e3:.3g} ps gives {TWO_PI / (w * tau):.1f} steps per drive period "
                    f"(need >= {MIN_STEPS_PER_PERIOD})"
                )

    def _segments(self, t0, t1, drives, stops):
        cuts = {t0, t1}
        for drive in drives:
            cuts.update(b for b in drive.breakpoints() if t0 < b < t1)
        cuts.update(s for s in stops if t0 < s < t1)
        edges = [t0]
        for e in sorted(cuts)[1:]:
            if e - edges[-1] > 1e-9:
                edges.append(e)
        edges[-1] = t1
        return list(zip(edges[:-1], edges[1:]))

    def _advance(self, buf, drives, a, b, tau):
        length = b - a
        n = max(1, math.ceil(length / tau - 1e-9))
        step = length / n
        for j0 in range(0, n, CHUNK_STEPS):
            j1 = min(n, j0 + CHUNK_STEPS)
            tm = a + (np.arange(j0, j1) + 0.5) * step
            ng = np.zeros((j1 - j0, 2, BATCH))
            for lane, drive in enumerate(drives):
                ng[:, :, lane] = drive.ng(tm).T
            run_steps(buf, step, ng, self._n1, self._n2, self._ec[0], self._ec[1],
                      self._v[0], self._v[1], self._diag, self._w)

    def propagate(
        self,
        states: np.ndarray,
        drives: Drive | Sequence[Drive] | None,
        t0: float,
        t1: float,
        checkpoints: Sequence[float] = (),
        tau: float | None = None,
        on_checkpoint: Callable[[float, list[int], np.ndarray], None] | None = None,
    ) -> np.ndarray:
        """Evolve charge-basis ``states`` (B, K, N1, N2) from ``t0`` to ``t1``.

        ``drives`` is one drive shared by all states or one per state.  At
        every time in ``checkpoints`` the callback receives (t, lanes, states):
        the indices of the states in the current batch group and a copy of
        their charge-basis amplitudes.
        """
        tau = self.tau if tau is None else float(tau)
        states = np.asarray(states, dtype=complex)
        single = states.ndim == 3
        if single:
            states = states[None]
        if states.shape[1:] != self.shape:
            raise ValueError(f"state shape {states.shape[1:]} does not match basis {self.shape}")
        nb = len(states)
        if drives is None:
            drives = [NO_DRIVE] * nb
        elif not isinstance(drives, (list, tuple)):
            drives = [drives] * nb
        if len(drives) != nb:
            raise ValueError("need one drive per state")
        self.check_resolution(drives, tau)
        stops = sorted(set(c for c in checkpoints if t0 <= c <= t1))
        out = np.empty_like(states)
        for g0 in range(0, nb, BATCH):
            lanes = list(range(g0, min(nb, g0 + BATCH)))
            lane_drives = [drives[i] for i in lanes] + [NO_DRIVE] * (BATCH - len(lanes))
            buf = np.zeros(self.shape + (2, BATCH))
            buf[..., 0, : len(lanes)] = np.moveaxis(states[lanes].real, 0, -1)
            buf[..., 1, : len(lanes)] = np.moveaxis(states[lanes].imag, 0, -1)
            pending = list(stops)
            if on_checkpoint is not None:
                while pending and pending[0] <= t0 + 1e-9:
                    on_checkpoint(pending.pop(0), lanes, states[lanes].copy())
            for a, b in self._segments(t0, t1, lane_drives, stops):
                self._advance(buf, lane_drives, a, b, tau)
                if on_checkpoint is not None:
                    while pending and pending[0] <= b + 1e-9:
                        on_checkpoint(pending.pop(0), lanes, self._unpack(buf, len(lanes)))
            out[lanes] = self._unpack(buf, len(lanes))
        return out[0] if single else out

    @staticmethod
    def _unpack(buf, n):
        z = buf[..., 0, :n] + 1j * buf[..., 1, :n]
        return np.moveaxis(z, -1, 0)

    def step(self, state: np.ndarray, drive: Drive | None, t: float, tau: float | None = None) -> np.ndarray:
        tau = self.tau if tau is None else tau
        return self.propagate(state, drive, t, t + tau, tau=tau)

    # observables -----------------------------------------------------------

    def rotating(self, transmon: np.ndarray, t: float, omega_bar: tuple[float, float] | None = None) -> np.ndarray:
        omega_bar = omega_bar or self.omega_bar
        return rotating_frame(transmon, t, omega_bar)

    @property
    def omega_bar(self) -> tuple[float, float]:
        if self.device.omega_bar is not None:
            return self.device.omega_bar
        return (self.eigenbases[0].omega, self.eigenbases[1].omega)

    def computational_block(self, states: np.ndarray, t: float) -> np.ndarray:
        """Columns of M from a batch of four evolved charge-basis states."""
        a = self.rotating(self.to_transmon(states), t)
        return a[:, 0, :2, :2].reshape(len(states), 4).T

    def computational_maps(self, drive: Drive | None, t0: float, times: Sequence[float], tau: float | None = None) -> list[np.ndarray]:
        """M at each time in ``times`` from one continuous evolution starting at ``t0``."""
        times = list(times)
        if not times:
            return []
        result: dict[float, np.ndarray] = {}

        def grab(t, lanes, states):
            result[t] = self.computational_block(states, t)

        self.propagate(self.computational_states(), drive, t0, max(times), checkpoints=times,
                       tau=tau, on_checkpoint=grab)
        return [result[t] for t in times]

    def trajectory(
        self,
        states: np.ndarray,
        drive: Drive | Sequence[Drive] | None,
        t0: float,
        t1: float,
        stride: float = 0.01,
        tau: float | None = None,
        reduce: Callable[[np.ndarray], np.ndarray] | None = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Sample rotating-frame transmon amplitudes every ``stride`` ns.

        ``reduce`` maps the (B, K, M1, M2) amplitude batch to whatever should be
        kept per sample (default: everything).  Returns (times, samples).
        """
        n = int(round((t1 - t0) / stride))
        times = t0 + stride * np.arange(n + 1)
        times[-1] = t1
        states = np.asarray(states, dtype=complex)
        if states.ndim == 3:
            states = states[None]
        if len(states) > BATCH:
            raise ValueError(f"trajectory sampling supports at most {BATCH} states")
        keep = reduce or (lambda a: a)
        samples = []

        def grab(t, lanes, batch):
            samples.append(keep(self.rotating(self.to_transmon(batch), t)))

        self.propagate(states, drive, t0, t1, checkpoints=times, tau=tau, on_checkpoint=grab)
        return times, np.array(samples)


@functools.lru_cache(maxsize=8)
def get_propagator(device: DeviceParameters, basis: BasisConfig | None = None, tau: float = TAU_FULL) -> Propagator:
    return Propagator(device, basis, tau)


def rotating_frame(coeffs: np.ndarray, t: float, omega_bar: tuple[float, float]) -> np.ndarray:
    """a^R_{k m1 m2} = exp(i t (w1 m1 + w2 m2)) a_{k m1 m2} over the last two axes."""
    coeffs = np.asarray(coeffs)
    m1 = np.arange(coeffs.shape[-2])[:, None]
    m2 = np.arange(coeffs.shape[-1])[None, :]
    return coeffs * np.exp(1j * t * (omega_bar[0] * m1 + omega_bar[1] * m2))


def to_transmon_basis(state: StateVector, propagator: Propagator) -> StateVector:
    if state.basis != "charge":
        raise ValueError("state is already in the transmon basis")
    return StateVector(propagator.to_transmon(state.amplitudes), "transmon", state.time)


def to_charge_basis(state: StateVector, propagator: Propagator) -> StateVector:
    if state.basis != "transmon":
        raise ValueError("state is already in the charge basis")
    return StateVector(propagator.to_charge(state.amplitudes), "charge", state.time)


def trotter_step(state: StateVector, propagator: Propagator, drive: Drive | None, t: float, tau: float | None = None) -> StateVector:
    if state.basis != "charge":
        raise ValueError("trotter_step needs a charge-basis state")
    tau = propagator.tau if tau is None else tau
    return StateVector(propagator.step(state.amplitudes, drive, t, tau), "charge", t + tau)


def evolve(state: StateVector, propagator: Propagator, drive: Drive | None, grid: TimeGrid) -> StateVector:
    if state.basis != "charge":
        raise ValueError("evolve needs a charge-basis state")
    psi = propagator.propagate(state.amplitudes, drive, grid.t_start, grid.t_end, tau=grid.tau)
    return StateVector(psi, "charge", grid.t_end)


def computational_map(propagator: Propagator, drive: Drive | None, duration: float, t0: float = 0.0) -> np.ndarray:
    """4x4 block of the evolution operator on {|00>, |01>, |10>, |11>} in the rotating frame."""
    if duration == 0:
        return propagator.computational_block(propagator.computational_states(), t0)
    return propagator.computational_maps(drive, t0, [t0 + duration])[0]


def write_trajectory_csv(path: str | Path, times: np.ndarray, samples: np.ndarray, max_level: int = 2) -> None:
    """Rows ``t_ns, k, m1, m2, re, im`` for one trajectory of shape (T, K, M1, M2)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_ns", "k", "m1", "m2", "re", "im"])
        for t, a in zip(times, samples):
            K = a.shape[0]
            for k in range(K):
                for m1 in range(min(max_level + 1, a.shape[1])):
                    for m2 in range(min(max_level + 1, a.shape[2])):
                        z = a[k, m1, m2]
                        writer.writerow([f"{t:.6f}", k, m1, m2, f"{z.real:.12e}", f"{z.imag:.12e}"])
