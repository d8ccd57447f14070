"""Ideal gate matrices on the two-qubit computational basis |m1 m2> (qubit 1 most significant)."""

from __future__ import annotations

import numpy as np

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def rx(theta: float) -> np.ndarray:
    """exp(-i theta sigma_x / 2)."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def rz(phi: float) -> np.ndarray:
    """exp(-i phi sigma_z / 2)."""
    return np.diag([np.exp(-0.5j * phi), np.exp(0.5j * phi)])


def on_qubit(qubit: int, op: np.ndarray) -> np.ndarray:
    return np.kron(op, I2) if qubit == 1 else np.kron(I2, op)


def x_gate(qubit: int, theta: float) -> np.ndarray:
    return on_qubit(qubit, rx(theta))


def z_gate(qubit: int, phi: float) -> np.ndarray:
    return on_qubit(qubit, rz(phi))


def zz_frame(phi1: float, phi2: float) -> np.ndarray:
    """Z_phi1 (x) Z_phi2."""
    return np.kron(rz(phi1), rz(phi2))


def cnot(control: int, target: int) -> np.ndarray:
    if (control, target) == (1, 2):
        return np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
    if (control, target) == (2, 1):
        return np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex)
    raise ValueError("control and target must be distinct qubits 1 and 2")


HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S_GATE = np.diag([1, 1j])
T_GATE = np.diag([1, np.exp(0.25j * np.pi)])
X_GATE = SX


def u1(theta: float) -> np.ndarray:
    return np.diag([1, np.exp(1j * theta)])
