"""Pulse-level simulation of two fixed-frequency transmons coupled through a resonator."""

from .model import BasisConfig, DeviceParameters, diagonalize_transmon, hamiltonian_terms
from .solver import Propagator, computational_map
from .pulses import CalibratedGateTable, PhaseFrame, PulseSchedule, cnot_schedule, single_qubit_gate
from .metrics import ComputationalMap, diamond_error_rate, distance, gate_metrics

__version__ = "0.1.0"

__all__ = [
    "BasisConfig",
    "CalibratedGateTable",
    "ComputationalMap",
    "DeviceParameters",
    "PhaseFrame",
    "Propagator",
    "PulseSchedule",
    "cnot_schedule",
    "computational_map",
    "diagonalize_transmon",
    "diamond_error_rate",
    "distance",
    "gate_metrics",
    "hamiltonian_terms",
    "single_qubit_gate",
]
