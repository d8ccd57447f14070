"""Device Hamiltonian for two Cooper-pair-box transmons coupled to one resonator.

The Hamiltonian is

    H(t) = sum_i [E_Ci (n_i - n_gi(t))^2 - E_Ji cos(phi_i)]
           + omega_r a^dag a + sum_i g_i n_i (a + a^dag)

written in the charge basis for each transmon and the Fock basis for the
resonator.  All energies are angular frequencies in rad/ns; device files and
reporting use GHz (value / 2 pi).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * math.pi

# GHz values of the reference device
REFERENCE_DEVICE_GHZ = {
    "ec1": 1.204,
    "ej1": 13.349,
    "ec2": 1.204,
    "ej2": 12.292,
    "g1": 0.07,
    "g2": 0.07,
    "omega_r": 7.0,
}

_GHZ_KEYS = ("ec1", "ej1", "ec2", "ej2", "g1", "g2", "omega_r", "omega_bar1", "omega_bar2")
_INT_KEYS = ("n_min", "n_max", "k_max")


class DeviceFileError(ValueError):
    """Raised for malformed device-parameter files."""


@dataclass(frozen=True)
class BasisConfig:
    """Truncation of the charge x charge x Fock product basis."""

    n_min: int = -8
    n_max: int = 8
    k_max: int = 3

    def __post_init__(self):
        if not (self.n_min < 0 < self.n_max):
            raise ValueError(f"need n_min < 0 < n_max, got [{self.n_min}, {self.n_max}]")
        if self.k_max < 0:
            raise ValueError(f"k_max must be >= 0, got {self.k_max}")

    @property
    def n_charge(self) -> int:
        return self.n_max - self.n_min + 1

    @property
    def n_photon(self) -> int:
        return self.k_max + 1

    @property
    def charges(self) -> np.ndarray:
        return np.arange(self.n_min, self.n_max + 1, dtype=float)

    @property
    def shape(self) -> tuple[int, int, int]:
        """Array shape (k, n1, n2) of a state vector."""
        return (self.n_photon, self.n_charge, self.n_charge)

    @property
    def dimension(self) -> int:
        return self.n_charge**2 * self.n_photon


@dataclass(frozen=True)
class DeviceParameters:
    """Physical constants of the two transmons and the resonator (rad/ns).

    ``omega_bar`` holds the resonator-shifted qubit frequencies once they have
    been measured by free evolution; it is ``None`` for an uncalibrated device.
    """

    ec1: float
    ej1: float
    ec2: float
    ej2: float
    g1: float
    g2: float
    omega_r: float
    omega_bar: tuple[float, float] | None = None

    def __post_init__(self):
        values = (self.ec1, self.ej1, self.ec2, self.ej2, self.g1, self.g2, self.omega_r)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("device parameters must be finite")
        if self.ec1 <= 0 or self.ec2 <= 0:
            raise ValueError("charging energies must be positive")
        if self.ej1 < 0 or self.ej2 < 0:
            raise ValueError("Josephson energies must be non-negative")
        if self.omega_bar is not None:
            object.__setattr__(self, "omega_bar", tuple(float(w) for w in self.omega_bar))

    @classmethod
    def from_ghz(cls, **values: float) -> "DeviceParameters":
        """Build from GHz values; missing keys fall back to the reference device."""
        merged = dict(REFERENCE_DEVICE_GHZ)
        bar = [values.pop("omega_bar1", None), values.pop("omega_bar2", None)]
        unknown = set(values) - set(merged)
        if unknown:
            raise KeyError(f"unknown device keys: {sorted(unknown)}")
        merged.update(values)
        omega_bar = None
        if all(b is not None for b in bar):
            omega_bar = (TWO_PI * bar[0], TWO_PI * bar[1])
        return cls(**{k: TWO_PI * v for k, v in merged.items()}, omega_bar=omega_bar)

    @classmethod
    def reference(cls) -> "DeviceParameters":
        return cls.from_ghz()

    def qubit(self, i: int) -> tuple[float, float, float]:
        """(E_C, E_J, g) of qubit ``i`` in {1, 2}."""
        if i == 1:
            return self.ec1, self.ej1, self.g1
        if i == 2:
            return self.ec2, self.ej2, self.g2
        raise ValueError(f"qubit index must be 1 or 2, got {i}")

    def with_omega_bar(self, omega_bar: tuple[float, float]) -> "DeviceParameters":
        return replace(self, omega_bar=tuple(omega_bar))

    def to_ghz(self) -> dict[str, float]:
        out = {
            "ec1": self.ec1, "ej1": self.ej1, "ec2": self.ec2, "ej2": self.ej2,
            "g1": self.g1, "g2": self.g2, "omega_r": self.omega_r,
        }
        if self.omega_bar is not None:
            out["omega_bar1"], out["omega_bar2"] = self.omega_bar
        return {k: v / TWO_PI for k, v in out.items()}

    def validate(self, basis: "BasisConfig | None" = None) -> list[str]:
        """Return (and emit as warnings) violations of the transmon/dispersive regime."""
        basis = basis or BasisConfig()
        problems = []
        for i in (1, 2):
            ec, ej, g = self.qubit(i)
            ratio = ej / ec
            if not 5.0 <= ratio <= 50.0:
                problems.append(f"qubit {i}: E_J/E_C = {ratio:.2f} outside the transmon range [5, 50]")
            if ej > 0:
                omega = diagonalize_transmon(ec, ej, basis).omega
                detuning = abs(omega - self.omega_r)
                if detuning == 0 or abs(g) / detuning >= 0.1:
                    problems.append(f"qubit {i}: |g|/|omega - omega_r| >= 0.1 (not dispersive)")
        for msg in problems:
            warnings.warn(msg, stacklevel=2)
        return problems


def load_device_file(path: str | Path) -> tuple[DeviceParameters, BasisConfig]:
    """Read a flat ``key = value`` device file (GHz values, ``#`` comments)."""
    ghz: dict[str, float] = {}
    ints: dict[str, int] = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DeviceFileError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        try:
            if key in _GHZ_KEYS:
                ghz[key] = float(value)
            elif key in _INT_KEYS:
                ints[key] = int(value)
            else:
                raise DeviceFileError(f"{path}:{lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, DeviceFileError):
                raise
            raise DeviceFileError(f"{path}:{lineno}: bad value {value!r} for {key}") from None
    if ("omega_bar1" in ghz) != ("omega_bar2" in ghz):
        raise DeviceFileError(f"{path}: omega_bar1 and omega_bar2 must be given together")
    try:
        device = DeviceParameters.from_ghz(**ghz)
        basis = BasisConfig(**ints)
    except ValueError as exc:
        raise DeviceFileError(f"{path}: {exc}") from None
    return device, basis


def save_device_file(path: str | Path, device: DeviceParameters, basis: BasisConfig | None = None) -> None:
    lines = [f"{k} = {v!r}" for k, v in device.to_ghz().items()]
    if basis is not None:
        lines += [f"n_min = {basis.n_min}", f"n_max = {basis.n_max}", f"k_max = {basis.k_max}"]
    Path(path).write_text("\n".join(lines) + "\n")


def build_cpb_matrix(ec: float, ej: float, basis: BasisConfig, n_g: float = 0.0) -> np.ndarray:
    """Cooper-pair-box Hamiltonian E_C (n - n_g)^2 - E_J cos(phi) in the charge basis.

    cos(phi) couples |n> and |n +- 1> with weight 1/2, so both off-diagonals are -E_J/2.
    """
    if not math.isfinite(n_g):
        raise ValueError(f"n_g must be finite, got {n_g}")
    n = basis.charges
    h = np.diag(ec * (n - n_g) ** 2).astype(complex)
    off = np.full(len(n) - 1, -ej / 2.0)
    h += np.diag(off, 1) + np.diag(off, -1)
    return h


@dataclass(frozen=True)
class TransmonEigenbasis:
    """Eigenpairs of one undriven CPB; ``vectors[n, m]`` is B_{n m}."""

    energies: np.ndarray
    vectors: np.ndarray
    charges: np.ndarray = field(repr=False)

    @property
    def omega(self) -> float:
        return float(self.energies[1] - self.energies[0])

    @property
    def alpha(self) -> float:
        e = self.energies
        return float((e[2] - e[1]) - (e[1] - e[0]))

    def charge_matrix_element(self, m: int, mp: int) -> float:
        """<m| n |m'> in the eigenbasis."""
        return float(np.real(np.vdot(self.vectors[:, m], self.charges * self.vectors[:, mp])))


def _fix_phases(vectors: np.ndarray) -> np.ndarray:
    # Largest-magnitude component made real positive. Transmon eigenvectors have
    # definite charge parity, so |B_{-n}| = |B_n| ties are common: take the
    # lowest charge index among entries within a relative 1e-8 of the maximum.
    out = vectors.astype(complex, copy=True)
    for m in range(out.shape[1]):
        mag = np.abs(out[:, m])
        idx = int(np.flatnonzero(mag >= mag.max() * (1.0 - 1e-8))[0])
        out[:, m] *= np.conj(out[idx, m]) / mag[idx]
        out[idx, m] = mag[idx]
    return out


def diagonalize_transmon(ec: float, ej: float, basis: BasisConfig | None = None) -> TransmonEigenbasis:
    """Eigenbasis of the CPB at n_g = 0 with a reproducible phase convention."""
    basis = basis or BasisConfig()
    energies, vectors = np.linalg.eigh(build_cpb_matrix(ec, ej, basis, 0.0))
    gaps = np.diff(energies[:3])
    if gaps[0] <= 1e-9 * max(1.0, abs(energies[0])):
        warnings.warn("lowest CPB levels are degenerate; eigenbasis is not unique", stacklevel=2)
    return TransmonEigenbasis(energies=energies, vectors=_fix_phases(vectors), charges=basis.charges)


def device_eigenbases(device: DeviceParameters, basis: BasisConfig) -> tuple[TransmonEigenbasis, TransmonEigenbasis]:
    return (
        diagonalize_transmon(device.ec1, device.ej1, basis),
        diagonalize_transmon(device.ec2, device.ej2, basis),
    )


@dataclass(frozen=True)
class Factor:
    """Tridiagonal Hermitian factor: main diagonal and upper off-diagonal (or None)."""

    diag: np.ndarray
    off: np.ndarray | None = None

    def dense(self) -> np.ndarray:
        m = np.diag(self.diag).astype(complex)
        if self.off is not None:
            m += np.diag(self.off, 1) + np.diag(np.conj(self.off), -1)
        return m


@dataclass(frozen=True)
class Term:
    """One tensor-product term over the (k, n1, n2) factors.

    ``kind`` tells the solver how the term enters the product formula:
    ``charging`` (diagonal, carries the time-dependent n_g of ``qubit``),
    ``josephson`` (tridiagonal in one charge factor), ``resonator`` (diagonal
    in k) or ``coupling`` (charge diagonal times resonator off-diagonal).
    """

    kind: str
    factors: tuple[Factor, Factor, Factor]
    qubit: int | None = None
    ec: float = 0.0
    charges: np.ndarray | None = field(default=None, repr=False)

    def dense(self, n_g: float = 0.0) -> np.ndarray:
        fk, f1, f2 = (f.dense() for f in self.factors)
        if self.kind == "charging" and n_g != 0.0:
            shifted = np.diag(self.ec * (self.charges - n_g) ** 2).astype(complex)
            if self.qubit == 1:
                f1 = shifted
            else:
                f2 = shifted
        return np.kron(np.kron(fk, f1), f2)


def hamiltonian_terms(device: DeviceParameters, basis: BasisConfig) -> list[Term]:
    """Structured term list of H; the solver's only view of the physics."""
    n = basis.charges
    nk = basis.n_photon
    ones_n = np.ones_like(n)
    ones_k = np.ones(nk)
    eye_n = Factor(ones_n)
    eye_k = Factor(ones_k)
    ladder = Factor(np.zeros(nk), np.sqrt(np.arange(1, nk, dtype=float)) if nk > 1 else None)
    terms = [
        Term("charging", (eye_k, Factor(device.ec1 * n**2), eye_n), qubit=1, ec=device.ec1, charges=n),
        Term("josephson", (eye_k, Factor(np.zeros_like(n), np.full(len(n) - 1, -device.ej1 / 2)), eye_n), qubit=1),
        Term("charging", (eye_k, eye_n, Factor(device.ec2 * n**2)), qubit=2, ec=device.ec2, charges=n),
        Term("josephson", (eye_k, eye_n, Factor(np.zeros_like(n), np.full(len(n) - 1, -device.ej2 / 2))), qubit=2),
        Term("resonator", (Factor(device.omega_r * np.arange(nk, dtype=float)), eye_n, eye_n)),
    ]
    if nk > 1:
        terms += [
            Term("coupling", (ladder, Factor(device.g1 * n), eye_n), qubit=1),
            Term("coupling", (ladder, eye_n, Factor(device.g2 * n)), qubit=2),
        ]
    return terms


def dense_hamiltonian(terms: list[Term], n_g: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """Assemble the full Hamiltonian from the term list (small bases only)."""
    total = None
    for term in terms:
        ng = n_g[term.qubit - 1] if term.kind == "charging" else 0.0
        h = term.dense(ng)
        total = h if total is None else total + h
    return total
