"""A small quantum-assembly front end: parse, decompose into the physical gate set, compile to pulses, run.

Register qubit ``q[0]`` is transmon 1 and ``q[1]`` is transmon 2.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import gates
from .metrics import ComputationalMap
from .pulses import (
    CalibratedGateTable,
    PhaseFrame,
    PulseSchedule,
    apply_vz,
    cnot_schedule,
    merge,
    single_qubit_gate,
)
from .solver import COMPUTATIONAL_LABELS, Propagator

MNEMONICS = {"x": 1, "h": 1, "s": 1, "t": 1, "tdg": 1, "u1": 1, "cx": 2}
PARAMETRIC = {"u1"}
IGNORED = ("OPENQASM", "include", "qreg", "creg")
N_QUBITS = 2


class CircuitError(ValueError):
    """Parse or validation error with a source position."""

    def __init__(self, kind: str, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {kind}: {message}")
        self.kind = kind
        self.line = line
        self.col = col


@dataclass(frozen=True)
class GateApp:
    name: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()
    line: int = 0
    col: int = 0

    def same_as(self, other: "GateApp") -> bool:
        """Equality ignoring source position."""
        return (self.name, self.qubits, self.params) == (other.name, other.qubits, other.params)


@dataclass(frozen=True)
class CircuitAst:
    gates: tuple[GateApp, ...] = ()

    def __len__(self):
        return len(self.gates)

    def __add__(self, other: "CircuitAst") -> "CircuitAst":
        return CircuitAst(self.gates + other.gates)

    def __mul__(self, n: int) -> "CircuitAst":
        return CircuitAst(self.gates * n)

    def same_as(self, other: "CircuitAst") -> bool:
        return len(self) == len(other) and all(a.same_as(b) for a, b in zip(self.gates, other.gates))


# parsing ---------------------------------------------------------------------------

_STATEMENT = re.compile(
    r"\s*(?P<name>[A-Za-z_][A-Za-z0-9_]*)\s*(?:\((?P<args>.*)\))?\s*(?P<ops>[^()]*)$"
)
_OPERAND = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_]*)\s*\[\s*([^\]]*?)\s*\]\s*$")
_ANGLE_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)|(pi)|([-+*/()]))")


def _angle(text: str, line: int, col: int) -> float:
    """Evaluate a radian expression built from numbers, pi, + - * / and parentheses."""
    tokens, pos = [], 0
    text = text.strip()
    while pos < len(text):
        m = _ANGLE_TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise CircuitError("malformed angle", repr(text), line, col)
        num, pi, op = m.groups()
        tokens.append(float(num) if num else math.pi if pi else op)
        pos = m.end()
    if not tokens:
        raise CircuitError("malformed angle", "empty angle", line, col)

    def expr(i):
        v, i = term(i)
        while i < len(tokens) and tokens[i] in ("+", "-"):
            rhs, j = term(i + 1)
            v, i = (v + rhs if tokens[i] == "+" else v - rhs), j
        return v, i

    def term(i):
        v, i = unary(i)
        while i < len(tokens) and tokens[i] in ("*", "/"):
            rhs, j = unary(i + 1)
            if tokens[i] == "/" and rhs == 0:
                raise CircuitError("malformed angle", "division by zero", line, col)
            v, i = (v * rhs if tokens[i] == "*" else v / rhs), j
        return v, i

    def unary(i):
        if i < len(tokens) and tokens[i] in ("+", "-"):
            v, j = unary(i + 1)
            return (v if tokens[i] == "+" else -v), j
        return atom(i)

    def atom(i):
        if i >= len(tokens):
            raise CircuitError("malformed angle", repr(text), line, col)
        tok = tokens[i]
        if isinstance(tok, float):
            return tok, i + 1
        if tok == "(":
            v, j = expr(i + 1)
            if j >= len(tokens) or tokens[j] != ")":
                raise CircuitError("malformed angle", repr(text), line, col)
            return v, j + 1
        raise CircuitError("malformed angle", repr(text), line, col)

    value, end = expr(0)
    if end != len(tokens) or not math.isfinite(value):
        raise CircuitError("malformed angle", repr(text), line, col)
    return value


def _statements(source: str):
    """Yield (text, line, col) for each ';'-terminated statement, comments stripped."""
    buf, start = [], None
    for lineno, raw in enumerate(source.splitlines(), start=1):
        code = raw.split("//", 1)[0]
        for col, ch in enumerate(code, start=1):
            if ch == ";":
                yield "".join(buf), start or (lineno, col)
                buf, start = [], None
            else:
                if start is None and not ch.isspace():
                    start = (lineno, col)
                if start is not None:
                    buf.append(ch)
        if start is not None:
            buf.append(" ")
    if start is not None:
        raise CircuitError("syntax error", "missing ';'", *start)


def parse(source: str) -> CircuitAst:
    """Parse statements ``name[(angle)] q[i][, q[j]];`` into an AST; raises CircuitError."""
    apps = []
    for text, (line, col) in _statements(source):
        text = text.strip()
        if text.split(None, 1)[0] in IGNORED:
            continue
        m = _STATEMENT.match(text)
        if not m:
            raise CircuitError("syntax error", repr(text), line, col)
        name = m.group("name")
        if name not in MNEMONICS:
            raise CircuitError("unknown mnemonic", repr(name), line, col)
        args = m.group("args")
        if name in PARAMETRIC:
            if args is None:
                raise CircuitError("malformed angle", f"{name} needs an angle", line, col)
            params = (_angle(args, line, col),)
        elif args is not None:
            raise CircuitError("syntax error", f"{name} takes no angle", line, col)
        else:
            params = ()
        ops = [o for o in m.group("ops").split(",")]
        if len(ops) != MNEMONICS[name] or not m.group("ops").strip():
            raise CircuitError("syntax error", f"{name} needs {MNEMONICS[name]} operand(s)", line, col)
        qubits = []
        for op in ops:
            om = _OPERAND.match(op)
            if not om or om.group(1) != "q":
                raise CircuitError("syntax error", f"bad operand {op.strip()!r}", line, col)
            if not re.fullmatch(r"\d+", om.group(2)) or int(om.group(2)) >= N_QUBITS:
                raise CircuitError("bad qubit index", f"{op.strip()!r}", line, col)
            qubits.append(int(om.group(2)))
        if len(set(qubits)) != len(qubits):
            raise CircuitError("bad qubit index", "cx operands must differ", line, col)
        apps.append(GateApp(name, tuple(qubits), params, line, col))
    return CircuitAst(tuple(apps))


def pretty(ast: CircuitAst) -> str:
    """Source text that parses back to the same gate list."""
    lines = []
    for g in ast.gates:
        args = f"({g.params[0]!r})" if g.params else ""
        ops = ",".join(f"q[{q}]" for q in g.qubits)
        lines.append(f"{g.name}{args} {ops};")
    return "\n".join(lines) + ("\n" if lines else "")


# decomposition -------------------------------------------------------------------------

@dataclass(frozen=True)
class Primitive:
    """``kind`` is 'x' (X rotation pulse), 'z' (virtual) or 'cnot'; qubits are 1-based."""

    kind: str
    qubits: tuple[int, ...]
    angle: float = 0.0
    source: int = -1

    @property
    def is_pulse(self) -> bool:
        return self.kind != "z"


def decompose(ast: CircuitAst) -> list[Primitive]:
    out: list[Primitive] = []
    half = math.pi / 2
    for i, g in enumerate(ast.gates):
        q = tuple(k + 1 for k in g.qubits)
        if g.name == "x":
            out.append(Primitive("x", q, math.pi, i))
        elif g.name == "h":
            out += [Primitive("z", q, half, i), Primitive("x", q, half, i), Primitive("z", q, half, i)]
        elif g.name == "s":
            out.append(Primitive("z", q, half, i))
        elif g.name == "t":
            out.append(Primitive("z", q, math.pi / 4, i))
        elif g.name == "tdg":
            out.append(Primitive("z", q, -math.pi / 4, i))
        elif g.name == "u1":
            out.append(Primitive("z", q, g.params[0], i))
        elif g.name == "cx":
            out.append(Primitive("cnot", q, 0.0, i))
        else:  # pragma: no cover - parse() rejects these
            raise ValueError(g.name)
    return out


def primitive_unitary(p: Primitive) -> np.ndarray:
    if p.kind == "x":
        return gates.x_gate(p.qubits[0], p.angle)
    if p.kind == "z":
        return gates.z_gate(p.qubits[0], p.angle)
    return gates.cnot(*p.qubits)


_IDEAL_1Q = {
    "x": lambda g: gates.X_GATE,
    "h": lambda g: gates.HADAMARD,
    "s": lambda g: gates.S_GATE,
    "t": lambda g: gates.T_GATE,
    "tdg": lambda g: gates.T_GATE.conj().T,
    "u1": lambda g: gates.u1(g.params[0]),
}


def ideal_unitary(ast: CircuitAst) -> np.ndarray:
    """Textbook matrix of the whole circuit on |m1 m2>."""
    U = np.eye(4, dtype=complex)
    for g in ast.gates:
        if g.name == "cx":
            G = gates.cnot(g.qubits[0] + 1, g.qubits[1] + 1)
        else:
            G = gates.on_qubit(g.qubits[0] + 1, _IDEAL_1Q[g.name](g))
        U = G @ U
    return U


def primitives_unitary(prims: Iterable[Primitive]) -> np.ndarray:
    U = np.eye(4, dtype=complex)
    for p in prims:
        U = primitive_unitary(p) @ U
    return U


# compilation ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Provenance:
    node: int
    primitive: Primitive
    t_start: float
    t_end: float
    frame: PhaseFrame  # frame after this primitive


@dataclass
class CompiledProgram:
    schedule: PulseSchedule
    frame: PhaseFrame
    provenance: list[Provenance] = field(default_factory=list)

    @property
    def duration(self) -> float:
        return self.schedule.duration

    def pulse_count(self, kind: str) -> int:
        return sum(1 for p in self.provenance if p.primitive.kind == kind)

    def node_ends(self) -> list[tuple[int, float, PhaseFrame]]:
        """(node, end time, frame) after the last primitive of each AST node."""
        last: dict[int, Provenance] = {}
        for p in self.provenance:
            last[p.node] = p
        return [(n, p.t_end, p.frame) for n, p in sorted(last.items())]


_X_ANGLE = {math.pi / 2: "pi/2", math.pi: "pi"}


def compile_program(
    prims: Sequence[Primitive],
    table: CalibratedGateTable,
    scheme: str = "cr2",
    frame: PhaseFrame | None = None,
    t0: float = 0.0,
) -> CompiledProgram:
    """Serial schedule: each pulse starts when the previous one ends; Z gates only move the frame."""
    frame = frame or PhaseFrame()
    t = t0
    parts: list[PulseSchedule] = []
    prov: list[Provenance] = []
    for p in prims:
        start = t
        if p.kind == "z":
            frame = apply_vz(frame, p.qubits[0], p.angle)
        elif p.kind == "x":
            angle = _X_ANGLE.get(p.angle)
            if angle is None:
                raise ValueError(f"no physical pulse for X rotation by {p.angle}")
            sched, frame = single_qubit_gate(p.qubits[0], angle, frame, table, t)
            parts.append(sched)
            t = sched.duration
        else:
            sched, frame = cnot_schedule(scheme, p.qubits[0], p.qubits[1], frame, table, t)
            parts.append(sched)
            t = sched.duration
        prov.append(Provenance(p.source, p, start, t, frame))
    sched = merge(parts) if parts else PulseSchedule((), t0)
    return CompiledProgram(sched, frame, prov)


def compile_circuit(ast: CircuitAst, table: CalibratedGateTable, scheme: str = "cr2") -> CompiledProgram:
    return compile_program(decompose(ast), table, scheme)


# running --------------------------------------------------------------------------------

def _state_index(label: str) -> int:
    try:
        return COMPUTATIONAL_LABELS.index(label)
    except ValueError:
        raise ValueError(f"initial state must be one of {COMPUTATIONAL_LABELS}") from None


def distribution_from_map(M: np.ndarray, initial: str = "00") -> np.ndarray:
    """[p00, p01, p10, p11, leak] for a computational basis input."""
    p = np.abs(M[:, _state_index(initial)]) ** 2
    return np.append(p, max(0.0, 1.0 - p.sum()))


def run_maps(program: CompiledProgram, propagator: Propagator,
             at: Sequence[tuple[float, PhaseFrame]] | None = None) -> list[np.ndarray]:
    """Frame-corrected maps Z_frame M(t) at each (time, frame); default is the program end."""
    at = list(at) if at is not None else [(program.duration, program.frame)]
    if not at:
        return []
    times = sorted(set(t for t, _ in at))
    raw = dict(zip(times, propagator.computational_maps(program.schedule, 0.0, times)))
    return [gates.zz_frame(*f.as_tuple()) @ raw[t] for t, f in at]


def run_map(program: CompiledProgram, propagator: Propagator, U: np.ndarray | None = None,
            label: str = "") -> ComputationalMap:
    M = run_maps(program, propagator)[0]
    target = np.eye(4, dtype=complex) if U is None else U
    return ComputationalMap(M, target, label, program.duration)


def run(program: CompiledProgram, propagator: Propagator,
        initial: str | Sequence[str] = COMPUTATIONAL_LABELS) -> dict[str, np.ndarray]:
    """Outcome distributions (p00, p01, p10, p11, leak) at the end of the program."""
    labels = [initial] if isinstance(initial, str) else list(initial)
    M = run_maps(program, propagator)[0]
    return {lab: distribution_from_map(M, lab) for lab in labels}


def _prefix_time(programs: Sequence[CompiledProgram]) -> float:
    """Latest node boundary before which every program emits identical pulses."""
    ref = programs[0]
    for t in sorted({0.0} | {t for _, t, _ in ref.node_ends()}, reverse=True):
        before = [d for d in ref.schedule.terms if d.t_on < t]
        if any(d.t_off > t + 1e-9 for d in before):
            continue
        if all([d for d in p.schedule.terms if d.t_on < t] == before and
               all(d.t_off <= t + 1e-9 for d in p.schedule.terms if d.t_on < t) for p in programs[1:]):
            return t
    return 0.0


def run_batch(programs: Sequence[CompiledProgram], propagator: Propagator, initial: str = "00") -> list[np.ndarray]:
    """Distributions of many programs from one input, sharing their common pulse prefix."""
    if not programs:
        return []
    i = _state_index(initial)
    state = propagator.computational_states()[i]
    cut = _prefix_time(programs)
    if cut > 0:
        state = propagator.propagate(state, programs[0].schedule, 0.0, cut)
    out: list[np.ndarray | None] = [None] * len(programs)
    by_end: dict[float, list[int]] = {}
    for k, p in enumerate(programs):
        by_end.setdefault(max(p.duration, cut), []).append(k)
    for end, idx in sorted(by_end.items()):
        for g in range(0, len(idx), 4):
            lanes = idx[g:g + 4]
            states = np.repeat(state[None], len(lanes), axis=0)
            final = propagator.propagate(states, [programs[k].schedule for k in lanes], cut, end)
            a = propagator.to_transmon(final)
            for k, amp in zip(lanes, a):
                p = np.abs(amp[0, :2, :2].reshape(4)) ** 2
                out[k] = np.append(p, max(0.0, 1.0 - p.sum()))
    return out


def run_ideal(ast: CircuitAst, initial: str | Sequence[str] = COMPUTATIONAL_LABELS) -> dict[str, np.ndarray]:
    labels = [initial] if isinstance(initial, str) else list(initial)
    U = ideal_unitary(ast)
    return {lab: distribution_from_map(U, lab) for lab in labels}


# builtin programs ---------------------------------------------------------------------

QFT_SOURCE = """\
// two-qubit QFT
h q[0];
tdg q[0];
cx q[1],q[0];
tdg q[0];
cx q[1],q[0];
s q[0];
t q[1];
h q[1];
cx q[0],q[1];
cx q[1],q[0];
cx q[0],q[1];
"""


def singlet_source(theta1: float, theta2: float) -> str:
    return (
        "x q[0];\nx q[1];\n"
        "h q[0];\n"
        "cx q[0],q[1];\n"
        "h q[0];\nh q[1];\n"
        f"u1({theta1!r}) q[0];\nu1({theta2!r}) q[1];\n"
        "h q[0];\nh q[1];\n"
    )


def builtin(name: str, *args: float) -> CircuitAst:
    """Named circuits: qft, qft4, singlet(theta1, theta2), cnot_chain(n)."""
    if name == "qft":
        return parse(QFT_SOURCE)
    if name == "qft4":
        return parse(QFT_SOURCE) * 4
    if name == "singlet":
        if len(args) != 2:
            raise ValueError("singlet needs two angles")
        return parse(singlet_source(float(args[0]), float(args[1])))
    if name == "cnot_chain":
        if len(args) != 1 or int(args[0]) < 0:
            raise ValueError("cnot_chain needs a non-negative length")
        return parse("cx q[0],q[1];\n" * int(args[0]))
    raise ValueError(f"unknown builtin {name!r}")


BUILTINS = ("qft", "qft4", "singlet", "cnot_chain")


def singlet_observables(p: Sequence[float]) -> tuple[float, float, float]:
    """(E1, E2, E) parity averages of a distribution over 00, 01, 10, 11."""
    p = np.asarray(p, dtype=float)[:4]
    s1 = np.array([1, 1, -1, -1])
    s2 = np.array([1, -1, 1, -1])
    return float(s1 @ p), float(s2 @ p), float((s1 * s2) @ p)
