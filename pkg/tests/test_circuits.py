import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from transmon_lab import gates
from transmon_lab.circuits import (
    QFT_SOURCE,
    CircuitAst,
    CircuitError,
    GateApp,
    Primitive,
    builtin,
    compile_circuit,
    compile_program,
    decompose,
    distribution_from_map,
    ideal_unitary,
    parse,
    pretty,
    primitives_unitary,
    run,
    run_batch,
    run_ideal,
    run_map,
    singlet_observables,
)
from transmon_lab.metrics import distance
from transmon_lab.model import TWO_PI, BasisConfig, DeviceParameters
from transmon_lab.pulses import PhaseFrame, literature_table, shift_schedule
from transmon_lab.solver import Propagator

OMEGA_BAR = (TWO_PI * 5.346, TWO_PI * 5.118)


@pytest.fixture
def table():
    return literature_table(OMEGA_BAR)


def dft4():
    j, k = np.meshgrid(range(4), range(4), indexing="ij")
    return 1j ** (j * k) / 2


# parsing --------------------------------------------------------------------------

def test_parse_examples():
    assert len(parse("")) == 0
    ast = parse("x q[0]; cx q[0],q[1];")
    assert [(g.name, g.qubits) for g in ast.gates] == [("x", (0,)), ("cx", (0, 1))]
    (u,) = parse("u1(0.5) q[1];").gates
    assert (u.name, u.qubits, u.params) == ("u1", (1,), (0.5,))


def test_parse_header_comments_and_positions():
    src = 'OPENQASM 2.0;\ninclude "qelib1.inc";\nqreg q[2];\n// a comment\n  h q[1]; // trailing\nt q[0];\n'
    ast = parse(src)
    assert [(g.name, g.line, g.col) for g in ast.gates] == [("h", 5, 3), ("t", 6, 1)]


@pytest.mark.parametrize(
    "text, value",
    [("pi/2", math.pi / 2), ("-pi/4", -math.pi / 4), ("2*pi/3", 2 * math.pi / 3),
     ("-(pi+1)*2", -(math.pi + 1) * 2), ("1e-3", 1e-3), (".5", 0.5), ("+3", 3.0)],
)
def test_angle_expressions(text, value):
    assert parse(f"u1({text}) q[0];").gates[0].params[0] == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize(
    "src, kind, line",
    [
        ("foo q[0];", "unknown mnemonic", 1),
        ("x q[0];\ny q[1];", "unknown mnemonic", 2),
        ("u1(abc) q[0];", "malformed angle", 1),
        ("u1(pi/0) q[0];", "malformed angle", 1),
        ("u1(pi pi) q[0];", "malformed angle", 1),
        ("u1((pi) q[0];", "malformed angle", 1),
        ("u1() q[0];", "malformed angle", 1),
        ("u1 q[0];", "malformed angle", 1),
        ("x q[2];", "bad qubit index", 1),
        ("x q[-1];", "bad qubit index", 1),
        ("cx q[1],q[1];", "bad qubit index", 1),
        ("x q[0]", "syntax error", 1),
        ("x(0.1) q[0];", "syntax error", 1),
        ("cx q[0];", "syntax error", 1),
        ("x r[0];", "syntax error", 1),
        ("h;", "syntax error", 1),
    ],
)
def test_parse_errors(src, kind, line):
    with pytest.raises(CircuitError) as err:
        parse(src)
    assert err.value.kind == kind
    assert err.value.line == line


gate_apps = st.one_of(
    st.builds(lambda n, q: GateApp(n, (q,)), st.sampled_from(["x", "h", "s", "t", "tdg"]), st.integers(0, 1)),
    st.builds(lambda a, q: GateApp("u1", (q,), (a,)), st.floats(-1e3, 1e3), st.integers(0, 1)),
    st.builds(lambda c: GateApp("cx", (c, 1 - c)), st.integers(0, 1)),
)
circuits = st.lists(gate_apps, max_size=12).map(lambda g: CircuitAst(tuple(g)))


@settings(max_examples=60)
@given(ast=circuits)
def test_pretty_round_trip(ast):
    back = parse(pretty(ast))
    assert back.same_as(ast)
    assert parse(pretty(back)).same_as(back)


# decomposition --------------------------------------------------------------------

def test_decomposition_mappings():
    h = decompose(parse("h q[0];"))
    assert [(p.kind, p.qubits, p.angle) for p in h] == [
        ("z", (1,), math.pi / 2), ("x", (1,), math.pi / 2), ("z", (1,), math.pi / 2)]
    assert decompose(parse("t q[1];")) == [Primitive("z", (2,), math.pi / 4, 0)]
    assert decompose(parse("x q[1];")) == [Primitive("x", (2,), math.pi, 0)]


@pytest.mark.parametrize("src", ["x q[0];", "h q[1];", "s q[0];", "t q[1];", "tdg q[0];",
                                 "u1(0.7) q[1];", "cx q[1],q[0];", QFT_SOURCE])
def test_decomposition_is_sound(src):
    ast = parse(src)
    assert distance(primitives_unitary(decompose(ast)), ideal_unitary(ast)) < 1e-10


@settings(max_examples=40)
@given(ast=circuits)
def test_decomposition_sound_for_random_circuits(ast):
    assert distance(primitives_unitary(decompose(ast)), ideal_unitary(ast)) < 1e-10


@settings(max_examples=20)
@given(a=st.floats(-7, 7), b=st.floats(-7, 7))
def test_singlet_decomposition_sound(a, b):
    ast = builtin("singlet", a, b)
    assert distance(primitives_unitary(decompose(ast)), ideal_unitary(ast)) < 1e-10


def test_qft_is_the_discrete_fourier_transform():
    np.testing.assert_allclose(ideal_unitary(builtin("qft")), dft4(), atol=1e-12)


@pytest.mark.parametrize("name, n_x, n_cnot", [("qft", 2, 5), ("qft4", 8, 20)])
def test_qft_pulse_counts(table, name, n_x, n_cnot):
    prog = compile_circuit(builtin(name), table)
    assert prog.pulse_count("x") == n_x
    assert prog.pulse_count("cnot") == n_cnot


# compilation ----------------------------------------------------------------------

def test_virtual_z_alone_is_free(table):
    prog = compile_program([Primitive("z", (2,), 0.4)], table)
    assert prog.duration == 0.0 and not prog.schedule.terms
    assert prog.frame.as_tuple() == pytest.approx((0.0, 0.4))


@pytest.mark.parametrize("scheme, expected", [("cr2", 431.949), ("cr4", 652.954), ("cr1", 71.865)])
def test_single_cnot_program_duration(table, scheme, expected):
    prog = compile_circuit(parse("cx q[0],q[1];"), table, scheme)
    assert prog.duration == pytest.approx(expected, abs=0.05)


def test_qft_duration_is_serial_sum(table):
    prog = compile_circuit(builtin("qft"), table)
    assert prog.duration == pytest.approx(2 * 83 + 3 * 369.12 + 2 * 431.94, abs=1e-9)


@settings(max_examples=20)
@given(phi=st.floats(-6, 6), scheme=st.sampled_from(["cr1", "cr2", "cr4"]), control=st.sampled_from([1, 2]))
def test_control_z_commutes_through_cnot(phi, scheme, control):
    table = literature_table(OMEGA_BAR)
    cnot = Primitive("cnot", (control, 3 - control))
    z = Primitive("z", (control,), phi)
    before = compile_program([z, cnot], table, scheme)
    after = compile_program([cnot, z], table, scheme)
    assert before.schedule == after.schedule
    assert before.frame.as_tuple() == pytest.approx(after.frame.as_tuple(), abs=1e-12)


@settings(max_examples=30)
@given(phi=st.floats(-6, 6), q=st.sampled_from([1, 2]),
       gate=st.sampled_from([("x", math.pi / 2), ("x", math.pi), ("cnot", 0.0)]))
def test_frame_threading_equals_preshifted_phases(phi, q, gate):
    table = literature_table(OMEGA_BAR)
    kind, angle = gate
    prim = Primitive(kind, (q,) if kind == "x" else (3 - q, q), angle)
    threaded = compile_program([Primitive("z", (q,), phi), prim], table)
    plain = compile_program([prim], table)
    assert threaded.schedule == shift_schedule(plain.schedule, PhaseFrame(*((phi, 0.0) if q == 1 else (0.0, phi))))


def test_provenance_covers_every_node(table):
    ast = builtin("singlet", 0.3, 1.2)
    prog = compile_circuit(ast, table)
    assert {p.node for p in prog.provenance} == set(range(len(ast)))
    ends = prog.node_ends()
    assert [n for n, _, _ in ends] == list(range(len(ast)))
    assert ends[-1][1] == prog.duration
    assert all(a[1] <= b[1] for a, b in zip(ends, ends[1:]))


def test_uncalibrated_x_angle_is_rejected(table):
    with pytest.raises(ValueError, match="X rotation"):
        compile_program([Primitive("x", (1,), 0.3)], table)


# ideal runs and builtins ------------------------------------------------------------

@settings(max_examples=30)
@given(a=st.floats(0, TWO_PI), b=st.floats(0, TWO_PI))
def test_singlet_correlations(a, b):
    p = run_ideal(builtin("singlet", a, b), "00")["00"]
    e1, e2, e = singlet_observables(p)
    assert e1 == pytest.approx(0.0, abs=1e-12)
    assert e2 == pytest.approx(0.0, abs=1e-12)
    assert e == pytest.approx(-math.cos(a - b), abs=1e-12)


def test_singlet_populations():
    np.testing.assert_allclose(run_ideal(builtin("singlet", 0, 0), "00")["00"], [0, 0.5, 0.5, 0, 0], atol=1e-12)


@pytest.mark.parametrize("n", range(5))
def test_cnot_chain_parity(n):
    p = run_ideal(builtin("cnot_chain", n), "10")["10"]
    expected = [0, 0, 1, 0, 0] if n % 2 == 0 else [0, 0, 0, 1, 0]
    np.testing.assert_allclose(p, expected, atol=1e-12)


def test_builtin_errors():
    assert len(builtin("cnot_chain", 0)) == 0
    for args in [("singlet", 1.0), ("cnot_chain", -1), ("bell",)]:
        with pytest.raises(ValueError):
            builtin(*args)


def test_distribution_reports_leakage():
    M = np.diag([0.9, 1, 1, 1]).astype(complex)
    np.testing.assert_allclose(distribution_from_map(M, "00"), [0.81, 0, 0, 0, 0.19])
    with pytest.raises(ValueError):
        distribution_from_map(M, "02")


# pulse-level runs ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_prop():
    return Propagator(DeviceParameters.reference(), BasisConfig(-4, 4, 1), 2e-3)


def test_empty_program_keeps_ground_state(small_prop, table):
    prog = compile_circuit(parse(""), table)
    np.testing.assert_allclose(run(prog, small_prop, "00")["00"], [1, 0, 0, 0, 0], atol=1e-9)


def test_run_map_of_virtual_program_is_frame(small_prop, table):
    prog = compile_circuit(parse("u1(0.3) q[0]; s q[1];"), table)
    cmap = run_map(prog, small_prop, ideal_unitary(parse("u1(0.3) q[0]; s q[1];")))
    assert distance(cmap.M, cmap.U) < 1e-20


def test_batch_matches_individual_runs(small_prop):
    table = literature_table(small_prop.omega_bar)
    progs = [compile_circuit(parse(f"x q[0]; u1({a}) q[0]; h q[0];"), table) for a in (0.0, 0.8, 2.0)]
    progs.append(compile_circuit(parse("x q[0];"), table))
    batch = run_batch(progs, small_prop, "00")
    for prog, got in zip(progs, batch):
        np.testing.assert_allclose(got, run(prog, small_prop, "00")["00"], atol=1e-10)
    assert run_batch([], small_prop) == []
