"""Experiment harness: calibration, gate metrics, repeated gates, CNOT chains, QFT and singlet sweeps."""

from __future__ import annotations

import argparse
import csv
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import partial
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import calibrate, circuits, gates
from .metrics import (
    ComputationalMap,
    average_gate_fidelity,
    diamond_error_rate,
    distance,
    gate_metrics,
    statistical_distance,
    write_metrics_csv,
)
from .model import BasisConfig, DeviceFileError, DeviceParameters, load_device_file
from .optimize import OptimizerConfig
from .pulses import SCHEMES, CalibratedGateTable, TableError, gd_name, gf_name, literature_table
from .solver import TAU_FAST, TAU_FULL, Propagator, UnderResolvedError

EXIT_OK, EXIT_INVALID, EXIT_CALIBRATION = 0, 2, 3

PROFILES = {
    "fast": {"tau": TAU_FAST, "samples": 10_000},
    "full": {"tau": TAU_FULL, "samples": 100_000},
}

EXPERIMENTS = {
    "calibrate": "pulse parameter tables with a calibration report",
    "metrics": "gate metrics of the optimized pulses",
    "repeat": "error rate after n applications of one gate",
    "qft4": "error rate of four successive QFTs per CNOT scheme",
    "cnot-chain": "statistical distance for CNOT12^n on |00> and |10>",
    "singlet": "singlet-state correlations versus analysis angles",
    "scan-cr": "IX and ZX interaction strengths versus CR drive amplitude",
    "run": "outcome distribution of a program file",
}

SINGLE_ROWS = (("X1_pi/2", 1, "pi/2"), ("X2_pi/2", 2, "pi/2"), ("X1_pi", 1, "pi"), ("X2_pi", 2, "pi"))


class ValidationError(ValueError):
    """Bad command-line input or configuration; maps to exit code 2."""


@dataclass
class ExperimentConfig:
    device: DeviceParameters
    basis: BasisConfig
    table: CalibratedGateTable | None
    scheme: str = "cr2"
    profile: str = "fast"
    samples: int = 10_000
    seed: int = 0
    out: Path = Path(".")
    workers: int = 1

    @property
    def tau(self) -> float:
        return PROFILES[self.profile]["tau"]

    def propagator(self) -> Propagator:
        if self.table is None:
            raise ValidationError("this command needs a pulse table")
        return Propagator(self.device.with_omega_bar(self.table.omega_bar), self.basis, self.tau)

    def require_table(self) -> CalibratedGateTable:
        if self.table is None:
            raise ValidationError("this command needs a pulse table")
        return self.table


def chunked_map(fn, items: Sequence, workers: int) -> list:
    """fn maps a list of items to a list of results; split items over up to `workers` processes."""
    items = list(items)
    k = max(1, min(workers, len(items)))
    if k == 1:
        return fn(items)
    chunks = [items[i::k] for i in range(k)]
    with ProcessPoolExecutor(k) as pool:
        parts = list(pool.map(fn, chunks))
    # undo the round-robin split so the output order matches the input
    out = [None] * len(items)
    for i, part in enumerate(parts):
        out[i::k] = part
    return out


def default_table_path(profile: str) -> Path:
    return Path(str(resources.files("transmon_lab") / "data" / f"{profile}.pulses"))


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


# gate maps -----------------------------------------------------------------------------

def gate_label(name: str) -> str:
    """Table entry name to a display label: GD1_pi/2 -> X1_pi/2, GF1_CR2 -> CNOT12_CR2."""
    if name.startswith("GD"):
        return "X" + name[2:]
    control = int(name[2])
    return f"CNOT{control}{3 - control}_{name.split('_')[1]}"


def table_name(label: str) -> str:
    if label.startswith("X"):
        return "GD" + label[1:]
    if label.startswith("CNOT") and "_" in label:
        return f"GF{label[4]}_{label.split('_')[1].upper()}"
    raise ValidationError(f"unknown gate {label!r}")


def metrics_names(schemes: Sequence[str] = SCHEMES) -> list[str]:
    names = [gd_name(q, a) for _, q, a in SINGLE_ROWS]
    for s in schemes:
        names += [gf_name(1, s), gf_name(2, s)]
    return names


def repeated_primitives(name: str, n: int) -> list[circuits.Primitive]:
    kind, q, arg = calibrate._parse_gate(name)
    if kind == "single":
        prim = circuits.Primitive("x", (q,), math.pi / 2 if arg == "pi/2" else math.pi)
    else:
        prim = circuits.Primitive("cnot", (q, 3 - q))
    return [replace(prim, source=i) for i in range(n)]


def repeated_maps(prop: Propagator, table: CalibratedGateTable, name: str, n_max: int) -> list[np.ndarray]:
    """Frame-corrected maps after 0, 1, ..., n_max back-to-back applications."""
    kind = calibrate._parse_gate(name)[0]
    scheme = kind if kind != "single" else "cr2"
    prog = circuits.compile_program(repeated_primitives(name, n_max), table, scheme)
    at = [(0.0, circuits.PhaseFrame())] + [(t, f) for _, t, f in prog.node_ends()]
    return circuits.run_maps(prog, prop, at)


def _metrics_rows(cfg: ExperimentConfig, names: Sequence[str]) -> list:
    table = cfg.require_table()
    prop = cfg.propagator()
    rows = []
    for name in names:
        M, T = calibrate.gate_map(prop, name, table)
        cmap = ComputationalMap(M, calibrate.gate_target(name), gate_label(name), T)
        rows.append(gate_metrics(cmap, n_samples=cfg.samples, seed=cfg.seed))
    return rows


def cmd_metrics(cfg: ExperimentConfig, names: Sequence[str] | None = None) -> list:
    rows = chunked_map(partial(_metrics_rows, cfg), names or metrics_names(), cfg.workers)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(cfg.out / "metrics.csv", rows)
    return rows


def repeat_series(prop: Propagator, table: CalibratedGateTable, name: str, n_max: int,
                  samples: int, seed: int) -> list[tuple]:
    return series_from_maps(name, repeated_maps(prop, table, name, n_max), samples, seed)


def series_from_maps(name: str, maps: Sequence[np.ndarray], samples: int, seed: int) -> list[tuple]:
    """Rows (n, eta, delta, infidelity) comparing maps[n] with the n-th power of the target."""
    U = calibrate.gate_target(name)
    rows = []
    for n in range(1, len(maps)):
        cmap = ComputationalMap(maps[n], np.linalg.matrix_power(U, n))
        f, _ = average_gate_fidelity(cmap, samples, seed)
        rows.append((n, diamond_error_rate(cmap, seed=seed), distance(cmap.M, cmap.U), 1.0 - f))
    return rows


def cmd_repeat(cfg: ExperimentConfig, gate: str, n_max: int = 20) -> list[tuple]:
    name = table_name(gate)
    rows = repeat_series(cfg.propagator(), cfg.require_table(), name, n_max, cfg.samples, cfg.seed)
    slug = gate.replace("/", "_")
    write_csv(cfg.out / f"repeat_{slug}.csv", ("n", "eta", "delta", "infidelity"), rows)
    return rows


def qft4_row(prop: Propagator, table: CalibratedGateTable, scheme: str, samples: int, seed: int) -> tuple:
    ast = circuits.builtin("qft4")
    prog = circuits.compile_circuit(ast, table, scheme)
    cmap = circuits.run_map(prog, prop, circuits.ideal_unitary(ast), f"QFT4_{scheme.upper()}")
    f, _ = average_gate_fidelity(cmap, samples, seed)
    return (scheme.upper(), prog.pulse_count("cnot"), prog.pulse_count("x"), prog.duration,
            diamond_error_rate(cmap, seed=seed), distance(cmap.M, cmap.U), 1.0 - f)


def _qft4_rows(cfg: ExperimentConfig, schemes: Sequence[str]) -> list[tuple]:
    prop, table = cfg.propagator(), cfg.require_table()
    return [qft4_row(prop, table, s, cfg.samples, cfg.seed) for s in schemes]


def cmd_qft4(cfg: ExperimentConfig, schemes: Sequence[str] = ("cr2", "cr4")) -> list[tuple]:
    rows = chunked_map(partial(_qft4_rows, cfg), schemes, cfg.workers)
    write_csv(cfg.out / "qft4.csv", ("scheme", "n_cnot", "n_x", "T_ns", "eta", "delta", "infidelity"), rows)
    return rows


def chain_distances(maps: Sequence[np.ndarray], states: Sequence[str] = ("00", "10")) -> list[tuple]:
    """D(n) between pulse and ideal outcome distributions of CNOT12^n on each input."""
    rows = []
    for n, M in enumerate(maps):
        ideal = np.linalg.matrix_power(gates.cnot(1, 2), n)
        row = [n]
        for s in states:
            p = circuits.distribution_from_map(M, s)[:4]
            q = circuits.distribution_from_map(ideal, s)[:4]
            row.append(statistical_distance(p, q))
        rows.append(tuple(row))
    return rows


def cmd_cnot_chain(cfg: ExperimentConfig, n_max: int = 20, states: Sequence[str] = ("00", "10")) -> list[tuple]:
    maps = repeated_maps(cfg.propagator(), cfg.require_table(), gf_name(1, cfg.scheme), n_max)
    rows = chain_distances(maps, states)
    write_csv(cfg.out / f"cnot_chain_{cfg.scheme}.csv", ["n"] + [f"D_{s}" for s in states], rows)
    return rows


def singlet_points(step_deg: float = 5.0) -> list[tuple[str, float, float]]:
    grid = np.arange(0.0, 360.0 + 1e-9, step_deg)
    return [("a", 0.0, float(t)) for t in grid] + [("b", float(t), float(t)) for t in grid]


def singlet_sweep(prop: Propagator, table: CalibratedGateTable, scheme: str,
                  points: Sequence[tuple[str, float, float]]) -> list[tuple]:
    """Rows (panel, th1, th2, F1, F2, F, E1, E2, E, leak) with angles in degrees."""
    programs = [
        circuits.compile_circuit(circuits.builtin("singlet", math.radians(a), math.radians(b)), table, scheme)
        for _, a, b in points
    ]
    dists = circuits.run_batch(programs, prop, "00")
    rows = []
    for (panel, a, b), d in zip(points, dists):
        ideal = circuits.run_ideal(circuits.builtin("singlet", math.radians(a), math.radians(b)), "00")["00"]
        rows.append((panel, a, b, *circuits.singlet_observables(d), *circuits.singlet_observables(ideal), d[4]))
    return rows


def _singlet_rows(cfg: ExperimentConfig, points: Sequence[tuple[str, float, float]]) -> list[tuple]:
    return singlet_sweep(cfg.propagator(), cfg.require_table(), cfg.scheme, points)


def cmd_singlet(cfg: ExperimentConfig, step_deg: float = 5.0) -> list[tuple]:
    rows = chunked_map(partial(_singlet_rows, cfg), singlet_points(step_deg), cfg.workers)
    header = ("panel", "theta1_deg", "theta2_deg", "F1", "F2", "F", "E1", "E2", "E", "leak")
    write_csv(cfg.out / f"singlet_{cfg.scheme}.csv", header, rows)
    return rows


def cmd_scan_cr(cfg: ExperimentConfig, control: int, omega_cr: Sequence[float],
                omega_cancel: Sequence[float], window: float) -> calibrate.CrScanResult:
    res = calibrate.scan_cr_amplitudes(cfg.propagator(), control, 3 - control, omega_cr, omega_cancel, window)
    rows = [(r["omega_cr"], r["omega_cancel"], r["ix"], r["zx"], int(r["valid"])) for r in res.rows()]
    write_csv(cfg.out / f"scan_cr_{control}{3 - control}.csv", ("omega_cr", "omega_cancel", "ix", "zx", "valid"), rows)
    return res


def cmd_run(cfg: ExperimentConfig, source_path: Path, mode: str, states: Sequence[str]) -> list[tuple]:
    try:
        ast = circuits.parse(Path(source_path).read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read {source_path}: {exc}") from None
    if mode == "ideal":
        dists = circuits.run_ideal(ast, states)
    else:
        prog = circuits.compile_circuit(ast, cfg.require_table(), cfg.scheme)
        dists = circuits.run(prog, cfg.propagator(), states)
    rows = [(s, *dists[s]) for s in states]
    write_csv(cfg.out / f"run_{Path(source_path).stem}.csv", ("label", "p00", "p01", "p10", "p11", "leak"), rows)
    return rows


def cmd_calibrate(cfg: ExperimentConfig, seed_table: CalibratedGateTable | None, names: Sequence[str],
                  budget: int | None, refit_frequencies: bool = True, log=None) -> tuple[CalibratedGateTable, list]:
    if refit_frequencies or seed_table is None:
        wb = calibrate.calibrate_frequencies(cfg.device, cfg.basis, cfg.tau)
    else:
        wb = seed_table.omega_bar
    seed = seed_table.copy() if seed_table is not None else literature_table(wb)
    seed = replace(seed, omega_bar=tuple(wb))
    prop = Propagator(cfg.device.with_omega_bar(wb), cfg.basis, cfg.tau)
    opt = OptimizerConfig() if budget is None else OptimizerConfig(max_evals=budget)
    table, reports = calibrate.calibrate_table(prop, seed, names, opt, log=log)
    cfg.out.mkdir(parents=True, exist_ok=True)
    table.save(cfg.out / f"{cfg.profile}.pulses")
    calibrate.write_report(cfg.out / "calibration.json", wb, reports)
    return table, reports


# argument parsing ---------------------------------------------------------------------

def _float_list(text: str) -> list[float]:
    """'0:0.1:11' (start:stop:count) or a comma-separated list."""
    try:
        if ":" in text:
            a, b, n = text.split(":")
            return [float(v) for v in np.linspace(float(a), float(b), int(n))]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--device", type=Path, help="device file (default: reference device)")
    common.add_argument("--pulses", type=Path, help="pulse table (default: packaged table for the profile)")
    common.add_argument("--scheme", choices=SCHEMES, default="cr2")
    common.add_argument("--profile", choices=sorted(PROFILES), default="fast")
    common.add_argument("--samples", type=int, help="Monte Carlo samples (default: per profile)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=Path, default=Path("."))
    common.add_argument("--workers", type=int, default=1, help="cap on concurrent worker processes")

    p = argparse.ArgumentParser(prog="transmon-lab", description="Pulse-level two-transmon experiments.")
    p.add_argument("--list", action="store_true", help="list experiments and exit")
    sub = p.add_subparsers(dest="command")

    c = sub.add_parser("calibrate", parents=[common], help=EXPERIMENTS["calibrate"])
    c.add_argument("--gates", nargs="+", default=list(calibrate.DEFAULT_ORDER), metavar="NAME")
    c.add_argument("--budget", type=int, help="objective evaluations per gate")
    c.add_argument("--keep-frequencies", action="store_true", help="reuse the table's frequencies")
    c.add_argument("--from-literature", action="store_true", help="seed from published parameters")

    m = sub.add_parser("metrics", parents=[common], help=EXPERIMENTS["metrics"])
    m.add_argument("--gates", nargs="+", metavar="LABEL", help="e.g. X1_pi/2 CNOT12_CR2")

    r = sub.add_parser("repeat", parents=[common], help=EXPERIMENTS["repeat"])
    r.add_argument("--gate", required=True, help="e.g. X1_pi/2 or CNOT12_CR1")
    r.add_argument("--n-max", type=int, default=20)

    sub.add_parser("qft4", parents=[common], help=EXPERIMENTS["qft4"])

    ch = sub.add_parser("cnot-chain", parents=[common], help=EXPERIMENTS["cnot-chain"])
    ch.add_argument("--n-max", type=int, default=20)

    s = sub.add_parser("singlet", parents=[common], help=EXPERIMENTS["singlet"])
    s.add_argument("--step", type=float, default=5.0, help="angle step in degrees")

    sc = sub.add_parser("scan-cr", parents=[common], help=EXPERIMENTS["scan-cr"])
    sc.add_argument("--control", type=int, choices=(1, 2), default=1)
    sc.add_argument("--omega-cr", type=_float_list, default=_float_list("0:0.1:11"))
    sc.add_argument("--omega-cancel", type=_float_list, default=[0.0])
    sc.add_argument("--window", type=float, default=100.0, help="plateau length in ns")

    rn = sub.add_parser("run", parents=[common], help=EXPERIMENTS["run"])
    rn.add_argument("program", type=Path)
    rn.add_argument("--mode", choices=("pulse", "ideal"), default="pulse")
    rn.add_argument("--initial", nargs="+", default=["00"], choices=circuits.COMPUTATIONAL_LABELS)
    return p


def _config(args) -> ExperimentConfig:
    if args.device is not None:
        device, basis = load_device_file(args.device)
    else:
        device, basis = DeviceParameters.reference(), BasisConfig()
    pulses = args.pulses or default_table_path(args.profile)
    table = None
    if args.pulses is not None or pulses.exists():
        table = CalibratedGateTable.load(pulses)
    samples = args.samples if args.samples is not None else PROFILES[args.profile]["samples"]
    if samples < 1:
        raise ValidationError("--samples must be positive")
    if args.workers < 1:
        raise ValidationError("--workers must be positive")
    return ExperimentConfig(device, basis, table, args.scheme, args.profile, samples, args.seed, args.out,
                            args.workers)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list:
        for name, what in EXPERIMENTS.items():
            print(f"{name:11s} {what}")
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_INVALID
    try:
        cfg = _config(args)
        if args.command == "calibrate":
            seed = None if args.from_literature else cfg.table
            names = list(args.gates)
            for n in names:
                calibrate.gate_target(n)
            table, reports = cmd_calibrate(cfg, seed, names, args.budget, not args.keep_frequencies,
                                           log=lambda s: print(s, file=sys.stderr))
            failed = [r.name for r in reports if not r.passed]
            for r in reports:
                print(f"{r.name:10s} delta {r.delta_seed:.6f} -> {r.delta:.6f}  {'ok' if r.passed else 'FAILED'}")
            if failed:
                print(f"calibration failed for {', '.join(failed)}", file=sys.stderr)
                return EXIT_CALIBRATION
        elif args.command == "metrics":
            names = [table_name(g) for g in args.gates] if args.gates else None
            for r in cmd_metrics(cfg, names):
                print(f"{r.gate:12s} T={r.T_ns:8.2f}  delta={r.delta:.5f}  F={r.f_avg:.5f}  eta={r.eta:.5f}  u={r.u:.5f}")
        elif args.command == "repeat":
            for row in cmd_repeat(cfg, args.gate, args.n_max):
                print(*(f"{v:.6g}" for v in row))
        elif args.command == "qft4":
            for row in cmd_qft4(cfg):
                print(row[0], f"eta={row[4]:.4f}")
        elif args.command == "cnot-chain":
            for row in cmd_cnot_chain(cfg, args.n_max):
                print(*(f"{v:.6g}" for v in row))
        elif args.command == "singlet":
            rows = cmd_singlet(cfg, args.step)
            dev = max(abs(r[5] - r[8]) for r in rows)
            print(f"{len(rows)} points, max |F - E| = {dev:.4f}")
        elif args.command == "scan-cr":
            res = cmd_scan_cr(cfg, args.control, args.omega_cr, args.omega_cancel, args.window)
            for row in res.rows():
                print(f"{row['omega_cr']:.4f} {row['omega_cancel']:.4f} IX={row['ix']:+.6f} ZX={row['zx']:+.6f}")
        elif args.command == "run":
            for row in cmd_run(cfg, args.program, args.mode, args.initial):
                print(row[0], *(f"{v:.6f}" for v in row[1:]))
    except calibrate.CalibrationError as exc:
        print(f"calibration error: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except (ValidationError, DeviceFileError, TableError, circuits.CircuitError, UnderResolvedError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
