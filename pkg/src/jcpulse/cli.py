"""Experiment runner.

Subcommands::

    synthesize      compile a target state into a pulse program file
    run-ideal       execute a program with the idealized step semantics
    simulate        realize a program as a control schedule and integrate it
    lindblad        master-equation fidelity of a NOON preparation
    trajectories    Monte-Carlo wavefunction fidelity of a NOON preparation
    fidelity-sweep  closed-form fidelity tables (no simulation)
    reproduce       emit the reference datasets (table1, fig6, fig8-fig10)

All commands are deterministic given their arguments and seed; CSV outputs
are byte-identical across reruns (wall-clock timings go to the side-car
results file, never into CSV).  Exit codes: 0 success, 2 validation error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import compiler, decoherence, dynamics, model, schedule
from .compiler import CompileError
from .fock import basis_state, fidelity, make_space
from .model import TWO_PI
from .schedule import CalibrationError

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

CSV_SCHEMA_VERSION = 1

# Strong-coupling operating point used by the time-domain studies: the Rabi
# rate keeps the nearest Stark class synchronized (two full generalized-Rabi
# cycles per pi pulse) and the second-nearest strongly suppressed.
FULL_DYNAMICS_PRESET = dict(omega_q_ghz=7.0, omega_12_ghz=6.7, omega_a_ghz=6.3,
                            omega_b_ghz=7.7, g_a_mhz=70.0, g_b_mhz=70.0,
                            rabi_mhz=13.73 / math.sqrt(15.0),
                            t_q_ns=500.0, t_r_ns=10000.0)

# Operating point of the decoherence comparisons.
DECOHERENCE_PRESET = dict(omega_q_ghz=7.0, omega_12_ghz=6.7, omega_a_ghz=6.3,
                          omega_b_ghz=7.7, g_a_mhz=100.0, g_b_mhz=100.0,
                          rabi_mhz=20.0, t_q_ns=500.0, t_r_ns=10000.0)


def default_params(preset: dict) -> model.SystemParams:
    return model.SystemParams.from_linear(**preset)


def parse_target(spec: str) -> dict[tuple[int, int], complex]:
    """Parse a target spec: noon(N), max-entangled(N), or inline:{(a,b):amp,...}."""
    spec = spec.strip()
    m = re.fullmatch(r"noon[(:]?(\d+)\)?", spec)
    if m:
        return compiler.noon_target(int(m.group(1)))
    m = re.fullmatch(r"max-entangled[(:]?(\d+)\)?", spec)
    if m:
        return compiler.max_entangled_target(int(m.group(1)))
    if spec.startswith("inline:"):
        body = spec[len("inline:"):].strip()
        if not (body.startswith("{") and body.endswith("}")):
            raise ValueError(f"inline target must look like inline:{{(0,0):1}}, got {spec!r}")
        table: dict[tuple[int, int], complex] = {}
        for item in re.finditer(r"\(\s*(\d+)\s*,\s*(\d+)\s*\)\s*:\s*([^,{}]+)", body):
            na, nb = int(item.group(1)), int(item.group(2))
            table[(na, nb)] = complex(item.group(3).strip().replace(" ", ""))
        if not table:
            raise ValueError(f"no amplitudes found in inline target {spec!r}")
        return table
    raise ValueError(f"unrecognized target spec {spec!r}")


def _load_params(args, preset: dict) -> model.SystemParams:
    if getattr(args, "params", None):
        return model.load_params(args.params)
    return default_params(preset)


def _outdir(args) -> Path:
    out = Path(getattr(args, "out", None) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_csv(path: Path, name: str, params: model.SystemParams | None,
              header: list[str], rows: list[list]) -> None:
    """CSV with a versioned schema comment and the parameters echoed in
    linear units for human checking."""
    lines = [f"# jcpulse csv v{CSV_SCHEMA_VERSION} {name}"]
    if params is not None:
        lines.append(
            "# params "
            f"omega_q_ghz={params.omega_q / TWO_PI / 1e9:g} "
            f"omega_a_ghz={params.omega_a / TWO_PI / 1e9:g} "
            f"omega_b_ghz={params.omega_b / TWO_PI / 1e9:g} "
            f"g_a_mhz={params.g_a / TWO_PI / 1e6:g} "
            f"g_b_mhz={params.g_b / TWO_PI / 1e6:g} "
            f"rabi_mhz={params.rabi_omega / TWO_PI / 1e6:g} "
            f"t_q_ns={params.t_q * 1e9:g} t_r_ns={params.t_r * 1e9:g}"
        )
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _dec_from(params: model.SystemParams) -> dynamics.DecoherenceParams:
    return dynamics.DecoherenceParams(params.t_q, params.t_r)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synthesize(args) -> int:
    params = _load_params(args, FULL_DYNAMICS_PRESET)
    table = parse_target(args.target)
    if args.target.startswith("noon") and not args.general:
        n = max(max(k) for k in table)
        program = compiler.noon_program(n, params, rule=args.rule)
    else:
        program = compiler.synthesize(table, params, rule=args.rule)
    check = compiler.forward_check(program, params)
    out = _outdir(args)
    path = out / "program.txt"
    path.write_text(compiler.write_program(program, params), encoding="utf-8")
    bounds = compiler.program_bounds(program, params)
    n_a, n_b = program.support()
    print(f"program: {path}")
    print(f"steps: {len(program.steps)} total, {program.nontrivial_steps()} non-trivial, "
          f"{program.swap_pairs()} rotation+swap pairs "
          f"(bound {compiler.max_step_pairs(max(n_a, n_b))})")
    print(f"ideal duration: {program.duration() * 1e9:.4f} ns")
    print(f"worst-case bound: {bounds.t_max * 1e9:.4f} ns; "
          f"ladder-protocol time: {bounds.t_noon * 1e9:.4f} ns")
    print(f"forward-check fidelity: {1 - check:.3e} below unity")
    if check < 1.0 - compiler.FORWARD_FIDELITY_TOL:
        print("forward check FAILED", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


def cmd_run_ideal(args) -> int:
    params = _load_params(args, FULL_DYNAMICS_PRESET)
    program, _ = compiler.parse_program(Path(args.program).read_text(encoding="utf-8"))
    space = compiler.space_for_program(program, guard=0)
    trace = compiler.run_ideal_trace(program, basis_state(space, 0, 0, 0), params)
    target = compiler.target_state(space, program.target_table())
    f = fidelity(trace[-1], target)
    out = _outdir(args)
    rows = []
    for step_idx, state in enumerate(trace):
        for i, amp in enumerate(state.amplitudes):
            if abs(amp) ** 2 > 1e-12:
                q, na, nb = space.label(i)
                rows.append([step_idx, q, na, nb, abs(amp) ** 2])
    write_csv(out / "ideal_trace.csv", "ideal_trace", params,
              ["step", "q", "n_a", "n_b", "population"], rows)
    print(f"steps executed: {len(program.steps)}; fidelity vs target: {f:.12f}")
    print(f"trace: {out / 'ideal_trace.csv'}")
    return 0


def _write_schedule_csv(path: Path, sched: schedule.ControlSchedule,
                        params: model.SystemParams) -> None:
    rows = [[seg.label, seg.t0 * 1e9, seg.t1 * 1e9, seg.omega_q / TWO_PI / 1e9,
             seg.drive_amp / TWO_PI / 1e6, seg.drive_freq / TWO_PI / 1e9,
             seg.drive_phase] for seg in sched.segments]
    write_csv(path, "schedule", params,
              ["label", "t0_ns", "t1_ns", "omega_q_ghz", "drive_amp_mhz",
               "drive_freq_ghz", "drive_phase_rad"], rows)


def cmd_simulate(args) -> int:
    params = _load_params(args, FULL_DYNAMICS_PRESET)
    if args.program:
        program, _ = compiler.parse_program(Path(args.program).read_text(encoding="utf-8"))
    else:
        table = parse_target(args.target)
        n = max(max(k) for k in table)
        program = compiler.noon_program(n, params) if args.target.startswith("noon") \
            else compiler.synthesize(table, params)
    space = compiler.space_for_program(program, guard=2)
    shape = "ramped" if args.ramp_ns > 0 else "rectangular"
    sched = schedule.schedule_from_program(
        program, params, space, shape=shape, ramp_time=args.ramp_ns * 1e-9,
        calibrate=not args.no_calibrate)
    t0 = time.perf_counter()
    sample_dt = args.sample_dt_ns * 1e-9 if args.sample_dt_ns else None
    prop = dynamics.propagate(sched, basis_state(space, 0, 0, 0), params,
                              dt_max=args.dt_max_ns * 1e-9, sample_dt=sample_dt)
    wall = time.perf_counter() - t0
    spectrum = schedule.dressed_spectrum(space, params, params.omega_q)
    psi = schedule.dressed_frame_state(prop.final, spectrum, sched.duration)
    target = compiler.target_state(space, program.target_table())
    f_raw = fidelity(psi, target)
    out = _outdir(args)
    if sample_dt is not None:
        series = dynamics.windowed_expectations(prop.times, prop.states, space,
                                                args.window_ns * 1e-9)
        norms = np.linalg.norm(prop.states, axis=1)
        rows = [[t * 1e9, q, na, nb, nrm] for t, q, na, nb, nrm in
                zip(series["t"], series["q"], series["n_a"], series["n_b"], norms)]
        write_csv(out / "timeseries.csv", "timeseries", params,
                  ["t_ns", "q_expect", "na_expect", "nb_expect", "norm_or_trace"], rows)
    _write_schedule_csv(out / "schedule.csv", sched, params)
    (out / "manifest.txt").write_text(
        "schedule = schedule.csv\n"
        f"t_q_ns = {params.t_q * 1e9:.6g}\nt_r_ns = {params.t_r * 1e9:.6g}\n"
        f"rtol = {dynamics.DEFAULT_RTOL_CLOSED}\natol = {dynamics.DEFAULT_ATOL_CLOSED}\n"
        f"dt_max_ns = {args.dt_max_ns}\nramp_ns = {args.ramp_ns}\n"
        f"calibrated = {not args.no_calibrate}\nseed = {args.seed}\nn_traj = 0\n",
        encoding="utf-8")
    (out / "results.txt").write_text(
        f"fidelity = {f_raw:.12f}\nstd_error = 0\n"
        f"norm_drift = {prop.norm_drift:.3e}\nwall_time_s = {wall:.3f}\n",
        encoding="utf-8")
    print(f"schedule duration: {sched.duration * 1e9:.3f} ns; "
          f"norm drift {prop.norm_drift:.2e}; fidelity {f_raw:.6f}")
    print(f"outputs in {out}")
    return 0


def _noon_n(args) -> int:
    table = parse_target(args.target)
    keys = sorted(table)
    n = max(max(k) for k in keys)
    if set(keys) != {(0, n), (n, 0)}:
        raise ValueError("this command takes a noon(N) target")
    return n


def cmd_lindblad(args) -> int:
    params = _load_params(args, DECOHERENCE_PRESET)
    dec = _dec_from(params)
    n = _noon_n(args)
    t0 = time.perf_counter()
    if args.mode == "ideal":
        f = dynamics.noon_ideal_lindblad_fidelity(n, dec, params.rabi_omega,
                                                  params.g_a,
                                                  dt_max=args.dt_max_ns * 1e-9)
    else:
        program = compiler.noon_program(n, params)
        space = compiler.space_for_program(program, guard=2)
        shape = "ramped" if args.ramp_ns > 0 else "rectangular"
        sched = schedule.schedule_from_program(program, params, space, shape=shape,
                                               ramp_time=args.ramp_ns * 1e-9)
        rho0 = dynamics._pure_rho(space, 0, 0, 0)
        result = dynamics.lindblad_evolve(sched, rho0, dec, params,
                                          dt_max=args.dt_max_ns * 1e-9)
        f = fidelity(result.final, dynamics._noon_state(space, n))
    wall = time.perf_counter() - t0
    out = _outdir(args)
    (out / "results.txt").write_text(
        f"fidelity = {f:.12f}\nstd_error = 0\nwall_time_s = {wall:.3f}\n",
        encoding="utf-8")
    print(f"lindblad ({args.mode}) NOON-{n} fidelity: {f:.6f}")
    return 0


def cmd_trajectories(args) -> int:
    params = _load_params(args, DECOHERENCE_PRESET)
    dec = _dec_from(params)
    n = _noon_n(args)
    t0 = time.perf_counter()
    result = dynamics.noon_mcwf_fidelity(n, dec, params.rabi_omega, params.g_a,
                                         n_traj=args.n_traj, seed=args.seed,
                                         workers=args.workers)
    wall = time.perf_counter() - t0
    out = _outdir(args)
    rows = [[i, f] for i, f in enumerate(result.fidelities)]
    write_csv(out / "trajectories.csv", "trajectories", params,
              ["trajectory", "fidelity"], rows)
    (out / "results.txt").write_text(
        f"fidelity = {result.mean_fidelity:.12f}\n"
        f"std_error = {result.std_error:.3e}\n"
        f"n_traj = {result.n_traj}\nseed = {result.seed}\n"
        f"wall_time_s = {wall:.3f}\n", encoding="utf-8")
    print(f"trajectories NOON-{n}: {result.mean_fidelity:.6f} "
          f"+/- {result.std_error:.2e} ({result.n_traj} trajectories)")
    return 0


def cmd_fidelity_sweep(args) -> int:
    params = _load_params(args, DECOHERENCE_PRESET)
    out = _outdir(args)
    if args.sweep == "n":
        rows_d = decoherence.sweep_vs_n(range(1, args.n_max + 1), _dec_from(params),
                                        params.rabi_omega, params.g_a)
    else:
        tqs = np.linspace(args.tq_min_ns, args.tq_max_ns, args.tq_points) * 1e-9
        rows_d = decoherence.sweep_vs_tq(tqs, args.n, params.t_r,
                                         params.rabi_omega, params.g_a)
    header = list(rows_d[0].keys())
    write_csv(out / f"sweep_{args.sweep}.csv", f"fidelity_sweep_{args.sweep}", params,
              header, [[r[k] for k in header] for r in rows_d])
    print(f"wrote {out / f'sweep_{args.sweep}.csv'}")
    return 0


# ---------------------------------------------------------------------------
# Reference datasets
# ---------------------------------------------------------------------------

def _reproduce_table1(params: model.SystemParams, out: Path) -> None:
    program = compiler.noon_program(3, params)
    space = make_space(2, 3, 3)
    trace = compiler.run_ideal_trace(program, basis_state(space, 0, 0, 0), params)
    rows = []
    for idx, (step, state) in enumerate(zip(program.steps, trace[1:]), start=1):
        for i, amp in enumerate(state.amplitudes):
            if abs(amp) ** 2 > 1e-12:
                q, na, nb = space.label(i)
                rows.append([idx, step.kind, step.theta, step.n_class,
                             step.duration * 1e9, q, na, nb, abs(amp) ** 2])
    write_csv(out / "table1.csv", "table1", params,
              ["step", "kind", "theta_rad", "n_class", "duration_ns",
               "q", "n_a", "n_b", "population"], rows)
    (out / "table1_program.txt").write_text(
        compiler.write_program(program, params), encoding="utf-8")


def _reproduce_fig6(params: model.SystemParams, out: Path, dt_max_ns: float,
                    ramp_ns: float) -> None:
    result = dynamics.full_noon_run(params, n=3, shape="ramped" if ramp_ns > 0 else
                                    "rectangular", ramp_time=ramp_ns * 1e-9,
                                    dt_max=dt_max_ns * 1e-9, sample_dt=0.05e-9)
    prop = result.propagation
    space = make_space(2, 5, 5)
    series = dynamics.windowed_expectations(prop.times, prop.states, space, 5e-9)
    rows = [[t * 1e9, q, na, nb] for t, q, na, nb in
            zip(series["t"], series["q"], series["n_a"], series["n_b"])]
    write_csv(out / "fig6.csv", "fig6_windowed_expectations", params,
              ["t_ns", "q_expect", "na_expect", "nb_expect"], rows)
    (out / "fig6_results.txt").write_text(
        f"fidelity = {result.fidelity:.6f}\nfidelity_raw = {result.fidelity_raw:.6f}\n"
        f"norm_drift = {result.norm_drift:.3e}\n", encoding="utf-8")


def _reproduce_fig8(params: model.SystemParams, out: Path, n_traj: int, seed: int,
                    workers: int, method: str) -> None:
    omega, g = params.rabi_omega, params.g_a
    rows = []
    for tq_ns in (500.0, 1000.0):
        dec = dynamics.DecoherenceParams(tq_ns * 1e-9, params.t_r)
        for n in range(1, 7):
            if method == "M1":
                f_closed = decoherence.fidelity_closed("M1", n, dec, omega, g)
                f_rec = decoherence.fidelity_from_rho(
                    decoherence.method1_rho(n, dec, omega, g))
                f_lind = dynamics.noon_ideal_lindblad_fidelity(n, dec, omega, g)
                traj = dynamics.noon_mcwf_fidelity(n, dec, omega, g, n_traj,
                                                   seed + n, workers=workers)
            else:
                f_closed = decoherence.fidelity_closed("M2", n, dec, omega, g)
                f_rec = decoherence.fidelity_from_rho(
                    decoherence.method2_rho(n, dec, omega, g))
                f_lind = dynamics.two_qutrit_noon_fidelity(n, dec, omega, g)
                traj = dynamics.two_qutrit_mcwf(n, dec, omega, g, n_traj,
                                                seed + n, workers=workers)
            rows.append([n, tq_ns, f_closed, f_rec, f_lind,
                         traj.mean_fidelity, traj.std_error])
    name = "fig8" if method == "M1" else "fig9"
    write_csv(out / f"{name}.csv", f"{name}_fidelity_vs_n", params,
              ["n", "t_q_ns", "f_closed", "f_recursion", "f_lindblad",
               "f_mcwf", "mcwf_std_error"], rows)


def _reproduce_fig10(params: model.SystemParams, out: Path) -> None:
    omega, g = params.rabi_omega, params.g_a
    rows = []
    for tq_ns in np.linspace(300.0, 2000.0, 20):
        dec = dynamics.DecoherenceParams(tq_ns * 1e-9, params.t_r)
        rows.append([
            tq_ns,
            decoherence.fidelity_closed("M1", 4, dec, omega, g),
            decoherence.fidelity_closed("M2", 4, dec, omega, g),
            dynamics.noon_ideal_lindblad_fidelity(4, dec, omega, g),
            dynamics.two_qutrit_noon_fidelity(4, dec, omega, g),
        ])
    write_csv(out / "fig10.csv", "fig10_fidelity_vs_tq", params,
              ["t_q_ns", "f_m1_closed", "f_m2_closed",
               "f_m1_lindblad", "f_m2_lindblad"], rows)


def cmd_reproduce(args) -> int:
    preset = FULL_DYNAMICS_PRESET if args.figure in ("table1", "fig6") \
        else DECOHERENCE_PRESET
    params = _load_params(args, preset)
    out = _outdir(args)
    if args.figure == "table1":
        _reproduce_table1(params, out)
    elif args.figure == "fig6":
        _reproduce_fig6(params, out, args.dt_max_ns, args.ramp_ns)
    elif args.figure in ("fig8", "fig9"):
        _reproduce_fig8(params, out, args.n_traj, args.seed, args.workers,
                        "M1" if args.figure == "fig8" else "M2")
    elif args.figure == "fig10":
        _reproduce_fig10(params, out)
    else:
        raise ValueError(f"unknown figure id {args.figure!r}")
    print(f"wrote {args.figure} dataset to {out}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--params", help="parameter file (key = value, linear units)")
    p.add_argument("--out", help="output directory (default: current)")
    p.add_argument("--seed", type=int, default=1234)
    p.add_argument("--n-traj", type=int, default=1024)
    p.add_argument("--dt-max-ns", type=float, default=1.0)
    p.add_argument("--ramp-ns", type=float, default=0.5)
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="jcpulse", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="compile a target state")
    p.add_argument("--target", required=True)
    p.add_argument("--rule", choices=("difference", "sum"), default="difference")
    p.add_argument("--general", action="store_true",
                   help="use the general inverse solver even for noon targets")
    _add_common(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("run-ideal", help="execute a program ideally")
    p.add_argument("--program", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_run_ideal)

    p = sub.add_parser("simulate", help="schedule + full propagation")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--target")
    g.add_argument("--program")
    p.add_argument("--no-calibrate", action="store_true")
    p.add_argument("--sample-dt-ns", type=float, default=0.0)
    p.add_argument("--window-ns", type=float, default=5.0)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("lindblad", help="master-equation NOON fidelity")
    p.add_argument("--target", required=True)
    p.add_argument("--mode", choices=("ideal", "schedule"), default="ideal")
    _add_common(p)
    p.set_defaults(func=cmd_lindblad)

    p = sub.add_parser("trajectories", help="Monte-Carlo wavefunction NOON fidelity")
    p.add_argument("--target", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_trajectories)

    p = sub.add_parser("fidelity-sweep", help="closed-form sweep tables")
    p.add_argument("--sweep", choices=("n", "tq"), default="n")
    p.add_argument("--n-max", type=int, default=6)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--tq-min-ns", type=float, default=300.0)
    p.add_argument("--tq-max-ns", type=float, default=2000.0)
    p.add_argument("--tq-points", type=int, default=20)
    _add_common(p)
    p.set_defaults(func=cmd_fidelity_sweep)

    p = sub.add_parser("reproduce", help="emit reference datasets")
    p.add_argument("figure", choices=("table1", "fig6", "fig8", "fig9", "fig10"))
    _add_common(p)
    p.set_defaults(func=cmd_reproduce)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (CompileError, CalibrationError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
