import math

import numpy as np
import pytest

from jcpulse import compiler, dynamics
from jcpulse.compiler import noon_program
from jcpulse.dynamics import (NO_DECOHERENCE, DecoherenceParams, collapse_operators,
                              full_noon_run, lindblad_evolve, mcwf_sample,
                              noon_ideal_lindblad_fidelity, noon_mcwf_fidelity,
                              propagate, two_qutrit_mcwf, two_qutrit_noon_fidelity,
                              windowed_expectations)
from jcpulse.fock import (DensityMatrix, StateVector, basis_state, fidelity,
                          make_space, to_density)
from jcpulse.model import TWO_PI
from jcpulse.schedule import ControlSchedule, Segment, schedule_from_program

OMEGA = TWO_PI * 20e6
G = TWO_PI * 100e6
DEC = DecoherenceParams(500e-9, 10e-6)


def test_decoherence_params_validation():
    with pytest.raises(ValueError):
        DecoherenceParams(0.0, 1.0)
    inf = DecoherenceParams(math.inf, math.inf)
    assert inf.rate_q == 0.0 and inf.rate_r == 0.0
    assert DEC.rate_q == pytest.approx(2e6)


def test_collapse_operator_set():
    space = make_space(2, 1, 1)
    ops = collapse_operators(space, DEC)
    assert len(ops) == 3
    assert not collapse_operators(space, NO_DECOHERENCE)


# ---------------------------------------------------------------------------
# Schroedinger propagation
# ---------------------------------------------------------------------------

def test_propagate_empty_schedule(toy_params):
    space = make_space(2, 1, 1)
    sched = ControlSchedule((), idle_omega_q=toy_params.omega_q)
    res = propagate(sched, basis_state(space, 0, 0, 0), toy_params)
    assert res.final.amplitude(0, 0, 0) == 1.0
    assert res.norm_drift == 0.0


def test_propagate_resonant_pi_pulse(toy_params):
    # Negligible coupling: a resonant pi-area drive inverts the atom.
    import dataclasses
    params = dataclasses.replace(toy_params, g_a=1e-3, g_b=1e-3)
    space = make_space(2, 1, 1)
    t_pi = math.pi / params.rabi_omega
    seg = Segment(0.0, t_pi, params.omega_q, drive_amp=params.rabi_omega,
                  drive_freq=params.omega_q, drive_phase=0.0, label="R")
    sched = ControlSchedule((seg,), idle_omega_q=params.omega_q)
    res = propagate(sched, basis_state(space, 0, 0, 0), params, dt_max=1e-9)
    assert res.final.population(1, 0, 0) >= 0.999
    assert res.norm_drift < 1e-8


def test_propagate_dt_max_validation(toy_params):
    space = make_space(2, 1, 1)
    sched = ControlSchedule((), idle_omega_q=toy_params.omega_q)
    with pytest.raises(ValueError):
        propagate(sched, basis_state(space, 0, 0, 0), toy_params, dt_max=0.0)


def test_propagate_sampling_grid(toy_params):
    space = make_space(2, 1, 1)
    seg = Segment(0.0, 10e-9, toy_params.omega_q, label="idle")
    sched = ControlSchedule((seg,), idle_omega_q=toy_params.omega_q)
    res = propagate(sched, basis_state(space, 1, 0, 0), toy_params,
                    sample_dt=1e-9)
    assert res.times[0] == 0.0 and res.times[-1] == pytest.approx(10e-9)
    assert res.states.shape[1] == space.dim
    assert len(res.times) >= 11


# ---------------------------------------------------------------------------
# Lindblad
# ---------------------------------------------------------------------------

def test_lindblad_pure_qubit_decay(toy_params):
    # No drive, initial |1>: population decays as e^{-t/T_q}.
    space = make_space(2, 0, 0)
    seg = Segment(0.0, 400e-9, toy_params.omega_q, label="idle")
    sched = ControlSchedule((seg,), idle_omega_q=toy_params.omega_q)
    dec = DecoherenceParams(200e-9, math.inf)
    res = lindblad_evolve(sched, to_density(basis_state(space, 1, 0, 0)), dec,
                          toy_params, dt_max=2e-9)
    expected = math.exp(-400.0 / 200.0)
    assert res.final.population(1, 0, 0) == pytest.approx(expected, abs=1e-6)
    assert res.trace_drift < 1e-7
    assert res.herm_deviation < 1e-9


def test_lindblad_closed_limit_matches_propagate(toy_params):
    import dataclasses
    params = dataclasses.replace(toy_params, g_a=1e-3, g_b=1e-3)
    space = make_space(2, 1, 1)
    t_half = 0.5 * math.pi / params.rabi_omega
    seg = Segment(0.0, t_half, params.omega_q, drive_amp=params.rabi_omega,
                  drive_freq=params.omega_q, drive_phase=0.0, label="R")
    sched = ControlSchedule((seg,), idle_omega_q=params.omega_q)
    psi = propagate(sched, basis_state(space, 0, 0, 0), params).final
    rho = lindblad_evolve(sched, to_density(basis_state(space, 0, 0, 0)),
                          NO_DECOHERENCE, params, dt_max=1e-9).final
    target = StateVector(space, psi.amplitudes / np.linalg.norm(psi.amplitudes))
    assert fidelity(rho, target) == pytest.approx(1.0, abs=1e-7)


def test_lindblad_ideal_mode_zero_rates_matches_run_ideal(strong_params):
    prog = noon_program(2, strong_params)
    space = make_space(2, 2, 2)
    rho0 = to_density(basis_state(space, 0, 0, 0))
    res = lindblad_evolve(prog, rho0, NO_DECOHERENCE, strong_params,
                          dt_max=2.5e-10)
    psi = compiler.run_ideal(prog, basis_state(space, 0, 0, 0), strong_params)
    assert fidelity(res.final, psi) == pytest.approx(1.0, abs=1e-7)
    assert res.trace_drift < 1e-7


def test_lindblad_ideal_mode_fidelity_anchor():
    # Frozen value cross-checked against the perturbative closed form.
    f = noon_ideal_lindblad_fidelity(3, DEC, OMEGA, G)
    assert f == pytest.approx(0.9224, abs=2e-3)


def test_lindblad_positivity_guard():
    space = make_space(2, 0, 0)
    bad = np.diag([1.5, -0.5]).astype(complex)
    with pytest.raises(RuntimeError, match="positivity"):
        dynamics._positivity_check(bad, "in test")


def test_lindblad_dt_halving_stability():
    f1 = noon_ideal_lindblad_fidelity(2, DEC, OMEGA, G, dt_max=2.5e-10)
    f2 = noon_ideal_lindblad_fidelity(2, DEC, OMEGA, G, dt_max=1.25e-10)
    assert abs(f1 - f2) < 1e-6


# ---------------------------------------------------------------------------
# Monte-Carlo wavefunction
# ---------------------------------------------------------------------------

def test_mcwf_no_decoherence_deterministic(strong_params):
    res = noon_mcwf_fidelity(2, NO_DECOHERENCE, OMEGA, G, n_traj=8, seed=5)
    assert res.std_error == 0.0
    assert res.mean_fidelity == pytest.approx(1.0, abs=1e-10)


def test_mcwf_seed_reproducible():
    a = noon_mcwf_fidelity(2, DEC, OMEGA, G, n_traj=64, seed=9)
    b = noon_mcwf_fidelity(2, DEC, OMEGA, G, n_traj=64, seed=9)
    assert a.mean_fidelity == b.mean_fidelity
    np.testing.assert_array_equal(a.fidelities, b.fidelities)
    c = noon_mcwf_fidelity(2, DEC, OMEGA, G, n_traj=64, seed=10)
    assert c.mean_fidelity != a.mean_fidelity


def test_mcwf_workers_equivalent():
    a = noon_mcwf_fidelity(2, DEC, OMEGA, G, n_traj=32, seed=3, workers=1)
    b = noon_mcwf_fidelity(2, DEC, OMEGA, G, n_traj=32, seed=3, workers=4)
    np.testing.assert_array_equal(a.fidelities, b.fidelities)


def test_mcwf_consistent_with_lindblad():
    lind = noon_ideal_lindblad_fidelity(3, DEC, OMEGA, G)
    traj = noon_mcwf_fidelity(3, DEC, OMEGA, G, n_traj=512, seed=11)
    assert abs(traj.mean_fidelity - lind) <= 3.0 * traj.std_error


def test_mcwf_rejects_bad_args(strong_params):
    prog = noon_program(1, strong_params)
    space = make_space(2, 1, 1)
    with pytest.raises(ValueError):
        mcwf_sample(prog, basis_state(space, 0, 0, 0), DEC, strong_params,
                    basis_state(space, 0, 1, 0), n_traj=0, seed=1)
    with pytest.raises(ValueError, match="space"):
        mcwf_sample(prog, basis_state(space, 0, 0, 0), DEC, strong_params,
                    basis_state(make_space(2, 2, 2), 0, 1, 0), n_traj=1, seed=1)


# ---------------------------------------------------------------------------
# Windowed expectations
# ---------------------------------------------------------------------------

def test_windowed_constant_state():
    space = make_space(2, 2, 2)
    times = np.linspace(0, 1e-7, 101)
    amp = basis_state(space, 0, 1, 0).amplitudes
    states = np.tile(amp, (101, 1))
    out = windowed_expectations(times, states, space, 5e-9)
    np.testing.assert_allclose(out["n_a"], 1.0, atol=1e-14)
    np.testing.assert_allclose(out["q"], 0.0, atol=1e-14)


def test_windowed_zero_window_is_raw():
    space = make_space(2, 1, 1)
    times = np.linspace(0, 1e-8, 11)
    rng = np.random.default_rng(1)
    states = rng.standard_normal((11, space.dim)) + 0j
    out = windowed_expectations(times, states, space, 0.0)
    labels = space.labels()
    raw = (np.abs(states) ** 2) @ labels[:, 1]
    np.testing.assert_allclose(out["n_a"], raw, atol=1e-14)


def test_windowed_errors():
    space = make_space(2, 1, 1)
    times = np.linspace(0, 1e-8, 11)
    states = np.zeros((11, space.dim), dtype=complex)
    with pytest.raises(ValueError, match="span"):
        windowed_expectations(times, states, space, 1e-7)
    with pytest.raises(ValueError, match="two samples"):
        windowed_expectations(times, states, space, 1e-9)


def test_windowed_noon_moments(strong_params):
    # Final-state moments of the three-photon entangled target.
    space = make_space(2, 3, 3)
    prog = noon_program(3, strong_params)
    final = compiler.run_ideal(prog, basis_state(space, 0, 0, 0), strong_params)
    times = np.linspace(0, 2e-8, 9)
    states = np.tile(final.amplitudes, (9, 1))
    out = windowed_expectations(times, states, space, 5e-9)
    assert out["n_a"][-1] + out["n_b"][-1] == pytest.approx(3.0, abs=1e-10)
    assert out["q"][-1] == pytest.approx(0.0, abs=1e-10)


# ---------------------------------------------------------------------------
# Two-qutrit comparison protocol
# ---------------------------------------------------------------------------

def test_two_qutrit_lossless_limit():
    assert two_qutrit_noon_fidelity(3, NO_DECOHERENCE, OMEGA, G) == \
        pytest.approx(1.0, abs=1e-9)


def test_two_qutrit_against_closed_form():
    from jcpulse.decoherence import fidelity_closed
    for n in (2, 3, 4):
        sim = two_qutrit_noon_fidelity(n, DEC, OMEGA, G)
        closed = fidelity_closed("M2", n, DEC, OMEGA, G)
        assert abs(sim - closed) < 0.02


def test_two_qutrit_mcwf_consistency():
    res = two_qutrit_mcwf(3, NO_DECOHERENCE, OMEGA, G, n_traj=4, seed=2)
    assert res.mean_fidelity == pytest.approx(1.0, abs=1e-9)
    assert res.std_error == 0.0
    lind = two_qutrit_noon_fidelity(3, DEC, OMEGA, G)
    traj = two_qutrit_mcwf(3, DEC, OMEGA, G, n_traj=384, seed=8)
    assert abs(traj.mean_fidelity - lind) <= 3.0 * traj.std_error


# ---------------------------------------------------------------------------
# Full time-domain pipeline (reduced size; the three-photon acceptance run
# lives in the acceptance suite)
# ---------------------------------------------------------------------------

def test_full_noon_run_small(fig5_params):
    result = full_noon_run(fig5_params, n=2, shape="ramped", ramp_time=0.5e-9)
    assert result.norm_drift < 1e-8
    assert result.fidelity > 0.95
    assert result.fidelity_raw <= result.fidelity + 1e-12
    assert result.duration > 0
