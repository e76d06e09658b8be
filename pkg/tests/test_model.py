import math

import numpy as np
import pytest
from scipy.optimize import brentq

from jcpulse.fock import basis_state, make_space
from jcpulse.model import (TWO_PI, AsymmetricShiftError, SystemParams,
                           dispersive_energy, dispersive_map, drive_frequency,
                           drive_term, format_params, load_params, params_digest,
                           parse_params, qutrit_drive_frequency, static_hamiltonian,
                           transition_frequency)

PARAM_TEXT = """
# device A
omega_q_ghz = 7.0
omega_12_ghz = 6.7
omega_a_ghz = 6.3
omega_b_ghz = 7.7
g_a_mhz = 70
g_b_mhz = 70
rabi_mhz = 20
t_q_ns = 500
t_r_ns = 10000
"""


def test_parse_params_roundtrip(tmp_path):
    params = parse_params(PARAM_TEXT)
    assert params.omega_q == pytest.approx(TWO_PI * 7e9)
    assert params.g_a == pytest.approx(TWO_PI * 70e6)
    assert params.t_r == pytest.approx(10e-6)
    path = tmp_path / "params.txt"
    path.write_text(format_params(params))
    again = load_params(path)
    assert again == params


def test_parse_params_errors():
    with pytest.raises(ValueError, match="missing"):
        parse_params("omega_q_ghz = 7\n")
    with pytest.raises(ValueError, match="unknown key"):
        parse_params(PARAM_TEXT + "bogus = 1\n")
    with pytest.raises(ValueError, match="duplicate"):
        parse_params(PARAM_TEXT + "omega_q_ghz = 8\n")


def test_params_digest_distinguishes():
    a = parse_params(PARAM_TEXT)
    b = parse_params(PARAM_TEXT.replace("t_q_ns = 500", "t_q_ns = 501"))
    assert params_digest(a) != params_digest(b)
    assert params_digest(a) == params_digest(parse_params(PARAM_TEXT))


def test_params_reject_nonpositive():
    with pytest.raises(ValueError):
        SystemParams.from_linear(omega_q_ghz=7, omega_12_ghz=6.7, omega_a_ghz=6.3,
                                 omega_b_ghz=7.7, g_a_mhz=0.0, g_b_mhz=70,
                                 rabi_mhz=20, t_q_ns=500, t_r_ns=10000)


def test_params_warn_outside_dispersive_regime():
    with pytest.warns(UserWarning, match="dispersive"):
        SystemParams.from_linear(omega_q_ghz=7, omega_12_ghz=6.7, omega_a_ghz=6.9,
                                 omega_b_ghz=7.7, g_a_mhz=70, g_b_mhz=70,
                                 rabi_mhz=20, t_q_ns=500, t_r_ns=10000)


def test_uncoupled_hamiltonian_spectrum(fig5_params):
    tiny = SystemParams.from_linear(omega_q_ghz=7.0, omega_12_ghz=6.7,
                                    omega_a_ghz=6.3, omega_b_ghz=7.7,
                                    g_a_mhz=1e-9, g_b_mhz=1e-9, rabi_mhz=20,
                                    t_q_ns=500, t_r_ns=10000)
    space = make_space(2, 2, 2)
    h = static_hamiltonian(space, tiny, tiny.omega_q).matrix
    expected = sorted(q * tiny.omega_q + na * tiny.omega_a + nb * tiny.omega_b
                      for q in range(2) for na in range(3) for nb in range(3))
    np.testing.assert_allclose(np.linalg.eigvalsh(h), expected, rtol=1e-12)


def test_jc_matrix_element(fig5_params):
    space = make_space(2, 1, 1)
    h = static_hamiltonian(space, fig5_params, fig5_params.omega_q).matrix
    elem = h[space.index(1, 0, 0), space.index(0, 1, 0)]
    assert elem == pytest.approx(fig5_params.g_a)
    elem_b = h[space.index(1, 0, 0), space.index(0, 0, 1)]
    assert elem_b == pytest.approx(fig5_params.g_b)


def test_qutrit_hamiltonian_structure(fig5_params):
    space = make_space(3, 1, 1)
    h = static_hamiltonian(space, fig5_params, fig5_params.omega_q).matrix
    i2 = space.index(2, 0, 0)
    assert h[i2, i2] == pytest.approx(fig5_params.omega_q + fig5_params.omega_12)
    elem = h[space.index(2, 0, 0), space.index(1, 1, 0)]
    assert elem == pytest.approx(math.sqrt(2) * fig5_params.g_a)


def test_hamiltonian_hermitian(fig5_params):
    space = make_space(3, 2, 2)
    h = static_hamiltonian(space, fig5_params, fig5_params.omega_q).matrix
    assert np.max(np.abs(h - h.conj().T)) < 1e-12 * np.max(np.abs(h))


def test_drive_term_examples(fig5_params):
    space = make_space(2, 1, 1)
    zero = drive_term(space, 0.0, fig5_params.omega_q, 0.0, 0.0)
    assert np.max(np.abs(zero.matrix)) == 0.0
    amp = TWO_PI * 20e6
    d = drive_term(space, amp, fig5_params.omega_q, 0.0, 0.0)
    for na in range(2):
        for nb in range(2):
            elem = d.matrix[space.index(1, na, nb), space.index(0, na, nb)]
            assert elem == pytest.approx(0.5 * amp)
    with pytest.raises(ValueError):
        drive_term(space, -1.0, fig5_params.omega_q, 0.0, 0.0)


def test_dispersive_energy_anchors(fig5_params):
    p = fig5_params
    assert dispersive_energy(p, 0, 0, 0) == 0.0
    expected = p.omega_q + p.g_a ** 2 / (p.omega_q - p.omega_a) \
        + p.g_b ** 2 / (p.omega_q - p.omega_b)
    assert dispersive_energy(p, 1, 0, 0) == pytest.approx(expected)
    with pytest.raises(ValueError):
        dispersive_energy(p, 2, 0, 0)


def test_per_photon_shift_is_7mhz(fig5_params):
    # 0.07^2 / 0.7 GHz of linear frequency
    p = fig5_params
    shift = p.g_a ** 2 / (p.omega_q - p.omega_a)
    assert shift == pytest.approx(TWO_PI * 7e6, rel=1e-12)


def test_dispersive_energy_vs_diagonalization(fig5_params):
    # The closed form is accurate to O(g^4 / delta^3).
    p = fig5_params
    space = make_space(2, 3, 3)
    h = static_hamiltonian(space, p, p.omega_q).matrix
    evals, evecs = np.linalg.eigh(h)
    order = np.argmax(np.abs(evecs) ** 2, axis=0)
    exact = dict(zip((tuple(space.label(i)) for i in order), evals))
    delta = p.omega_q - p.omega_a
    scale = p.g_a ** 4 / delta ** 3
    for (q, na, nb), e in exact.items():
        if na >= space.na_max or nb >= space.nb_max:
            continue  # truncation distorts the edge
        approx = dispersive_energy(p, q, na, nb)
        assert abs(e - approx) < 60 * scale * (1 + na + nb)


def test_drive_frequency_map(fig5_params):
    p = fig5_params
    dmap = dispersive_map(p)
    assert dmap.rule == "difference"
    assert drive_frequency(p, dmap, 0) == pytest.approx(p.omega_q)
    assert drive_frequency(p, dmap, 1) == pytest.approx(p.omega_q + TWO_PI * 14e6)
    assert drive_frequency(p, dmap, -2) == pytest.approx(p.omega_q - 2 * dmap.delta_omega)
    spacing = drive_frequency(p, dmap, 3) - drive_frequency(p, dmap, 2)
    assert spacing == pytest.approx(dmap.delta_omega, rel=1e-15)
    assert transition_frequency(p, 1, 0) == pytest.approx(drive_frequency(p, dmap, 1))


def test_drive_frequency_vs_dressed_difference(fig5_params):
    p = fig5_params
    space = make_space(2, 2, 2)
    h = static_hamiltonian(space, p, p.omega_q).matrix
    evals, evecs = np.linalg.eigh(h)
    order = np.argmax(np.abs(evecs) ** 2, axis=0)
    exact = dict(zip((tuple(space.label(i)) for i in order), evals))
    dmap = dispersive_map(p)
    exact_f = exact[(1, 1, 0)] - exact[(0, 1, 0)]
    assert abs(exact_f - drive_frequency(p, dmap, 1)) < 0.5 * abs(dmap.delta_omega)


def test_leading_order_error_scales_as_g4():
    # Halving g must shrink the residual against exact diagonalization ~16x.
    def residual(g_mhz):
        p = SystemParams.from_linear(omega_q_ghz=7.0, omega_12_ghz=6.7,
                                     omega_a_ghz=6.3, omega_b_ghz=7.7,
                                     g_a_mhz=g_mhz, g_b_mhz=g_mhz, rabi_mhz=20,
                                     t_q_ns=500, t_r_ns=10000)
        space = make_space(2, 3, 3)
        h = static_hamiltonian(space, p, p.omega_q).matrix
        evals, evecs = np.linalg.eigh(h)
        order = np.argmax(np.abs(evecs) ** 2, axis=0)
        exact = dict(zip((tuple(space.label(i)) for i in order), evals))
        pred = transition_frequency(p, 1, 0)
        return abs((exact[(1, 1, 0)] - exact[(0, 1, 0)]) - pred)

    ratio = residual(40.0) / residual(20.0)
    assert 8.0 < ratio < 32.0  # 16x within a factor of 2


def test_asymmetric_shift_raises_and_warns():
    p = SystemParams.from_linear(omega_q_ghz=7.0, omega_12_ghz=6.7, omega_a_ghz=6.3,
                                 omega_b_ghz=7.8, g_a_mhz=70, g_b_mhz=70,
                                 rabi_mhz=20, t_q_ns=500, t_r_ns=10000)
    with pytest.raises(AsymmetricShiftError) as err:
        dispersive_map(p)
    assert "shift_a" in str(err.value) and "shift_b" in str(err.value)
    with pytest.warns(UserWarning, match="mean shift"):
        dmap = dispersive_map(p, strict=False)
    assert dmap.delta_omega != 0.0


QUTRIT_EQUAL = dict(omega_q_ghz=7.0, omega_12_ghz=6.7, omega_a_ghz=6.4,
                    omega_b_ghz=7.3, g_a_mhz=70, g_b_mhz=70, rabi_mhz=20,
                    t_q_ns=500, t_r_ns=10000)


def test_qutrit_drive_frequency_at_origin():
    p = SystemParams.from_linear(**QUTRIT_EQUAL)
    expected = p.omega_q + p.g_a ** 2 / (p.omega_q - p.omega_a) \
        + p.g_b ** 2 / (p.omega_q - p.omega_b)
    assert qutrit_drive_frequency(p, 0, 0) == pytest.approx(expected)


def test_qutrit_equal_shift_configuration():
    # Solve the equal-shift condition for omega_b numerically, then verify
    # the linear sum-rule map with negative slope.
    base = dict(QUTRIT_EQUAL)

    def mismatch(omega_b_ghz):
        p = SystemParams.from_linear(**{**base, "omega_b_ghz": omega_b_ghz})
        da = qutrit_drive_frequency(p, 1, 0) - qutrit_drive_frequency(p, 0, 0)
        db = qutrit_drive_frequency(p, 0, 1) - qutrit_drive_frequency(p, 0, 0)
        return da - db

    omega_b = brentq(mismatch, 7.05, 7.6, xtol=1e-12)
    assert omega_b == pytest.approx(7.3, abs=1e-9)
    p = SystemParams.from_linear(**{**base, "omega_b_ghz": omega_b})
    dmap = dispersive_map(p, qubit_levels=3)
    assert dmap.rule == "sum"
    assert dmap.delta_omega < 0
    # shift difference between (1,0) and (0,1) vanishes
    assert qutrit_drive_frequency(p, 1, 0) - qutrit_drive_frequency(p, 0, 1) == \
        pytest.approx(0.0, abs=1e-3)
    # and omega_n = omega_q + offset + n * slope reproduces the pair values
    for na, nb in ((1, 0), (0, 1), (1, 1), (2, 0)):
        n = na + nb
        assert drive_frequency(p, dmap, n) == \
            pytest.approx(qutrit_drive_frequency(p, na, nb), rel=1e-12)


def test_qutrit_ordering_warning():
    bad = dict(QUTRIT_EQUAL, omega_a_ghz=6.8)  # omega_a > omega_12
    p = SystemParams.from_linear(**bad)
    with pytest.warns(UserWarning, match="ordering"):
        qutrit_drive_frequency(p, 0, 0)


def test_dispersive_energies_converge_as_g_to_zero():
    last = None
    for g in (40.0, 20.0, 10.0):
        p = SystemParams.from_linear(omega_q_ghz=7.0, omega_12_ghz=6.7,
                                     omega_a_ghz=6.3, omega_b_ghz=7.7,
                                     g_a_mhz=g, g_b_mhz=g, rabi_mhz=20,
                                     t_q_ns=500, t_r_ns=10000)
        err = abs(dispersive_energy(p, 1, 1, 0) - (p.omega_q + p.omega_a))
        if last is not None:
            assert err < 0.3 * last  # O(g^2) shrinks by ~4x per halving
        last = err
