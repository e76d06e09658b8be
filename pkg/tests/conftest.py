import math

import pytest

from jcpulse import model


@pytest.fixture(scope="session")
def fig5_params():
    """Strong-coupling operating point used by the time-domain studies."""
    return model.SystemParams.from_linear(
        omega_q_ghz=7.0, omega_12_ghz=6.7, omega_a_ghz=6.3, omega_b_ghz=7.7,
        g_a_mhz=70.0, g_b_mhz=70.0, rabi_mhz=13.73 / math.sqrt(15.0),
        t_q_ns=500.0, t_r_ns=10000.0)


@pytest.fixture(scope="session")
def strong_params():
    """Operating point of the decoherence comparisons."""
    return model.SystemParams.from_linear(
        omega_q_ghz=7.0, omega_12_ghz=6.7, omega_a_ghz=6.3, omega_b_ghz=7.7,
        g_a_mhz=100.0, g_b_mhz=100.0, rabi_mhz=20.0, t_q_ns=500.0, t_r_ns=10000.0)


@pytest.fixture(scope="session")
def toy_params():
    """Low-frequency parameters that keep integrator tests cheap."""
    return model.SystemParams.from_linear(
        omega_q_ghz=0.050, omega_12_ghz=0.046, omega_a_ghz=0.030, omega_b_ghz=0.070,
        g_a_mhz=1.0, g_b_mhz=1.0, rabi_mhz=2.0, t_q_ns=500.0, t_r_ns=10000.0)
