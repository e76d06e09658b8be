"""First-order perturbative decoherence engine for the NOON protocols.

Every step of either preparation protocol is a rotation between two basis
states, each subject to amplitude damping of the atom (1/T_q) and of the
occupied mode (n/T_r).  The reduced two-state master equation

    d rho11/dt = +i (W/2)(rho12 - rho21) - l1 rho11 + l12 rho22
    d rho12/dt = +i (W/2)(rho11 - rho22) - (l1 + l2)/2 rho12
    d rho21/dt = +i (W/2)(rho22 - rho11) - (l1 + l2)/2 rho21
    d rho22/dt = +i (W/2)(rho21 - rho12) - l2 rho22

is solved to first order in the rates (valid for l << W), giving the linear
map implemented by :func:`two_state_step`.  Chaining that map along the
ladder-climb protocol (method 1) or the two-qutrit protocol (method 2)
yields recursions for the four surviving density-matrix elements, evaluated
by :func:`method1_rho` / :func:`method2_rho`, and Taylor regrouping of the
products yields the closed-form fidelities of :func:`fidelity_closed`.

Coherence phases are dropped throughout (the protocols' residual phases are
deterministic); all four tracked elements are real and positive.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .dynamics import DecoherenceParams

RATE_RATIO_WARN = 0.1

OP_KINDS = ("R01", "R12", "A1", "A2")


@dataclass(frozen=True)
class StepRates:
    """Decay rates (1/s) of a two-state step: state 1, state 2, feed 2 -> 1."""

    lambda1: float
    lambda2: float
    lambda12: float

    def __post_init__(self) -> None:
        if self.lambda1 < 0 or self.lambda2 < 0 or self.lambda12 < 0:
            raise ValueError("rates must be nonnegative")


@dataclass(frozen=True)
class TwoStateRho:
    """2x2 density-matrix block (populations real, coherences complex)."""

    rho11: complex
    rho22: complex
    rho12: complex
    rho21: complex

    def validate(self, hermitian: bool = True) -> "TwoStateRho":
        if (self.rho11.real + self.rho22.real) > 1 + 1e-9:
            raise ValueError("populations exceed 1")
        if hermitian and abs(self.rho21 - self.rho12.conjugate()) > 1e-9:
            raise ValueError("coherences are not conjugate")
        return self


@dataclass(frozen=True)
class NoonRho:
    """Final two-mode block: populations of |N,0> / |0,N> and their coherence.

    Phase-stripped convention: all elements are magnitudes, rho_ab == rho_ba.
    """

    rho_aa: float
    rho_bb: float
    rho_ab: float
    rho_ba: float

    def __post_init__(self) -> None:
        for name in ("rho_aa", "rho_bb", "rho_ab", "rho_ba"):
            v = getattr(self, name)
            if not (-1e-12 <= v <= 1.0 + 1e-9):
                raise ValueError(f"{name} = {v!r} outside [0, 1]")


def rates_for(op_kind: str, n: int, dec: DecoherenceParams) -> StepRates:
    """Decay-rate table of the elementary operations.

    n is the photon number of the occupied mode during the step:

    ========  ==========  ==========  ================  ================  ========
    op        state 1     state 2     lambda1           lambda2           lambda12
    ========  ==========  ==========  ================  ================  ========
    R01       |0,n>       |1,n>       n/T_r             1/T_q + n/T_r     1/T_q
    R12       |1,n>       |2,n>       1/T_q + n/T_r     2/T_q + n/T_r     2/T_q
    A1        |0,n+1>     |1,n>       (n+1)/T_r         1/T_q + n/T_r     0
    A2        |1,n+1>     |2,n>       1/T_q + (n+1)/T_r 2/T_q + n/T_r     0
    ========  ==========  ==========  ================  ================  ========
    """
    if n < 0:
        raise ValueError("photon number must be >= 0")
    lq, lr = dec.rate_q, dec.rate_r
    if op_kind == "R01":
        return StepRates(n * lr, lq + n * lr, lq)
    if op_kind == "R12":
        return StepRates(lq + n * lr, 2 * lq + n * lr, 2 * lq)
    if op_kind == "A1":
        return StepRates((n + 1) * lr, lq + n * lr, 0.0)
    if op_kind == "A2":
        return StepRates(lq + (n + 1) * lr, 2 * lq + n * lr, 0.0)
    raise ValueError(f"unknown operation kind {op_kind!r}; expected one of {OP_KINDS}")


def two_state_step(rho: TwoStateRho, omega: float, t: float,
                   rates: StepRates) -> TwoStateRho:
    """First-order dissipative rotation by angle omega * t.

    Valid for rates much smaller than omega; a ratio above 0.1 triggers a
    warning.  At zero rates this is exactly the unitary rotation.
    """
    l1, l2, l12 = rates.lambda1, rates.lambda2, rates.lambda12
    if omega <= 0:
        raise ValueError("rotation rate must be positive")
    worst = max(l1, l2, l12)
    if worst > RATE_RATIO_WARN * omega:
        warnings.warn(f"rates/omega = {worst / omega:.3f} exceeds {RATE_RATIO_WARN}; "
                      "the first-order solution degrades", stacklevel=2)
    slow = math.exp(-0.5 * (l1 + l2 - l12) * t)
    oscil = math.exp(-0.25 * (2 * l1 + 2 * l2 + l12) * t)
    coh = math.exp(-0.5 * (l1 + l2) * t)
    cos, sin = math.cos(omega * t), math.sin(omega * t)
    a_p = 0.5 * slow + 0.5 * oscil * cos
    a_m = 0.5 * slow - 0.5 * oscil * cos
    b = 0.5 * oscil * sin
    c_p = 0.5 * coh + 0.5 * oscil * cos
    c_m = 0.5 * coh - 0.5 * oscil * cos
    return TwoStateRho(
        rho11=a_p * rho.rho11 + a_m * rho.rho22 + 1j * b * (rho.rho12 - rho.rho21),
        rho22=a_p * rho.rho22 + a_m * rho.rho11 + 1j * b * (rho.rho21 - rho.rho12),
        rho12=c_p * rho.rho12 + c_m * rho.rho21 + 1j * b * (rho.rho11 - rho.rho22),
        rho21=c_p * rho.rho21 + c_m * rho.rho12 + 1j * b * (rho.rho22 - rho.rho11),
    )


# ---------------------------------------------------------------------------
# Method 1: ladder climb with selective rotations
# ---------------------------------------------------------------------------

def method1_rho(n: int, dec: DecoherenceParams, omega: float, g: float) -> NoonRho:
    """Density-matrix elements after the 4N-step ladder-climb protocol.

    The first ladder (mode a) is evaluated by the step recursion; the second
    ladder mirrors it, while the N photons already parked in mode a keep
    decaying, contributing e^{-N T / (2 T_r)} per coherence and
    e^{-N T / T_r} to the |N><N| population, with T the ladder duration
    N dt + sum dt_k.
    """
    if n < 1:
        raise ValueError("NOON index must be >= 1")
    lq, lr = dec.rate_q, dec.rate_r
    dt = math.pi / omega
    dts = [0.5 * math.pi / (g * math.sqrt(k)) for k in range(1, n + 1)]

    pop, coh = 0.5, 0.5  # after the first half rotation, corrections negligible
    pop *= math.exp(-0.5 * dts[0] * (lq + lr))
    coh *= math.exp(-0.25 * dts[0] * (lq + lr))
    pulse_pop = 0.5 + 0.5 * math.exp(-0.75 * dt * lq)
    for m in range(1, n):
        coh *= math.exp(-0.5 * dt * (m * lr + 0.5 * lq)) \
            * math.exp(-0.25 * dts[m] * (lq + (2 * m + 1) * lr))
        pop *= pulse_pop * math.exp(-m * dt * lr) \
            * math.exp(-0.5 * dts[m] * (lq + (2 * m + 1) * lr))

    ladder_sum = sum(dts[k - 1] * (lq + (2 * k - 1) * lr) for k in range(1, n + 1))
    t_ladder = n * dt + sum(dts)
    ground = 0.5  # amplitude left at |0,0,0> after the first ladder
    rho_bb = ground * pulse_pop ** n \
        * math.exp(-0.5 * n * (n - 1) * dt * lr) * math.exp(-0.5 * ladder_sum)
    coh_final = coh * math.exp(-0.25 * n * (n - 1) * dt * lr - 0.25 * n * dt * lq
                               - 0.5 * n * t_ladder * lr) * math.exp(-0.25 * ladder_sum)
    rho_aa = pop * math.exp(-n * t_ladder * lr)
    return NoonRho(rho_aa=rho_aa, rho_bb=rho_bb, rho_ab=coh_final, rho_ba=coh_final)


# ---------------------------------------------------------------------------
# Method 2: two qutrits climbing in parallel
# ---------------------------------------------------------------------------

def bell_prep_weight(dec: DecoherenceParams, omega: float, g: float) -> float:
    """Surviving weight p of the two-atom Bell pair after pi-pulse + half swap."""
    dt = math.pi / omega
    dt0 = 0.25 * math.pi / g
    return 0.5 * (1.0 + math.exp(-0.75 * dt * dec.rate_q)) * math.exp(-dt0 * dec.rate_q)


def method2_rho(n: int, dec: DecoherenceParams, omega: float, g: float) -> NoonRho:
    """Density-matrix elements after the two-qutrit parallel-climb protocol.

    Swap durations carry the sqrt(2) second-excited matrix element:
    dt_m = pi / (2 sqrt(2 m) g) for the intermediate swaps and
    dt_N = pi / (2 sqrt(N) g) for the final one.
    """
    if n < 1:
        raise ValueError("NOON index must be >= 1")
    lq, lr = dec.rate_q, dec.rate_r
    dt = math.pi / omega
    p = bell_prep_weight(dec, omega, g)
    pop = coh = 0.5 * p
    pulse_pop = 0.5 * math.exp(-0.5 * dt * lq) + 0.5 * math.exp(-2.0 * dt * lq)
    pulse_coh = math.exp(-1.5 * dt * lq)
    for m in range(0, n - 1):
        dt_m = 0.5 * math.pi / (math.sqrt(2.0 * (m + 1)) * g)
        shared = math.exp(-m * dt * lr) \
            * math.exp(-0.5 * dt_m * (3.0 * lq + (2 * m + 1) * lr))
        pop *= pulse_pop * shared
        coh *= pulse_coh * shared
    final = math.exp(-0.5 * (0.5 * math.pi / (math.sqrt(n) * g))
                     * (lq + (2 * n - 1) * lr))
    pop *= final
    coh *= final
    return NoonRho(rho_aa=pop, rho_bb=pop, rho_ab=coh, rho_ba=coh)


# ---------------------------------------------------------------------------
# Closed-form fidelities
# ---------------------------------------------------------------------------

def fidelity_from_rho(rho: NoonRho) -> float:
    """NOON fidelity (rho_aa + rho_ab + rho_ba + rho_bb) / 2."""
    return 0.5 * (rho.rho_aa + rho.rho_ab + rho.rho_ba + rho.rho_bb)


def fidelity_closed(method: str, n: int, dec: DecoherenceParams, omega: float,
                    g: float) -> float:
    """Closed-form fidelity approximation for method 'M1' or 'M2'."""
    if n < 1:
        raise ValueError("NOON index must be >= 1")
    lq, lr = dec.rate_q, dec.rate_r
    dt = math.pi / omega
    if method == "M1":
        dts = [0.5 * math.pi / (g * math.sqrt(k)) for k in range(1, n + 1)]
        expo = (7.0 / 16.0) * (n - 0.5) * dt * lq + n * (n - 0.5) * dt * lr
        expo += 0.5 * sum(dts[k - 1] * (lq + (2 * k + n - 1) * lr)
                          for k in range(1, n + 1))
        return math.exp(-expo)
    if method == "M2":
        dt0 = 0.25 * math.pi / g
        dt_last = 0.5 * math.pi / (math.sqrt(n) * g)
        expo = (11.0 / 8.0) * (n - 8.0 / 11.0) * dt * lq \
            + 0.5 * (n - 1) * (n - 2) * dt * lr
        expo += 0.5 * sum((0.5 * math.pi / (math.sqrt(2.0 * k) * g))
                          * (3.0 * lq + (2 * k - 1) * lr) for k in range(1, n))
        expo += 0.5 * dt0 * lq + 0.5 * dt_last * (lq + (2 * n - 1) * lr)
        return math.exp(-expo)
    raise ValueError(f"method must be 'M1' or 'M2', got {method!r}")


# ---------------------------------------------------------------------------
# Sweep tables (CSV-ready rows)
# ---------------------------------------------------------------------------

def sweep_vs_n(n_values, dec: DecoherenceParams, omega: float, g: float) -> list[dict]:
    """Closed-form and recursion fidelities of both methods versus N."""
    rows = []
    for n in n_values:
        rows.append({
            "n": n,
            "f_m1_closed": fidelity_closed("M1", n, dec, omega, g),
            "f_m1_recursion": fidelity_from_rho(method1_rho(n, dec, omega, g)),
            "f_m2_closed": fidelity_closed("M2", n, dec, omega, g),
            "f_m2_recursion": fidelity_from_rho(method2_rho(n, dec, omega, g)),
        })
    return rows


def sweep_vs_tq(tq_values, n: int, t_r: float, omega: float, g: float) -> list[dict]:
    """Both methods' fidelities versus the atom relaxation time."""
    rows = []
    for tq in tq_values:
        dec = DecoherenceParams(tq, t_r)
        rows.append({
            "t_q_ns": tq * 1e9,
            "f_m1_closed": fidelity_closed("M1", n, dec, omega, g),
            "f_m2_closed": fidelity_closed("M2", n, dec, omega, g),
            "f_m1_recursion": fidelity_from_rho(method1_rho(n, dec, omega, g)),
            "f_m2_recursion": fidelity_from_rho(method2_rho(n, dec, omega, g)),
        })
    return rows
