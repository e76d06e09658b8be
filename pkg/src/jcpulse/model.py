"""Physical model: Hamiltonian, dispersive spectrum, Stark-shifted drive map.

All frequencies inside this package are angular (rad/s) and all times are
seconds.  Configuration files and CSV output use linear frequencies (GHz/MHz)
and nanoseconds, converted exactly once at the boundary.

The atom couples to two far-detuned modes.  In the dispersive regime each
occupied Fock pair (n_a, n_b) Stark-shifts the atom's 0<->1 transition, so a
weak drive addresses one "class" of Fock pairs at a time:

* two-level atom, symmetric shifts:  class n = n_a - n_b,
  drive frequency omega_q + n * delta_omega;
* three-level atom tuned for equal shifts:  class n = n_a + n_b,
  drive frequency omega_q + delta_omega_0 + n * delta_omega (delta_omega < 0).

Closed-form dispersive expressions here are leading order only.  Anything
used for pulse calibration is taken from exact diagonalization instead (see
:mod:`jcpulse.schedule`).
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np

from .fock import HilbertSpace, Operator, atom_lowering, mode_lowering

TWO_PI = 2.0 * np.pi

# g / detuning above this triggers a dispersive-regime sanity warning.
DISPERSIVE_RATIO_WARN = 0.2

# Relative mismatch of the two Stark shifts tolerated before the simplified
# drive-frequency map is considered invalid.
SHIFT_SYMMETRY_RTOL = 1e-6


class AsymmetricShiftError(ValueError):
    """The two per-photon Stark shifts differ beyond tolerance."""

    def __init__(self, shift_a: float, shift_b: float):
        self.shift_a = shift_a
        self.shift_b = shift_b
        super().__init__(
            "Stark shifts are not symmetric: "
            f"shift_a/2pi = {shift_a / TWO_PI:.6e} Hz, shift_b/2pi = {shift_b / TWO_PI:.6e} Hz"
        )


@dataclass(frozen=True)
class SystemParams:
    """Device parameters.  Angular frequencies (rad/s) and times (s).

    omega_q    idle atom 0<->1 splitting
    omega_12   atom 1<->2 splitting (ignored for 2-level use)
    omega_a/b  resonator frequencies
    g_a/b      atom-resonator couplings
    rabi_omega default resonant Rabi rate of the drive
    t_q, t_r   atom / resonator relaxation times (may be inf)
    """

    omega_q: float
    omega_12: float
    omega_a: float
    omega_b: float
    g_a: float
    g_b: float
    rabi_omega: float
    t_q: float
    t_r: float

    def __post_init__(self) -> None:
        for name in ("omega_q", "omega_12", "omega_a", "omega_b", "g_a", "g_b",
                     "rabi_omega", "t_q", "t_r"):
            v = getattr(self, name)
            if not v > 0:
                raise ValueError(f"{name} must be strictly positive, got {v!r}")
        for g, delta, mode in ((self.g_a, self.omega_q - self.omega_a, "a"),
                               (self.g_b, self.omega_q - self.omega_b, "b")):
            if g > DISPERSIVE_RATIO_WARN * abs(delta):
                warnings.warn(
                    f"g_{mode}/|omega_q - omega_{mode}| = {g / abs(delta):.3f} exceeds "
                    f"{DISPERSIVE_RATIO_WARN}; dispersive approximations will be poor",
                    stacklevel=2,
                )

    @classmethod
    def from_linear(cls, *, omega_q_ghz: float, omega_12_ghz: float, omega_a_ghz: float,
                    omega_b_ghz: float, g_a_mhz: float, g_b_mhz: float, rabi_mhz: float,
                    t_q_ns: float, t_r_ns: float) -> "SystemParams":
        """Build from linear frequencies (GHz / MHz) and nanoseconds."""
        return cls(
            omega_q=TWO_PI * omega_q_ghz * 1e9,
            omega_12=TWO_PI * omega_12_ghz * 1e9,
            omega_a=TWO_PI * omega_a_ghz * 1e9,
            omega_b=TWO_PI * omega_b_ghz * 1e9,
            g_a=TWO_PI * g_a_mhz * 1e6,
            g_b=TWO_PI * g_b_mhz * 1e6,
            rabi_omega=TWO_PI * rabi_mhz * 1e6,
            t_q=t_q_ns * 1e-9,
            t_r=t_r_ns * 1e-9,
        )


PARAM_FILE_KEYS = ("omega_q_ghz", "omega_12_ghz", "omega_a_ghz", "omega_b_ghz",
                   "g_a_mhz", "g_b_mhz", "rabi_mhz", "t_q_ns", "t_r_ns")


def parse_params(text: str) -> SystemParams:
    """Parse the key-value parameter format.

    One ``key = value`` (or ``key: value``) pair per line, ``#`` comments,
    blank lines ignored.  All keys of :data:`PARAM_FILE_KEYS` are required.
    """
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, _, val = line.partition(sep)
                break
        else:
            raise ValueError(f"parameter line {lineno}: expected 'key = value', got {raw!r}")
        key = key.strip()
        if key not in PARAM_FILE_KEYS:
            raise ValueError(f"parameter line {lineno}: unknown key {key!r}")
        if key in values:
            raise ValueError(f"parameter line {lineno}: duplicate key {key!r}")
        values[key] = float(val.strip())
    missing = [k for k in PARAM_FILE_KEYS if k not in values]
    if missing:
        raise ValueError(f"parameter file missing keys: {', '.join(missing)}")
    return SystemParams.from_linear(**values)


def load_params(path) -> SystemParams:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_params(fh.read())


def format_params(params: SystemParams) -> str:
    """Serialize back to the parameter-file format (linear units)."""
    lines = [
        f"omega_q_ghz = {params.omega_q / TWO_PI / 1e9:.17g}",
        f"omega_12_ghz = {params.omega_12 / TWO_PI / 1e9:.17g}",
        f"omega_a_ghz = {params.omega_a / TWO_PI / 1e9:.17g}",
        f"omega_b_ghz = {params.omega_b / TWO_PI / 1e9:.17g}",
        f"g_a_mhz = {params.g_a / TWO_PI / 1e6:.17g}",
        f"g_b_mhz = {params.g_b / TWO_PI / 1e6:.17g}",
        f"rabi_mhz = {params.rabi_omega / TWO_PI / 1e6:.17g}",
        f"t_q_ns = {params.t_q * 1e9:.17g}",
        f"t_r_ns = {params.t_r * 1e9:.17g}",
    ]
    return "\n".join(lines) + "\n"


def params_digest(params: SystemParams) -> str:
    """Short stable hash identifying a parameter set (used in file headers)."""
    payload = ",".join(
        f"{getattr(params, k):.17g}"
        for k in ("omega_q", "omega_12", "omega_a", "omega_b", "g_a", "g_b",
                  "rabi_omega", "t_q", "t_r")
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class DispersiveMap:
    """Linearized per-class drive-frequency map omega_n = omega_q + offset + n*slope."""

    delta_omega: float
    delta_omega_0: float
    rule: str  # 'difference' (n = n_a - n_b) or 'sum' (n = n_a + n_b)

    def __post_init__(self) -> None:
        if self.rule not in ("difference", "sum"):
            raise ValueError(f"addressing rule must be 'difference' or 'sum', got {self.rule!r}")

    def class_of(self, na: int, nb: int) -> int:
        return na - nb if self.rule == "difference" else na + nb


def atom_diag(space: HilbertSpace, omega_q_now: float, omega_12: float) -> np.ndarray:
    """Diagonal of the atom energy term: (0, w_q) or (0, w_q, w_q + w_12)."""
    labels = space.labels()
    q = labels[:, 0]
    diag = np.where(q >= 1, omega_q_now, 0.0).astype(float)
    diag = diag + np.where(q == 2, omega_12, 0.0)
    return diag


def static_hamiltonian(space: HilbertSpace, params: SystemParams, omega_q_now: float) -> Operator:
    """Drive-free Hamiltonian (units of hbar) at atom frequency ``omega_q_now``.

    H = atom energies + w_a a'a + w_b b'b + g_a (s+ a + s- a') + g_b (s+ b + s- b')
    with the atom lowering operator carrying the sqrt(2) 1<->2 element for a
    three-level atom.
    """
    labels = space.labels()
    diag = atom_diag(space, omega_q_now, params.omega_12)
    diag = diag + params.omega_a * labels[:, 1] + params.omega_b * labels[:, 2]
    h = np.diag(diag.astype(complex))

    s_minus = atom_lowering(space).matrix
    s_plus = s_minus.conj().T
    for g, mode in ((params.g_a, "a"), (params.g_b, "b")):
        low = mode_lowering(space, mode).matrix
        h += g * (s_plus @ low + low.conj().T @ s_minus)
    return Operator(space, h, hermitian=True)


def drive_coupling(space: HilbertSpace) -> np.ndarray:
    """Raising part |1><0| (x identity on the modes) addressed by the drive."""
    m = np.zeros((space.dim, space.dim), dtype=complex)
    for i in range(space.dim):
        q, na, nb = space.label(i)
        if q == 0:
            m[space.index(1, na, nb), i] = 1.0
    return m


def drive_term(space: HilbertSpace, amplitude: float, drive_freq: float,
               phase: float, t: float) -> Operator:
    """Instantaneous drive Hamiltonian (hbar/2)[W0 e^{i(w_d t + d)} s+ + h.c.]."""
    if amplitude < 0:
        raise ValueError(f"drive amplitude must be >= 0, got {amplitude!r}")
    s_plus = drive_coupling(space)
    phase_factor = np.exp(1j * (drive_freq * t + phase))
    m = 0.5 * amplitude * (phase_factor * s_plus + np.conj(phase_factor) * s_plus.conj().T)
    return Operator(space, m, hermitian=True)


def dispersive_energy(params: SystemParams, q: int, na: int, nb: int) -> float:
    """Second-order dispersive energy (units of hbar) of |q, n_a, n_b>, two-level atom."""
    if q not in (0, 1):
        raise ValueError(f"dispersive energies implemented for q in (0, 1), got {q}")
    shift_a = params.g_a ** 2 / (params.omega_q - params.omega_a)
    shift_b = params.g_b ** 2 / (params.omega_q - params.omega_b)
    e = params.omega_a * na + params.omega_b * nb
    if q == 0:
        return e - shift_a * na - shift_b * nb
    return e + params.omega_q + shift_a * (na + 1) + shift_b * (nb + 1)


def transition_frequency(params: SystemParams, na: int, nb: int) -> float:
    """Leading-order 0<->1 drive frequency for the pair (n_a, n_b), two-level atom."""
    return dispersive_energy(params, 1, na, nb) - dispersive_energy(params, 0, na, nb)


def dispersive_map(params: SystemParams, qubit_levels: int = 2,
                   strict: bool = True) -> DispersiveMap:
    """Fit the linear class map from the leading-order shifts.

    For 2 levels the per-photon shifts of the two modes must cancel
    (difference rule); for 3 levels they must be equal (sum rule).  On
    violation beyond 1e-6 relative: raise when ``strict`` else warn and use
    the mean slope.
    """
    if qubit_levels == 2:
        shift_a = params.g_a ** 2 / (params.omega_q - params.omega_a)
        shift_b = params.g_b ** 2 / (params.omega_b - params.omega_q)
        rule = "difference"
        offset = 0.0
    elif qubit_levels == 3:
        shift_a = 0.5 * (qutrit_drive_frequency(params, 1, 0) - qutrit_drive_frequency(params, 0, 0))
        shift_b = 0.5 * (qutrit_drive_frequency(params, 0, 1) - qutrit_drive_frequency(params, 0, 0))
        rule = "sum"
        offset = qutrit_drive_frequency(params, 0, 0) - params.omega_q
    else:
        raise ValueError(f"qubit_levels must be 2 or 3, got {qubit_levels}")

    scale = max(abs(shift_a), abs(shift_b))
    if abs(shift_a - shift_b) > SHIFT_SYMMETRY_RTOL * scale:
        err = AsymmetricShiftError(2 * shift_a, 2 * shift_b)
        if strict:
            raise err
        warnings.warn(str(err) + "; proceeding with the mean shift", stacklevel=2)
    slope = shift_a + shift_b
    if rule == "sum" and slope >= 0:
        warnings.warn("three-level class map has delta_omega >= 0; "
                      "check the frequency ordering omega_a < omega_12 < omega_01 < omega_b",
                      stacklevel=2)
    return DispersiveMap(delta_omega=slope, delta_omega_0=offset, rule=rule)


def drive_frequency(params: SystemParams, dmap: DispersiveMap, n: int) -> float:
    """Stark-class drive frequency omega_n."""
    return params.omega_q + dmap.delta_omega_0 + n * dmap.delta_omega


def qutrit_drive_frequency(params: SystemParams, na: int, nb: int) -> float:
    """0<->1 drive frequency for a three-level atom at the pair (n_a, n_b).

    Leading-order result including the 1<->2 level's repulsion (matrix
    element squared = 2).  Valid frequency ordering is
    omega_a < omega_12 < omega_01 < omega_b; a warning is issued otherwise.
    """
    lam2 = 2.0
    w01, w12 = params.omega_q, params.omega_12
    if not (params.omega_a < w12 < w01 < params.omega_b):
        warnings.warn("frequency ordering omega_a < omega_12 < omega_01 < omega_b violated",
                      stacklevel=2)
    return (w01
            + params.g_a ** 2 * (2 * na + 1) / (w01 - params.omega_a)
            + params.g_a ** 2 * lam2 * na / (params.omega_a - w12)
            + params.g_b ** 2 * (2 * nb + 1) / (w01 - params.omega_b)
            + params.g_b ** 2 * lam2 * nb / (params.omega_b - w12))
