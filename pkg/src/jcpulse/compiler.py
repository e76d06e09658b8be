"""Pulse-program compiler: synthesis of two-mode entangled states.

A :class:`PulseProgram` is an ordered list of idealized operations on the
atom + two-resonator system:

* ``RABI01``  -- number-state-selective rotation of the atom's 0<->1
  transition, acting on every Fock pair in one Stark class n (class rule
  ``difference``: n = n_a - n_b, or ``sum``: n = n_a + n_b);
* ``SWAPA`` / ``SWAPB`` -- resonant atom-mode exchange; every ladder pair
  (|0,n,.>, |1,n-1,.>) rotates simultaneously by theta_n = sqrt(n) g t;
* ``PHASE`` -- a short atom-frequency excursion imprinting a relative phase
  between ground and excited atom amplitudes (q >= 1 picks up e^{i phi}).

Synthesis works by solving the inverse evolution: starting from the target,
swap/rotation pairs clear the Fock diagram row by row down to |0,0,0>, and
the forward program is the reversed sequence of adjoints.  Each inverse step
zeroes exactly one amplitude; the clearing order guarantees that amplitudes
once zeroed are never repopulated, even though swaps rotate all ladder rungs
at once, so the construction is exact to round-off.  The adjoint of a swap is
realized physically as the same swap sandwiched between two pi phase shifts.

The NOON state admits a closed-form 4N-step program (one rung per row), which
:func:`noon_program` emits directly with the textbook angles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .fock import HilbertSpace, StateVector, basis_state, fidelity, make_space
from .model import SystemParams, params_digest

KIND_RABI = "RABI01"
KIND_SWAP_A = "SWAPA"
KIND_SWAP_B = "SWAPB"
KIND_PHASE = "PHASE"
STEP_KINDS = (KIND_RABI, KIND_SWAP_A, KIND_SWAP_B, KIND_PHASE)

SWAP_KINDS = (KIND_SWAP_A, KIND_SWAP_B)

# An amplitude below this is considered already cleared; the corresponding
# step is skipped entirely.
CLEARED_TOL = 1e-12

# Forward-execution fidelity every synthesized program must reach.
FORWARD_FIDELITY_TOL = 1e-8

PROGRAM_FORMAT_VERSION = 1


class CompileError(RuntimeError):
    """Synthesis could not produce a program meeting the forward-fidelity gate."""


@dataclass(frozen=True)
class PulseStep:
    """One idealized operation.

    theta       rotation angle (Rabi: full 0<->1 angle; swaps: angle of the
                pivot rung, pi/2 = full transfer; PHASE: the phase itself)
    n_class     Rabi: addressed Stark class; swaps: pivot ladder rung
    drive_phase microwave phase delta of the drive (Rabi only)
    alpha/beta  rotation phases; spectators of a Rabi pick up e^{+-i alpha}
    duration    seconds (0 allowed only for PHASE)
    """

    kind: str
    theta: float
    n_class: int = 0
    drive_phase: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    duration: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in STEP_KINDS:
            raise ValueError(f"unknown step kind {self.kind!r}")
        if self.kind == KIND_PHASE:
            if self.duration < 0:
                raise ValueError("phase-shift duration must be >= 0")
        else:
            if not self.duration > 0:
                raise ValueError(f"{self.kind} duration must be > 0, got {self.duration!r}")
            if not self.theta > 0:
                raise ValueError(f"{self.kind} theta must be > 0, got {self.theta!r}")
        if self.kind in SWAP_KINDS:
            if self.theta > np.pi + 1e-12:
                raise ValueError(f"swap theta must lie in (0, pi], got {self.theta!r}")
            if self.n_class < 1:
                raise ValueError("swap pivot rung must be >= 1")


@dataclass(frozen=True)
class PulseProgram:
    """Compiled program together with its target amplitude table."""

    steps: tuple[PulseStep, ...]
    target: tuple[tuple[int, int, complex], ...]  # (n_a, n_b, amplitude)
    atom_levels: int = 2
    rule: str = "difference"

    def target_table(self) -> dict[tuple[int, int], complex]:
        return {(na, nb): c for na, nb, c in self.target}

    def support(self) -> tuple[int, int]:
        """(N_a, N_b) bounding the nonzero target amplitudes."""
        if not self.target:
            return 0, 0
        return max(t[0] for t in self.target), max(t[1] for t in self.target)

    def duration(self) -> float:
        """Total ideal duration (phase shifts are counted as stored, 0 when ideal)."""
        return float(sum(s.duration for s in self.steps))

    def nontrivial_steps(self) -> int:
        """Rabi + swap count; phase bookkeeping steps excluded."""
        return sum(1 for s in self.steps if s.kind != KIND_PHASE)

    def swap_pairs(self) -> int:
        """Number of rotation+swap pairs (equals the number of swap steps)."""
        return sum(1 for s in self.steps if s.kind in SWAP_KINDS)


def normalize_target(target) -> dict[tuple[int, int], complex]:
    """Accept a {(n_a, n_b): amplitude} dict or a 2-D array; validate normalization."""
    if isinstance(target, dict):
        table = {(int(na), int(nb)): complex(c) for (na, nb), c in target.items() if c != 0}
    else:
        arr = np.asarray(target, dtype=complex)
        if arr.ndim != 2:
            raise ValueError("array target must be 2-D (n_a rows, n_b columns)")
        table = {(i, j): complex(arr[i, j]) for i in range(arr.shape[0])
                 for j in range(arr.shape[1]) if arr[i, j] != 0}
    if any(na < 0 or nb < 0 for na, nb in table):
        raise ValueError("target Fock indices must be >= 0")
    total = sum(abs(c) ** 2 for c in table.values())
    if abs(total - 1.0) > 1e-10:
        raise ValueError(f"target norm^2 = {total!r}, expected 1 within 1e-10")
    return table


def noon_target(n: int) -> dict[tuple[int, int], complex]:
    """(|N,0> + |0,N>)/sqrt(2)."""
    if n < 1:
        raise ValueError("NOON index must be >= 1")
    r = 1.0 / math.sqrt(2.0)
    return {(n, 0): r, (0, n): r}


def max_entangled_target(n: int) -> dict[tuple[int, int], complex]:
    """sum_k |k, N-k> / sqrt(N+1), the maximally entangled two-qudit state."""
    if n < 0:
        raise ValueError("entangled-state index must be >= 0")
    r = 1.0 / math.sqrt(n + 1.0)
    return {(k, n - k): r for k in range(n + 1)}


def target_state(space: HilbertSpace, table: dict[tuple[int, int], complex]) -> StateVector:
    """Embed an amplitude table at atom level 0."""
    v = np.zeros(space.dim, dtype=complex)
    for (na, nb), c in table.items():
        v[space.index(0, na, nb)] = c
    return StateVector(space, v)


def guarded_space(table: dict[tuple[int, int], complex], atom_levels: int = 2,
                  guard: int = 2) -> HilbertSpace:
    """Space truncated ``guard`` levels above the largest Fock index touched.

    Ideal execution never leaks past the support, but full time-domain
    dynamics transiently populates dressed components; the default +2 margin
    keeps that leakage representable.
    """
    na = max((t[0] for t in table), default=0)
    nb = max((t[1] for t in table), default=0)
    return make_space(atom_levels, na + guard, nb + guard)


def space_for_program(program: PulseProgram, guard: int = 2) -> HilbertSpace:
    """Guarded space covering everything a program's steps can touch."""
    na, nb = program.support()
    rung_a = max((s.n_class for s in program.steps if s.kind == KIND_SWAP_A), default=0)
    rung_b = max((s.n_class for s in program.steps if s.kind == KIND_SWAP_B), default=0)
    return make_space(program.atom_levels, max(na, rung_a) + guard, max(nb, rung_b) + guard)


# ---------------------------------------------------------------------------
# Ideal step semantics
# ---------------------------------------------------------------------------

def _class_pairs(space: HilbertSpace, rule: str, n_class: int):
    """Indices (i0, i1) of the 0<->1 pairs belonging to one Stark class."""
    pairs = []
    for na in range(space.na_max + 1):
        nb = na - n_class if rule == "difference" else n_class - na
        if 0 <= nb <= space.nb_max:
            pairs.append((space.index(0, na, nb), space.index(1, na, nb)))
    return pairs


def _rabi_matrix(theta: float, alpha: float, beta: float) -> np.ndarray:
    half = 0.5 * theta
    return np.array([
        [np.exp(1j * alpha) * np.cos(half), -1j * np.exp(1j * beta) * np.sin(half)],
        [-1j * np.exp(-1j * beta) * np.sin(half), np.exp(-1j * alpha) * np.cos(half)],
    ])


def apply_rabi_ideal(state: StateVector, n_class: int, theta: float, alpha: float = 0.0,
                     beta: float = 0.0, phi: float | None = None,
                     rule: str = "difference") -> StateVector:
    """Selective Rabi rotation on Stark class ``n_class``.

    Every (n_a, n_b) in the class undergoes the 2x2 rotation with phases
    (alpha, beta); all other amplitudes pick up the spectator phase
    e^{i phi} at atom level 0 and e^{-i phi} at levels >= 1.  ``phi``
    defaults to alpha (a symmetric frequency-shift sandwich).
    """
    space = state.space
    if phi is None:
        phi = alpha
    amps = state.amplitudes.copy()
    if phi != 0.0:
        labels = space.labels()
        amps *= np.where(labels[:, 0] == 0, np.exp(1j * phi), np.exp(-1j * phi))
    block = _rabi_matrix(theta, alpha, beta)
    raw = state.amplitudes
    for i0, i1 in _class_pairs(space, rule, n_class):
        c0, c1 = raw[i0], raw[i1]
        amps[i0] = block[0, 0] * c0 + block[0, 1] * c1
        amps[i1] = block[1, 0] * c0 + block[1, 1] * c1
    return StateVector(space, amps, normalized=state.normalized)


def _swap_pairs(space: HilbertSpace, mode: str):
    """Ladder pairs (i0, i1, rung): |0, .., n, ..> <-> |1, .., n-1, ..>."""
    pairs = []
    for i in range(space.dim):
        q, na, nb = space.label(i)
        if q != 0:
            continue
        if mode == "a" and na >= 1:
            pairs.append((i, space.index(1, na - 1, nb), na))
        elif mode == "b" and nb >= 1:
            pairs.append((i, space.index(1, na, nb - 1), nb))
    return pairs


def apply_swap_ideal(state: StateVector, mode: str, duration: float,
                     params: SystemParams) -> StateVector:
    """Resonant atom-mode exchange for ``duration`` seconds.

    All ladder pairs rotate simultaneously, rung n by theta_n = sqrt(n) g t.
    """
    g = params.g_a if mode == "a" else params.g_b
    space = state.space
    amps = state.amplitudes.copy()
    raw = state.amplitudes
    for i0, i1, rung in _swap_pairs(space, mode):
        th = math.sqrt(rung) * g * duration
        c, s = math.cos(th), math.sin(th)
        c0, c1 = raw[i0], raw[i1]
        amps[i0] = c * c0 - 1j * s * c1
        amps[i1] = c * c1 - 1j * s * c0
    return StateVector(space, amps, normalized=state.normalized)


def apply_phase_ideal(state: StateVector, phi: float) -> StateVector:
    """Multiply every atom-excited amplitude (q >= 1) by e^{i phi}."""
    space = state.space
    labels = space.labels()
    amps = state.amplitudes * np.where(labels[:, 0] == 0, 1.0, np.exp(1j * phi))
    return StateVector(space, amps, normalized=state.normalized)


def apply_step_ideal(state: StateVector, step: PulseStep, params: SystemParams,
                     rule: str = "difference") -> StateVector:
    if step.kind == KIND_RABI:
        return apply_rabi_ideal(state, step.n_class, step.theta, step.alpha, step.beta,
                                rule=rule)
    if step.kind == KIND_SWAP_A:
        return apply_swap_ideal(state, "a", step.duration, params)
    if step.kind == KIND_SWAP_B:
        return apply_swap_ideal(state, "b", step.duration, params)
    return apply_phase_ideal(state, step.theta)


def run_ideal(program: PulseProgram, initial: StateVector,
              params: SystemParams) -> StateVector:
    """Sequential ideal execution of a program."""
    _check_space(program, initial.space)
    state = initial
    for step in program.steps:
        state = apply_step_ideal(state, step, params, program.rule)
    return state


def run_ideal_trace(program: PulseProgram, initial: StateVector,
                    params: SystemParams) -> list[StateVector]:
    """Ideal execution returning the state after every step."""
    _check_space(program, initial.space)
    states = [initial]
    for step in program.steps:
        states.append(apply_step_ideal(states[-1], step, params, program.rule))
    return states


def _check_space(program: PulseProgram, space: HilbertSpace) -> None:
    na, nb = program.support()
    rung_a = max((s.n_class for s in program.steps if s.kind == KIND_SWAP_A), default=0)
    rung_b = max((s.n_class for s in program.steps if s.kind == KIND_SWAP_B), default=0)
    if max(na, rung_a) > space.na_max or max(nb, rung_b) > space.nb_max:
        raise ValueError(
            f"program touches Fock indices ({max(na, rung_a)}, {max(nb, rung_b)}) "
            f"beyond truncation ({space.na_max}, {space.nb_max})"
        )


# ---------------------------------------------------------------------------
# Synthesis (inverse evolution)
# ---------------------------------------------------------------------------

def _wrap_phase(phi: float) -> float:
    """Wrap to (-pi, pi]."""
    out = math.remainder(phi, 2.0 * math.pi)
    if out <= -math.pi:
        out += 2.0 * math.pi
    return out


def adjoint_steps(steps) -> tuple[PulseStep, ...]:
    """Step list realizing the adjoint of a step list, in application order.

    Rabi and phase steps invert natively; a swap's adjoint is the same swap
    between two pi phase shifts.  Adjacent phase shifts are merged.
    """
    out: list[PulseStep] = []

    def push_phase(phi: float) -> None:
        if out and out[-1].kind == KIND_PHASE:
            merged = _wrap_phase(out[-1].theta + phi)
            out.pop()
            if abs(merged) > 1e-15:
                out.append(PulseStep(KIND_PHASE, merged))
            return
        phi = _wrap_phase(phi)
        if abs(phi) > 1e-15:
            out.append(PulseStep(KIND_PHASE, phi))

    for s in reversed(steps):
        if s.kind == KIND_PHASE:
            push_phase(-s.theta)
        elif s.kind == KIND_RABI:
            beta = _wrap_phase(s.beta + math.pi)
            out.append(replace(s, alpha=-s.alpha, beta=beta, drive_phase=beta - (-s.alpha)))
        else:
            push_phase(math.pi)
            out.append(s)
            push_phase(math.pi)
    return tuple(out)


def inverse_program(program: PulseProgram) -> PulseProgram:
    """Program undoing ``program`` (reversed, conjugated step list)."""
    return replace(program, steps=adjoint_steps(program.steps))


class _InverseSolver:
    """Clears the target's Fock diagram down to |0,0,0>.

    Rows (n_b = j) are emptied from the top down; within a row the column
    order depends on the class rule (right-to-left for ``difference``,
    left-to-right for ``sum``) so that each selective rotation only ever
    touches already-cleared or actively managed amplitudes.  Finally the
    bottom row walks down the mode-a ladder.
    """

    def __init__(self, table, params: SystemParams, rule: str, atom_levels: int):
        self.params = params
        self.rule = rule
        na = max((t[0] for t in table), default=0)
        nb = max((t[1] for t in table), default=0)
        self.space = make_space(atom_levels, na, nb)
        self.amps = target_state(self.space, table).amplitudes.copy()
        self.steps: list[PulseStep] = []

    def solve(self) -> tuple[PulseStep, ...]:
        sp = self.space
        for j in range(sp.nb_max, 0, -1):
            cols = range(sp.na_max, -1, -1) if self.rule == "difference" \
                else range(0, sp.na_max + 1)
            for k in cols:
                self._clear_by_swap("b", rung=j, move=(0, k, j), partner=(1, k, j - 1))
                n = k - (j - 1) if self.rule == "difference" else k + (j - 1)
                self._clear_by_rabi(n, move=(1, k, j - 1), pivot=(0, k, j - 1))
        for j in range(sp.na_max, 0, -1):
            self._clear_by_swap("a", rung=j, move=(0, j, 0), partner=(1, j - 1, 0))
            self._clear_by_rabi(j - 1, move=(1, j - 1, 0), pivot=(0, j - 1, 0))
        residual = 1.0 - abs(self.amps[sp.index(0, 0, 0)]) ** 2
        if residual > 1e-13:
            raise CompileError(f"inverse evolution left residual population {residual:.3e}")
        return tuple(self.steps)

    def _apply(self, step: PulseStep) -> None:
        state = StateVector(self.space, self.amps, normalized=False)
        self.amps = apply_step_ideal(state, step, self.params, self.rule).amplitudes
        self.steps.append(step)

    def _clear_by_swap(self, mode: str, rung: int, move, partner) -> None:
        sp = self.space
        c_m = self.amps[sp.index(*move)]
        if abs(c_m) < CLEARED_TOL:
            return
        c_p = self.amps[sp.index(*partner)]
        if abs(c_p) >= CLEARED_TOL:
            # Align the partner's phase so a real rotation can zero the mover.
            phi = _wrap_phase(np.angle(c_m) - np.angle(c_p) - 0.5 * math.pi)
            if abs(phi) > 1e-15:
                self._apply(PulseStep(KIND_PHASE, phi))
                c_p = self.amps[sp.index(*partner)]
            theta = math.atan2(abs(c_m), abs(c_p))
        else:
            theta = 0.5 * math.pi
        g = self.params.g_a if mode == "a" else self.params.g_b
        kind = KIND_SWAP_A if mode == "a" else KIND_SWAP_B
        duration = theta / (math.sqrt(rung) * g)
        self._apply(PulseStep(kind, theta, n_class=rung, duration=duration))

    def _clear_by_rabi(self, n_class: int, move, pivot) -> None:
        sp = self.space
        c1 = self.amps[sp.index(*move)]
        if abs(c1) < CLEARED_TOL:
            return
        c0 = self.amps[sp.index(*pivot)]
        theta = 2.0 * math.atan2(abs(c1), abs(c0))
        beta = 0.0
        if abs(c0) >= CLEARED_TOL:
            beta = _wrap_phase(np.angle(c0) - np.angle(c1) + 0.5 * math.pi)
        duration = theta / self.params.rabi_omega
        self._apply(PulseStep(KIND_RABI, theta, n_class=n_class, drive_phase=beta,
                              beta=beta, duration=duration))


def synthesize(target, params: SystemParams, rule: str = "difference",
               atom_levels: int = 2) -> PulseProgram:
    """Compile a pulse program preparing ``target`` from |0,0,0>.

    The returned program is forward-verified: ideal execution reaches the
    target with fidelity >= 1 - 1e-8 (global phase free), else
    :class:`CompileError` is raised.
    """
    if rule not in ("difference", "sum"):
        raise ValueError(f"addressing rule must be 'difference' or 'sum', got {rule!r}")
    table = normalize_target(target)
    inverse_steps = _InverseSolver(table, params, rule, atom_levels).solve()
    program = PulseProgram(
        steps=adjoint_steps(inverse_steps),
        target=tuple((na, nb, c) for (na, nb), c in sorted(table.items())),
        atom_levels=atom_levels,
        rule=rule,
    )
    check = forward_check(program, params)
    if check < 1.0 - FORWARD_FIDELITY_TOL:
        raise CompileError(f"forward check fidelity {check!r} below 1 - 1e-8")
    return program


def forward_check(program: PulseProgram, params: SystemParams) -> float:
    """Fidelity of ideal forward execution from |0,0,0> against the target."""
    space = make_space(program.atom_levels, *program.support())
    final = run_ideal(program, basis_state(space, 0, 0, 0), params)
    return fidelity(final, target_state(space, program.target_table()))


def noon_program(n: int, params: SystemParams, rule: str = "difference",
                 atom_levels: int = 2) -> PulseProgram:
    """Closed-form 4N-step NOON program.

    Rung j of each ladder is reached by a selective rotation (pi/2 for the
    very first, pi for all others) followed by a full transfer swap of
    duration pi / (2 g sqrt(j)).
    """
    if n < 1:
        raise ValueError("NOON index must be >= 1")
    steps: list[PulseStep] = []
    omega = params.rabi_omega

    def rabi(theta: float, na: int, nb: int) -> PulseStep:
        n_class = na - nb if rule == "difference" else na + nb
        return PulseStep(KIND_RABI, theta, n_class=n_class, duration=theta / omega)

    for j in range(1, n + 1):
        theta = 0.5 * math.pi if j == 1 else math.pi
        steps.append(rabi(theta, j - 1, 0))
        steps.append(PulseStep(KIND_SWAP_A, 0.5 * math.pi, n_class=j,
                               duration=0.5 * math.pi / (math.sqrt(j) * params.g_a)))
    for j in range(1, n + 1):
        steps.append(rabi(math.pi, 0, j - 1))
        steps.append(PulseStep(KIND_SWAP_B, 0.5 * math.pi, n_class=j,
                               duration=0.5 * math.pi / (math.sqrt(j) * params.g_b)))
    return PulseProgram(
        steps=tuple(steps),
        target=tuple((na, nb, c) for (na, nb), c in sorted(noon_target(n).items())),
        atom_levels=atom_levels,
        rule=rule,
    )


# ---------------------------------------------------------------------------
# Timing bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProgramBounds:
    t_max: float
    t_noon: float
    exact_duration: float | None = None


def max_time_bound(n_a: int, n_b: int, params: SystemParams) -> float:
    """Worst-case duration of the general algorithm on an (N_a, N_b) support."""
    t = (n_a + n_b + n_a * n_b) * math.pi / params.rabi_omega
    t += sum(math.pi / (2.0 * params.g_a * math.sqrt(j)) for j in range(1, n_a + 1))
    t += (n_a + 1) * sum(math.pi / (2.0 * params.g_b * math.sqrt(j)) for j in range(1, n_b + 1))
    return t


def noon_time(n: int, params: SystemParams) -> float:
    """Exact duration of the 4N-step NOON program."""
    t = (2.0 * n - 0.5) * math.pi / params.rabi_omega
    t += sum(math.pi / (2.0 * params.g_a * math.sqrt(j)) for j in range(1, n + 1))
    t += sum(math.pi / (2.0 * params.g_b * math.sqrt(j)) for j in range(1, n + 1))
    return t


def max_step_pairs(n_max: int) -> int:
    """Upper bound on rotation+swap pairs for support within n_max x n_max."""
    return 2 * n_max * (n_max + 1)


def program_bounds(program_or_support, params: SystemParams) -> ProgramBounds:
    """Evaluate both closed-form time bounds; exact duration for a concrete program."""
    if isinstance(program_or_support, PulseProgram):
        n_a, n_b = program_or_support.support()
        exact = program_or_support.duration()
    else:
        n_a, n_b = program_or_support
        exact = None
    return ProgramBounds(
        t_max=max_time_bound(n_a, n_b, params),
        t_noon=noon_time(max(n_a, n_b), params) if max(n_a, n_b) >= 1 else 0.0,
        exact_duration=exact,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _ns_repr(seconds: float) -> str:
    """Exact seconds -> nanoseconds by decimal exponent shift (17 sig. digits)."""
    mantissa, _, exponent = f"{seconds:.16e}".partition("e")
    return f"{mantissa}e{int(exponent) + 9:+03d}"


def _ns_parse(text: str) -> float:
    mantissa, _, exponent = text.partition("e")
    if not exponent:
        raise ValueError(f"malformed duration field {text!r}")
    return float(f"{mantissa}e{int(exponent) - 9}")


def write_program(program: PulseProgram, params: SystemParams | None = None) -> str:
    """Line-oriented text serialization.

    One step per line: ``KIND theta_rad n_class drive_phase_rad alpha_rad
    beta_rad duration_ns``.  All floats carry 17 significant digits; the
    duration is converted to ns by an exact decimal exponent shift, so a
    write/parse round trip is bit-exact.
    """
    lines = [f"# jcpulse program v{PROGRAM_FORMAT_VERSION}"]
    if params is not None:
        lines.append(f"# params {params_digest(params)}")
    lines.append(f"# rule {program.rule}")
    lines.append(f"# levels {program.atom_levels}")
    for na, nb, c in program.target:
        lines.append(f"# target {na} {nb} {c.real:.16e} {c.imag:.16e}")
    for s in program.steps:
        lines.append(
            f"{s.kind} {s.theta:.16e} {s.n_class} {s.drive_phase:.16e} "
            f"{s.alpha:.16e} {s.beta:.16e} {_ns_repr(s.duration)}"
        )
    return "\n".join(lines) + "\n"


def parse_program(text: str) -> tuple[PulseProgram, dict]:
    """Inverse of :func:`write_program`; returns (program, header metadata)."""
    header: dict = {"target": []}
    steps: list[PulseStep] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            fields = line[1:].split()
            if not fields:
                continue
            if fields[0] == "jcpulse":
                continue
            if fields[0] == "target":
                na, nb = int(fields[1]), int(fields[2])
                header["target"].append((na, nb, complex(float(fields[3]), float(fields[4]))))
            elif fields[0] in ("params", "rule", "levels"):
                header[fields[0]] = fields[1]
            continue
        fields = line.split()
        if len(fields) != 7:
            raise ValueError(f"program line {lineno}: expected 7 fields, got {len(fields)}")
        steps.append(PulseStep(
            kind=fields[0],
            theta=float(fields[1]),
            n_class=int(fields[2]),
            drive_phase=float(fields[3]),
            alpha=float(fields[4]),
            beta=float(fields[5]),
            duration=_ns_parse(fields[6]),
        ))
    program = PulseProgram(
        steps=tuple(steps),
        target=tuple(header["target"]),
        atom_levels=int(header.get("levels", 2)),
        rule=header.get("rule", "difference"),
    )
    return program, header
