"""Time-domain control schedules and dressed-basis pulse calibration.

A :class:`ControlSchedule` realizes a pulse program as piecewise control of
the atom frequency omega_q(t) plus an optional microwave drive per segment:

* Rabi steps      -> atom parked at the dispersive idle point, drive on at
                     the Stark-class frequency;
* swap steps      -> atom frequency shifted onto the (dressed) resonance
                     with the addressed mode, drive off;
* phase steps     -> a short frequency excursion whose area
                     (omega_q - idle) * tau equals minus the requested phase.

With fixed couplings the true eigenstates are dressed, so leading-order
drive frequencies and bare resonances are only a starting point.
Calibration replaces them with exact diagonalization results: transition
frequencies from dressed level differences, drive amplitudes rescaled by the
dressed matrix element, swap bias at the numerically located avoided
crossing and swap duration rescaled by the exact gap.

Dressed levels are matched to bare labels by maximum-overlap assignment,
which stays well-defined away from crossings; at a swap's avoided crossing
the two participating levels are instead tracked as a two-dimensional
subspace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment, minimize_scalar

from .compiler import (KIND_PHASE, KIND_RABI, KIND_SWAP_A, KIND_SWAP_B,
                       PulseProgram, PulseStep)
from .fock import HilbertSpace, StateVector
from .model import SystemParams, dispersive_map, drive_coupling, drive_frequency, \
    static_hamiltonian

TWO_PI = 2.0 * math.pi

# Default magnitude of the frequency excursion used for phase shifts.
DEFAULT_SHIFT_MAGNITUDE = TWO_PI * 100e6

# Swap-bias search window around the bare resonance, in units of g.
SWAP_SEARCH_WINDOW = 8.0


class CalibrationError(RuntimeError):
    """A dressed transition could not be identified for a step."""


@dataclass(frozen=True)
class Segment:
    """One contiguous stretch of constant controls (before ramp smoothing)."""

    t0: float
    t1: float
    omega_q: float
    drive_amp: float = 0.0
    drive_freq: float = 0.0
    drive_phase: float = 0.0
    label: str = ""

    @property
    def duration(self) -> float:
        return self.t1 - self.t0


@dataclass(frozen=True)
class ControlSchedule:
    """Contiguous, monotonically increasing control segments."""

    segments: tuple[Segment, ...]
    idle_omega_q: float
    ramp_time: float = 0.0

    def __post_init__(self) -> None:
        prev_end = 0.0
        for seg in self.segments:
            if seg.duration < 0:
                raise ValueError(f"segment {seg.label!r} has negative duration")
            if abs(seg.t0 - prev_end) > 1e-15 * max(1.0, abs(prev_end)):
                raise ValueError(f"segments not contiguous at t = {seg.t0!r}")
            prev_end = seg.t1
        if self.ramp_time < 0:
            raise ValueError("ramp time must be >= 0")
        if self.ramp_time > 0 and self.segments:
            shortest = min(s.duration for s in self.segments if s.duration > 0)
            if self.ramp_time > shortest:
                raise ValueError(
                    f"ramp time {self.ramp_time!r} exceeds shortest segment {shortest!r}"
                )

    @property
    def duration(self) -> float:
        return self.segments[-1].t1 if self.segments else 0.0

    def segment_at(self, t: float) -> Segment:
        for seg in self.segments:
            if seg.t0 <= t <= seg.t1:
                return seg
        raise ValueError(f"time {t!r} outside schedule span [0, {self.duration!r}]")

    def omega_q_at(self, t: float) -> float:
        """Atom frequency including cosine blending across segment boundaries."""
        if not self.segments:
            return self.idle_omega_q
        r = self.ramp_time
        if r == 0.0:
            return self.segment_at(t).omega_q
        # Cosine blend of width r centered on each interior boundary; the
        # blend is symmetric, so excursion areas (and thus phase shifts) are
        # preserved exactly.
        for left, right in zip(self.segments[:-1], self.segments[1:]):
            tb = left.t1
            if abs(t - tb) <= 0.5 * r:
                x = (t - (tb - 0.5 * r)) / r
                w = 0.5 * (1.0 - math.cos(math.pi * x))
                return (1.0 - w) * left.omega_q + w * right.omega_q
        return self.segment_at(t).omega_q

    def drive_at(self, t: float) -> tuple[float, float, float]:
        """(amplitude, frequency, phase) at time t, with ramped envelope."""
        seg = self.segment_at(t)
        if seg.drive_amp == 0.0:
            return 0.0, 0.0, 0.0
        amp = seg.drive_amp
        r = self.ramp_time
        if r > 0.0:
            # Raised-cosine edges inside the segment; the plateau amplitude
            # was already rescaled at construction to preserve pulse area.
            dt_in = t - seg.t0
            dt_out = seg.t1 - t
            if dt_in < r:
                amp *= 0.5 * (1.0 - math.cos(math.pi * dt_in / r))
            if dt_out < r:
                amp *= 0.5 * (1.0 - math.cos(math.pi * dt_out / r))
        return amp, seg.drive_freq, seg.drive_phase


# ---------------------------------------------------------------------------
# Dressed spectrum
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DressedSpectrum:
    """Eigenpairs of the static Hamiltonian, aligned with bare labels.

    ``energies[i]`` / ``vectors[:, i]`` belong to the dressed state with the
    largest overlap on bare basis state i; vector phases are fixed so that
    overlap is real positive.
    """

    space: HilbertSpace
    omega_q: float
    energies: np.ndarray
    vectors: np.ndarray

    def energy(self, q: int, na: int, nb: int) -> float:
        return float(self.energies[self.space.index(q, na, nb)])

    def vector(self, q: int, na: int, nb: int) -> np.ndarray:
        return self.vectors[:, self.space.index(q, na, nb)]

    def transition(self, pair_lo, pair_hi) -> float:
        return self.energy(*pair_hi) - self.energy(*pair_lo)


def dressed_spectrum(space: HilbertSpace, params: SystemParams,
                     omega_q_bias: float) -> DressedSpectrum:
    """Diagonalize and assign dressed levels to bare labels by maximum overlap."""
    h = static_hamiltonian(space, params, omega_q_bias).matrix
    evals, evecs = np.linalg.eigh(h)
    weights = np.abs(evecs) ** 2  # weights[bare, eig]
    bare_idx, eig_idx = linear_sum_assignment(-weights)
    order = np.empty(space.dim, dtype=int)
    order[bare_idx] = eig_idx
    energies = evals[order]
    vectors = evecs[:, order].copy()
    for i in range(space.dim):
        ov = vectors[i, i]
        if abs(ov) > 0:
            vectors[:, i] *= np.conj(ov) / abs(ov)
    return DressedSpectrum(space, omega_q_bias, energies, vectors)


def dressed_frame_state(state: StateVector, spectrum: DressedSpectrum,
                        t: float) -> StateVector:
    """Express a lab-frame state in the dressed frame of ``spectrum`` at time t.

    Coefficients are taken along the dressed eigenvectors (labeled by their
    bare partners) and the dressed phases e^{-i E t} are undone, so a state
    idling at the spectrum's bias point is stationary.
    """
    coeffs = spectrum.vectors.conj().T @ state.amplitudes
    coeffs = coeffs * np.exp(1j * spectrum.energies * t)
    return StateVector(state.space, coeffs, normalized=False)


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CalibratedStep:
    """Calibration output: absolute controls plus correction factors."""

    drive_freq: float | None = None   # Rabi: exact dressed transition
    amp_scale: float = 1.0            # Rabi: 1 / |dressed matrix element|
    phase_offset: float = 0.0         # Rabi: -arg(dressed matrix element)
    omega_q: float | None = None      # swaps: dressed-resonance bias
    duration: float | None = None     # swaps: duration rescaled by exact gap
    freq_shift: float = 0.0           # applied frequency correction (rad/s)
    duration_scale: float = 1.0


def class_anchor_pair(n_class: int, rule: str, swap_hint: str | None = None
                      ) -> tuple[int, int]:
    """Representative (n_a, n_b) used to calibrate a Stark class.

    For the difference rule the lowest-Fock member is unique.  For the sum
    rule the class is degenerate along an anti-diagonal; the neighbouring
    swap's mode ('a' or 'b') selects which ladder is being climbed.
    """
    if rule == "difference":
        return (n_class, 0) if n_class >= 0 else (0, -n_class)
    if n_class < 0:
        raise CalibrationError(f"sum-rule class {n_class} is invalid")
    if swap_hint == "b":
        return (0, n_class)
    return (n_class, 0)


def calibrate_rabi(params: SystemParams, spectrum: DressedSpectrum, n_class: int,
                   rule: str = "difference", pair: tuple[int, int] | None = None
                   ) -> CalibratedStep:
    """Exact drive frequency and amplitude rescaling for a selective rotation."""
    if pair is None:
        pair = class_anchor_pair(n_class, rule)
    na, nb = pair
    space = spectrum.space
    if na > space.na_max or nb > space.nb_max:
        raise CalibrationError(f"class anchor ({na}, {nb}) outside truncation")
    freq = spectrum.transition((0, na, nb), (1, na, nb))
    dmap = dispersive_map(params, strict=False) if rule == "difference" \
        else dispersive_map(params, qubit_levels=3, strict=False)
    nominal = drive_frequency(params, dmap, n_class)
    window = 5.0 * abs(dmap.delta_omega)
    if window > 0 and abs(freq - nominal) > window:
        raise CalibrationError(
            f"dressed transition for class {n_class} lies {abs(freq - nominal) / TWO_PI:.3e} Hz "
            f"from the leading-order value (window {window / TWO_PI:.3e} Hz)"
        )
    v0 = spectrum.vector(0, na, nb)
    v1 = spectrum.vector(1, na, nb)
    m = np.vdot(v1, drive_coupling(space) @ v0)
    if abs(m) < 0.5:
        raise CalibrationError(
            f"dressed matrix element {abs(m):.3f} too small for class {n_class}; "
            "level assignment is unreliable"
        )
    return CalibratedStep(
        drive_freq=freq,
        amp_scale=1.0 / abs(m),
        phase_offset=-float(np.angle(m)),
        freq_shift=freq - nominal,
    )


def _pair_gap(space: HilbertSpace, params: SystemParams, omega_q: float,
              lo: tuple[int, int, int], hi: tuple[int, int, int]) -> float:
    """Energy gap of the two dressed levels spanning a bare swap pair."""
    h = static_hamiltonian(space, params, omega_q).matrix
    evals, evecs = np.linalg.eigh(h)
    i_lo, i_hi = space.index(*lo), space.index(*hi)
    weight = np.abs(evecs[i_lo]) ** 2 + np.abs(evecs[i_hi]) ** 2
    top2 = np.argsort(weight)[-2:]
    if weight[top2].sum() < 1.0:
        raise CalibrationError(
            f"swap pair {lo}<->{hi} is not spectrally isolated at bias "
            f"{omega_q / TWO_PI / 1e9:.4f} GHz (subspace weight {weight[top2].sum():.3f})"
        )
    return float(abs(evals[top2[1]] - evals[top2[0]]))


def calibrate_swap(params: SystemParams, space: HilbertSpace, mode: str, rung: int,
                   theta: float, spectator: int = 0,
                   spectrum_idle: DressedSpectrum | None = None) -> CalibratedStep:
    """Calibrate one swap rung against exact diagonalization.

    The pair is (|0, rung, s>, |1, rung-1, s>) for mode a (s = spectator
    occupation of the other mode), and the mirrored labels for mode b.  The
    bias minimizing the dressed gap is the calibrated resonance; the exact
    gap there replaces the nominal 2 g sqrt(rung) in the duration.

    For a full transfer (theta = pi/2) and a known idle spectrum the result
    is then refined by directly maximizing the dressed-state transfer
    probability |<out| e^{-i H(bias) tau} |in>|^2 over (bias, tau), where
    in/out are the idle-dressed pair states.  This absorbs the projection
    error of the sudden bias switch, which grows as (2 g sqrt(n) / detuning)^2
    and dominates at strong coupling.
    """
    g = params.g_a if mode == "a" else params.g_b
    omega_r = params.omega_a if mode == "a" else params.omega_b
    if mode == "a":
        lo, hi = (0, rung, spectator), (1, rung - 1, spectator)
    else:
        lo, hi = (0, spectator, rung), (1, spectator, rung - 1)

    def gap(omega_q: float) -> float:
        return _pair_gap(space, params, omega_q, lo, hi)

    half_window = SWAP_SEARCH_WINDOW * g
    res = minimize_scalar(gap, bounds=(omega_r - half_window, omega_r + half_window),
                          method="bounded", options={"xatol": 1e-6 * g})
    if not res.success:
        raise CalibrationError(f"avoided-crossing search failed for {mode}-swap rung {rung}")
    gap_cal = res.fun
    nominal_gap = 2.0 * g * math.sqrt(rung)
    bias, duration = float(res.x), 2.0 * theta / gap_cal

    if spectrum_idle is not None and abs(theta - 0.5 * math.pi) < 1e-9:
        bias, duration = _optimize_swap_transfer(params, space, hi, lo, bias, duration,
                                                 gap_cal, spectrum_idle)
    return CalibratedStep(
        omega_q=bias,
        duration=duration,
        freq_shift=bias - omega_r,
        duration_scale=duration / (2.0 * theta / nominal_gap),
    )


def _optimize_swap_transfer(params: SystemParams, space: HilbertSpace, state_in,
                            state_out, bias0: float, tau0: float, gap: float,
                            spectrum_idle: DressedSpectrum
                            ) -> tuple[float, float]:
    """Maximize |<out|e^{-iH(bias) tau}|in>|^2 over bias and duration."""
    v_in = spectrum_idle.vector(*state_in)
    v_out = spectrum_idle.vector(*state_out)

    def best_tau(omega_q: float) -> tuple[float, float]:
        h = static_hamiltonian(space, params, omega_q).matrix
        evals, evecs = np.linalg.eigh(h)
        # transfer amplitude = sum_k w_k e^{-i E_k tau}
        w = (evecs.conj().T @ v_out).conj() * (evecs.conj().T @ v_in)
        keep = np.abs(w) > 1e-8
        w, e = w[keep], evals[keep]
        taus = np.linspace(0.5 * tau0, 1.5 * tau0, 241)
        probs = np.abs(np.exp(-1j * np.outer(taus, e)) @ w) ** 2
        k = int(np.argmax(probs))
        span = taus[1] - taus[0]
        fine = minimize_scalar(
            lambda t: -abs(np.sum(w * np.exp(-1j * e * t))) ** 2,
            bounds=(taus[k] - span, taus[k] + span), method="bounded",
            options={"xatol": 1e-6 * tau0})
        return float(fine.x), float(-fine.fun)

    def neg_transfer(omega_q: float) -> float:
        return -best_tau(omega_q)[1]

    window = 0.5 * gap
    res = minimize_scalar(neg_transfer, bounds=(bias0 - window, bias0 + window),
                          method="bounded", options={"xatol": 1e-7 * abs(bias0)})
    bias = float(res.x) if res.success else bias0
    tau, _ = best_tau(bias)
    return bias, tau


def calibrate_step(step: PulseStep, params: SystemParams, space: HilbertSpace,
                   rule: str = "difference", spectrum: DressedSpectrum | None = None,
                   pair: tuple[int, int] | None = None) -> CalibratedStep:
    """Calibrate a single Rabi or swap step against the dressed spectrum."""
    if step.kind == KIND_RABI:
        if spectrum is None:
            spectrum = dressed_spectrum(space, params, params.omega_q)
        return calibrate_rabi(params, spectrum, step.n_class, rule, pair)
    if step.kind in (KIND_SWAP_A, KIND_SWAP_B):
        mode = "a" if step.kind == KIND_SWAP_A else "b"
        return calibrate_swap(params, space, mode, step.n_class, step.theta,
                              spectrum_idle=spectrum)
    raise ValueError(f"step kind {step.kind!r} takes no calibration")


# ---------------------------------------------------------------------------
# Schedule construction
# ---------------------------------------------------------------------------

def schedule_from_program(program: PulseProgram, params: SystemParams,
                          space: HilbertSpace, shape: str = "rectangular",
                          ramp_time: float = 1e-9, calibrate: bool = True,
                          shift_magnitude: float = DEFAULT_SHIFT_MAGNITUDE
                          ) -> ControlSchedule:
    """Realize a pulse program as a control schedule.

    ``shape`` is ``rectangular`` or ``ramped`` (cosine blending of the
    frequency shifts and raised-cosine drive edges of width ``ramp_time``).
    With ``calibrate`` the drive frequencies/amplitudes and swap
    biases/durations come from the dressed spectrum instead of leading-order
    formulas.
    """
    if shape not in ("rectangular", "ramped"):
        raise ValueError(f"shape must be 'rectangular' or 'ramped', got {shape!r}")
    idle = params.omega_q
    spectrum = dressed_spectrum(space, params, idle) if calibrate else None
    dmap = dispersive_map(params, qubit_levels=3 if program.rule == "sum" else 2,
                          strict=False)
    ramp = ramp_time if shape == "ramped" else 0.0

    segments: list[Segment] = []
    t = 0.0

    def push(duration: float, omega_q: float, amp: float = 0.0, freq: float = 0.0,
             phase: float = 0.0, label: str = "") -> None:
        nonlocal t
        if duration < 0:
            raise ValueError(f"negative duration in step {label!r}")
        segments.append(Segment(t, t + duration, omega_q, amp, freq, phase, label))
        t += duration

    steps = list(program.steps)
    for i, step in enumerate(steps):
        if step.kind == KIND_RABI:
            omega_step = step.theta / step.duration
            if calibrate:
                hint = None
                if program.rule == "sum":
                    nxt = next((s for s in steps[i + 1:] if s.kind != KIND_PHASE), None)
                    hint = "b" if nxt is not None and nxt.kind == KIND_SWAP_B else "a"
                cal = calibrate_rabi(params, spectrum, step.n_class, program.rule,
                                     pair=class_anchor_pair(step.n_class, program.rule, hint))
                freq = cal.drive_freq
                amp = omega_step * cal.amp_scale
                phase = step.drive_phase + cal.phase_offset
            else:
                freq = drive_frequency(params, dmap, step.n_class)
                amp = omega_step
                phase = step.drive_phase
            if ramp > 0.0:
                # Stretch so the raised-cosine envelope keeps the pulse area.
                duration = step.duration + ramp
                amp = amp * step.duration / (duration - ramp)
            else:
                duration = step.duration
            push(duration, idle, amp, freq, phase, f"R01[{step.n_class:+d}]")
        elif step.kind in (KIND_SWAP_A, KIND_SWAP_B):
            mode = "a" if step.kind == KIND_SWAP_A else "b"
            if calibrate:
                cal = calibrate_swap(params, space, mode, step.n_class, step.theta,
                                     spectrum_idle=spectrum)
                bias, duration = cal.omega_q, cal.duration
            else:
                bias = params.omega_a if mode == "a" else params.omega_b
                duration = step.duration
            push(duration, bias, label=f"{mode.upper()}[{step.n_class}]")
        elif step.kind == KIND_PHASE:
            phi = step.theta
            if abs(phi) < 1e-15:
                continue
            # q >= 1 picks up e^{i phi}; excursion area (bias - idle) tau = -phi.
            tau = abs(phi) / shift_magnitude
            bias = idle - math.copysign(shift_magnitude, phi)
            push(tau, bias, label=f"shift[{phi:+.3f}]")
        else:
            raise ValueError(f"unknown step kind {step.kind!r}")

    return ControlSchedule(tuple(segments), idle_omega_q=idle, ramp_time=ramp)


def scheduled_frame_phases(schedule: ControlSchedule, space: HilbertSpace,
                           params: SystemParams) -> np.ndarray:
    """First-order frame phases accumulated by each bare label during shifts.

    For every segment biased away from idle, a state parked in dressed level
    k gains phase -(E_k(bias) - E_k(idle)) * tau relative to the idle frame.
    Drive segments at idle contribute nothing.  The result can be applied to
    a target to compare simulations in the schedule's own frame.  (Labels
    actively being swapped at a given bias are mid-transfer there; their
    entries are bookkeeping only.)
    """
    idle_spec = dressed_spectrum(space, params, schedule.idle_omega_q)
    cache: dict[float, DressedSpectrum] = {}
    phases = np.zeros(space.dim)
    for seg in schedule.segments:
        if seg.omega_q == schedule.idle_omega_q:
            continue
        if seg.omega_q not in cache:
            cache[seg.omega_q] = dressed_spectrum(space, params, seg.omega_q)
        spec = cache[seg.omega_q]
        phases -= (spec.energies - idle_spec.energies) * seg.duration
    return phases
