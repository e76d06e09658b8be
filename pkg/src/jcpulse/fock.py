"""Truncated Hilbert space for one artificial atom coupled to two bosonic modes.

The composite system is atom (2 or 3 levels) x mode a x mode b, with hard Fock
truncation at ``na_max`` / ``nb_max``.  Basis states |q, n_a, n_b> are ordered
with q slowest, then n_a, then n_b fastest:

    index(q, n_a, n_b) = (q * (na_max + 1) + n_a) * (nb_max + 1) + n_b

This bijection is part of the on-disk format contract and must not change.

All containers here are immutable after construction; they may be shared
freely across threads.  Matrices are dense complex128: every system of
interest has dim <= a few hundred, where dense eigensolves and exponentials
are cheaper and simpler than sparse bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HERMITICITY_TOL = 1e-12
NORM_TOL = 1e-10

# Atom lowering matrix element between levels 1 and 2 (harmonic-oscillator-like
# weakly anharmonic atom).
QUTRIT_LAMBDA = np.sqrt(2.0)


@dataclass(frozen=True)
class HilbertSpace:
    """Truncated atom x mode-a x mode-b space with a fixed index bijection."""

    qubit_levels: int
    na_max: int
    nb_max: int

    def __post_init__(self) -> None:
        if self.qubit_levels not in (2, 3):
            raise ValueError(f"qubit_levels must be 2 or 3, got {self.qubit_levels}")
        if self.na_max < 0 or self.nb_max < 0:
            raise ValueError(
                f"Fock truncations must be >= 0, got na_max={self.na_max}, nb_max={self.nb_max}"
            )

    @property
    def dim(self) -> int:
        return self.qubit_levels * (self.na_max + 1) * (self.nb_max + 1)

    def index(self, q: int, na: int, nb: int) -> int:
        """Map a basis label (q, n_a, n_b) to its vector index."""
        if not (0 <= q < self.qubit_levels):
            raise ValueError(f"atom level {q} outside 0..{self.qubit_levels - 1}")
        if not (0 <= na <= self.na_max):
            raise ValueError(f"n_a={na} outside 0..{self.na_max}")
        if not (0 <= nb <= self.nb_max):
            raise ValueError(f"n_b={nb} outside 0..{self.nb_max}")
        return (q * (self.na_max + 1) + na) * (self.nb_max + 1) + nb

    def label(self, index: int) -> tuple[int, int, int]:
        """Inverse of :meth:`index`."""
        if not (0 <= index < self.dim):
            raise ValueError(f"index {index} outside 0..{self.dim - 1}")
        index, nb = divmod(index, self.nb_max + 1)
        q, na = divmod(index, self.na_max + 1)
        return q, na, nb

    def labels(self) -> np.ndarray:
        """(dim, 3) integer array of (q, n_a, n_b) in index order."""
        out = np.empty((self.dim, 3), dtype=int)
        for i in range(self.dim):
            out[i] = self.label(i)
        return out


def make_space(qubit_levels: int, na_max: int, nb_max: int) -> HilbertSpace:
    """Construct a validated :class:`HilbertSpace`."""
    return HilbertSpace(qubit_levels, na_max, nb_max)


@dataclass(frozen=True)
class Operator:
    """Dense operator on a :class:`HilbertSpace`.

    When ``hermitian`` is set the matrix is verified against its adjoint at
    construction time (max-abs elementwise, tolerance 1e-12).
    """

    space: HilbertSpace
    matrix: np.ndarray
    hermitian: bool = False

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(f"operator shape {m.shape} != ({self.space.dim}, {self.space.dim})")
        if self.hermitian:
            dev = np.max(np.abs(m - m.conj().T))
            if dev > HERMITICITY_TOL:
                raise ValueError(f"operator tagged hermitian deviates by {dev:.3e}")

    def dagger(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T, hermitian=self.hermitian)

    def __matmul__(self, other: "Operator") -> "Operator":
        if other.space != self.space:
            raise ValueError("operator spaces differ")
        return Operator(self.space, self.matrix @ other.matrix)


@dataclass(frozen=True)
class StateVector:
    """Pure state on a :class:`HilbertSpace`.

    ``normalized=True`` (the default) asserts unit norm within 1e-10.
    """

    space: HilbertSpace
    amplitudes: np.ndarray
    normalized: bool = True

    def __post_init__(self) -> None:
        v = np.asarray(self.amplitudes, dtype=complex)
        object.__setattr__(self, "amplitudes", v)
        if v.shape != (self.space.dim,):
            raise ValueError(f"state length {v.shape} != ({self.space.dim},)")
        if self.normalized:
            n = np.linalg.norm(v)
            if abs(n - 1.0) > NORM_TOL:
                raise ValueError(f"state tagged normalized has norm {n!r}")

    def amplitude(self, q: int, na: int, nb: int) -> complex:
        return complex(self.amplitudes[self.space.index(q, na, nb)])

    def population(self, q: int, na: int, nb: int) -> float:
        return float(abs(self.amplitude(q, na, nb)) ** 2)

    def inner(self, other: "StateVector") -> complex:
        """<self | other>."""
        if other.space != self.space:
            raise ValueError("state spaces differ")
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class DensityMatrix:
    """Density matrix on a :class:`HilbertSpace`.

    Use :meth:`validate` to enforce hermiticity (1e-10), unit trace (1e-8)
    and eigenvalue positivity (>= -1e-8); integrator output is checked at the
    boundaries rather than on every construction.
    """

    space: HilbertSpace
    entries: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.entries, dtype=complex)
        object.__setattr__(self, "entries", m)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(f"density matrix shape {m.shape} != ({self.space.dim},) squared")

    def validate(self, herm_tol: float = 1e-10, trace_tol: float = 1e-8, eig_floor: float = -1e-8) -> "DensityMatrix":
        m = self.entries
        dev = np.max(np.abs(m - m.conj().T))
        if dev > herm_tol:
            raise ValueError(f"density matrix hermiticity deviation {dev:.3e}")
        tr = np.trace(m).real
        if abs(tr - 1.0) > trace_tol:
            raise ValueError(f"density matrix trace {tr!r}")
        evals = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
        if evals.min() < eig_floor:
            raise ValueError(f"density matrix eigenvalue {evals.min():.3e} below floor")
        return self

    def population(self, q: int, na: int, nb: int) -> float:
        i = self.space.index(q, na, nb)
        return float(self.entries[i, i].real)


def to_density(state: StateVector) -> DensityMatrix:
    v = state.amplitudes
    return DensityMatrix(state.space, np.outer(v, v.conj()))


def basis_state(space: HilbertSpace, q: int, na: int, nb: int) -> StateVector:
    """Unit vector |q, n_a, n_b>."""
    v = np.zeros(space.dim, dtype=complex)
    v[space.index(q, na, nb)] = 1.0
    return StateVector(space, v)


def state_from_amplitudes(space: HilbertSpace, amps: dict[tuple[int, int, int], complex],
                          normalized: bool = True) -> StateVector:
    """Assemble a state from a sparse {(q, n_a, n_b): amplitude} table."""
    v = np.zeros(space.dim, dtype=complex)
    for (q, na, nb), c in amps.items():
        v[space.index(q, na, nb)] = c
    return StateVector(space, v, normalized=normalized)


def mode_lowering(space: HilbertSpace, mode: str) -> Operator:
    """Annihilation operator of the tagged mode, identity on the other factors.

    Hard truncation: the matrix simply has no row above ``n_max``, so any
    amplitude raised past the edge by the adjoint is dropped.
    """
    if mode not in ("a", "b"):
        raise ValueError(f"mode must be 'a' or 'b', got {mode!r}")
    m = np.zeros((space.dim, space.dim), dtype=complex)
    for i in range(space.dim):
        q, na, nb = space.label(i)
        if mode == "a" and na > 0:
            m[space.index(q, na - 1, nb), i] = np.sqrt(na)
        elif mode == "b" and nb > 0:
            m[space.index(q, na, nb - 1), i] = np.sqrt(nb)
    return Operator(space, m)


def atom_lowering(space: HilbertSpace) -> Operator:
    """Atom lowering operator: |0><1| for 2 levels, |0><1| + sqrt(2)|1><2| for 3."""
    m = np.zeros((space.dim, space.dim), dtype=complex)
    for i in range(space.dim):
        q, na, nb = space.label(i)
        if q >= 1:
            elem = 1.0 if q == 1 else QUTRIT_LAMBDA
            m[space.index(q - 1, na, nb), i] = elem
    return Operator(space, m)


def atom_excitation(space: HilbertSpace) -> Operator:
    """Diagonal operator with the atom level index q as eigenvalue."""
    labels = space.labels()
    return Operator(space, np.diag(labels[:, 0].astype(complex)), hermitian=True)


def number_operator(space: HilbertSpace, mode: str) -> Operator:
    """Photon number operator of the tagged mode."""
    labels = space.labels()
    col = {"a": 1, "b": 2}[mode]
    return Operator(space, np.diag(labels[:, col].astype(complex)), hermitian=True)


def expectation(op: Operator, state: StateVector | DensityMatrix) -> float:
    if isinstance(state, StateVector):
        v = state.amplitudes
        return float(np.real(np.vdot(v, op.matrix @ v)))
    return float(np.real(np.trace(op.matrix @ state.entries)))


def fidelity(state_or_rho: StateVector | DensityMatrix, target: StateVector) -> float:
    """Overlap fidelity with a pure target.

    |<target|psi>|^2 for pure states, <target|rho|target> for density
    matrices.  Always real in [0, 1] up to numerical round-off.
    """
    if state_or_rho.space != target.space:
        raise ValueError("fidelity between states on different spaces")
    t = target.amplitudes
    if isinstance(state_or_rho, StateVector):
        f = abs(np.vdot(t, state_or_rho.amplitudes)) ** 2
    else:
        f = np.real(np.vdot(t, state_or_rho.entries @ t))
    return float(f)
