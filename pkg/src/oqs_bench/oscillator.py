"""Truncated harmonic-oscillator Hilbert space: operators, states, metrics.

Working units: hbar = 1.  The oscillator has frequency omega and mass m; the
Fock basis |0>, ..., |dim-1> truncates the ladder, so canonical relations hold
exactly except in the top corner (e.g. [a, a^dag] = 1 except for the (d-1,d-1)
entry, which is -(d-1)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bath import BathSpec, reorganization_energy

__all__ = [
    "HERMITICITY_TOL",
    "TRACE_TOL",
    "SystemSpec",
    "OperatorMatrix",
    "DensityMatrix",
    "build_ladder",
    "build_position_momentum",
    "system_hamiltonian",
    "gibbs_state",
    "initial_state",
    "expectation",
    "trace_distance",
    "offdiag_distance",
]

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-8

_OPERATOR_LABELS = ("position", "momentum", "number", "hamiltonian", "generic")


@dataclass(frozen=True)
class SystemSpec:
    """Truncated oscillator: dim levels, frequency omega, mass, counterterm flag.

    With counterterm on, the system Hamiltonian carries the reorganization
    energy G_R x^2 (G_R = gamma E_c / 2) that cancels the bath-induced
    potential renormalization; the benchmark protocol keeps it on by default.
    """

    dim: int
    omega: float = 1.0
    mass: float = 1.0
    counterterm: bool = True

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if self.omega <= 0:
            raise ValueError(f"omega must be > 0, got {self.omega}")
        if self.mass <= 0:
            raise ValueError(f"mass must be > 0, got {self.mass}")


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Square complex matrix with a role label; array work stays in numpy."""

    entries: np.ndarray
    label: str = "generic"

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"operator entries must be square, got shape {entries.shape}")
        if self.label not in _OPERATOR_LABELS:
            raise ValueError(f"unknown operator label {self.label!r}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian unit-trace matrix.

    Hermiticity (1e-10) and trace (1e-8) are constructor invariants.
    Positivity deliberately is not: Redfield-type dynamics can leave the state
    cone, and the diagnostics report negative eigenvalues rather than reject
    them.
    """

    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"density entries must be square, got shape {entries.shape}")
        herm = float(np.max(np.abs(entries - entries.conj().T)))
        if herm > HERMITICITY_TOL:
            raise ValueError(f"density matrix not Hermitian: max deviation {herm:.3e}")
        tr = complex(np.trace(entries))
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace {tr} is not 1 within {TRACE_TOL}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def build_ladder(spec: SystemSpec):
    """Return (a, a_dag, n) in the Fock basis.

    a carries sqrt(n+1) on the first superdiagonal, so [a, a_dag] = 1 holds
    exactly except for the top diagonal entry, which is -(dim-1).
    """
    d = spec.dim
    a = np.zeros((d, d), dtype=complex)
    a[np.arange(d - 1), np.arange(1, d)] = np.sqrt(np.arange(1, d, dtype=float))
    a_dag = a.conj().T
    n = a_dag @ a
    return (
        OperatorMatrix(a, "generic"),
        OperatorMatrix(a_dag, "generic"),
        OperatorMatrix(n, "number"),
    )


def build_position_momentum(spec: SystemSpec):
    """x = sqrt(1/(2 m omega)) (a + a_dag), p = i sqrt(m omega / 2) (a_dag - a)."""
    a, a_dag, _ = build_ladder(spec)
    x = np.sqrt(1.0 / (2.0 * spec.mass * spec.omega)) * (a.entries + a_dag.entries)
    p = 1j * np.sqrt(spec.mass * spec.omega / 2.0) * (a_dag.entries - a.entries)
    return OperatorMatrix(x, "position"), OperatorMatrix(p, "momentum")


def system_hamiltonian(spec: SystemSpec, bath: BathSpec) -> OperatorMatrix:
    """H_S = omega (n + 1/2) + G_R x^2, with G_R = gamma E_c / 2 when the
    counterterm is on and zero otherwise."""
    _, _, n = build_ladder(spec)
    h = spec.omega * (n.entries + 0.5 * np.eye(spec.dim))
    if spec.counterterm and bath.gamma > 0.0:
        x, _ = build_position_momentum(spec)
        h = h + reorganization_energy(bath) * (x.entries @ x.entries)
    return OperatorMatrix(h, "hamiltonian")


def gibbs_state(hamiltonian, beta: float) -> DensityMatrix:
    """exp(-beta H)/Z, computed in the eigenbasis of H.

    Eigenvalues are shifted by their minimum before exponentiating, so any
    beta >= 0 is representable: beta = 0 gives the maximally mixed state and
    beta -> inf the ground-space projector.  Negative beta is rejected.
    """
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    h = np.asarray(hamiltonian, dtype=complex)
    evals, vecs = np.linalg.eigh(h)
    w = np.exp(-beta * (evals - evals.min()))
    w /= w.sum()
    rho = (vecs * w) @ vecs.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho)


def initial_state(spec: SystemSpec) -> DensityMatrix:
    """|psi><psi| with |psi> = (|0> + |1>)/sqrt(2) in the Fock basis."""
    rho = np.zeros((spec.dim, spec.dim), dtype=complex)
    rho[:2, :2] = 0.5
    return DensityMatrix(rho)


def expectation(operator, state) -> complex:
    """Tr(operator state)."""
    op = np.asarray(operator, dtype=complex)
    rho = np.asarray(state, dtype=complex)
    if op.shape != rho.shape:
        raise ValueError(f"shape mismatch: {op.shape} vs {rho.shape}")
    return complex(np.sum(op * rho.T))


def trace_distance(a, b) -> float:
    """(1/2) tr |a - b|; the difference is Hermitized before diagonalizing."""
    da = np.asarray(a, dtype=complex)
    db = np.asarray(b, dtype=complex)
    if da.shape != db.shape:
        raise ValueError(f"shape mismatch: {da.shape} vs {db.shape}")
    diff = da - db
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def offdiag_distance(a, b) -> float:
    """sqrt(sum_{i != j} |a_ij - b_ij|^2), both operands in the same basis.

    The benchmark evaluates it in the energy eigenbasis, where it isolates the
    coherence error that population-only metrics miss.
    """
    da = np.asarray(a, dtype=complex)
    db = np.asarray(b, dtype=complex)
    if da.shape != db.shape:
        raise ValueError(f"shape mismatch: {da.shape} vs {db.shape}")
    diff = np.array(da - db)
    np.fill_diagonal(diff, 0.0)
    return float(np.sqrt(np.sum(np.abs(diff) ** 2)))
