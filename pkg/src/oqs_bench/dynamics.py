"""Time evolution, steady states, and benchmark error metrics.

Ties the generator layer to the benchmark protocol: integrate a generator
from the shared initial state, extract the observables the benchmarks gate
on (occupation, minimum eigenvalue, trace), solve for stationary states with
an honest residual, and reduce trajectories or stationary states to the
scalar error metrics used across the parameter scans.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .bath import ASYMPTOTIC, BathSpec
from .generators import (
    EigenFrame,
    Liouvillian,
    nr_liouvillian,
    redfield_liouvillian,
    rwa_liouvillian,
    unvec,
    vec,
)
from .hpz import (
    default_coefficient_grid,
    hpz_asymptotic_liouvillian,
    hpz_coefficients,
    hpz_liouvillian,
)
from .oscillator import (
    DensityMatrix,
    SystemSpec,
    build_ladder,
    gibbs_state,
    initial_state,
    offdiag_distance,
    system_hamiltonian,
    trace_distance,
)

__all__ = [
    "EvolutionError",
    "SteadyStateError",
    "DegenerateSteadyStateError",
    "Trajectory",
    "SteadyStateResult",
    "METHOD_NAMES",
    "build_generator",
    "build_steady_generator",
    "benchmark_initial_state",
    "thermal_start_state",
    "number_operator_in_basis",
    "evolve",
    "steady_state",
    "truncation_tail",
    "trajectory_distances",
    "average_trace_distance",
    "steady_errors",
    "positivity_diagnostics",
    "beta_tol_search",
    "relaxation_time",
]

TRACE_DRIFT_TOL = 1e-6

_trapz = getattr(np, "trapezoid", np.trapz)


class EvolutionError(RuntimeError):
    """Integration failed or the trajectory violated a hard invariant."""


class SteadyStateError(RuntimeError):
    """Stationary-state solve failed to reach the requested residual."""


class DegenerateSteadyStateError(SteadyStateError):
    """No unique stationary state (closed dynamics, gamma = 0)."""


# ---------------------------------------------------------------------------
# containers


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled solution of a master equation.

    states has shape (T, d, d), Hermitized sample by sample, in the basis
    named by `basis` (the generator's working basis).  observables carries
    the benchmark series: n_expect, min_eig, and trace.  A trace drift
    beyond 1e-6 fails construction; positivity is deliberately allowed to
    break, since tracking that breakdown is part of the benchmark.
    """

    times: np.ndarray
    states: np.ndarray
    observables: dict
    basis: str
    frame: EigenFrame | None = None

    def __post_init__(self):
        tr = self.observables.get("trace")
        if tr is None:
            raise ValueError("observables must include a trace series")
        drift = float(np.max(np.abs(np.asarray(tr) - 1.0)))
        if not drift < TRACE_DRIFT_TOL:
            raise EvolutionError(
                f"trace drift {drift:.3e} exceeds {TRACE_DRIFT_TOL}"
            )

    def states_in_fock_basis(self) -> np.ndarray:
        if self.basis == "fock":
            return self.states
        v = self.frame.vectors
        return np.einsum("ab,tbc,dc->tad", v, self.states, v.conj())


@dataclass(frozen=True, eq=False)
class SteadyStateResult:
    """Stationary state plus the evidence for it.

    residual is ||L vec(rho)||_2 for the nullspace route and the trace
    distance between the two latest probe times for the long-time route.
    positivity_min_eig < 0 flags a stationary state outside state space,
    which for the non-GKSL methods is physics, not failure.
    """

    state: DensityMatrix
    method: str
    residual: float
    positivity_min_eig: float
    basis: str
    frame: EigenFrame | None = None

    def state_in_fock_basis(self) -> np.ndarray:
        rho = self.state.entries
        if self.basis == "fock":
            return rho
        v = self.frame.vectors
        return v @ rho @ v.conj().T


# ---------------------------------------------------------------------------
# generator dispatch

METHOD_NAMES = ("exact", "redfield", "redfield_ti", "rwa", "nr")


def build_generator(
    method: str,
    spec: SystemSpec,
    bath: BathSpec,
    t_max: float | None = None,
) -> Liouvillian:
    """Generator for transient evolution.

    `exact` needs t_max to size its coefficient grid; the approximate
    methods ignore it.  `redfield` is the time-dependent variant;
    `redfield_ti` freezes the kernel at its asymptotic value.
    """
    if method == "exact":
        if t_max is None:
            raise ValueError("exact transient generator requires t_max")
        grid = default_coefficient_grid(bath, spec, t_max)
        coeffs = hpz_coefficients(bath, spec, grid)
        return hpz_liouvillian(coeffs, spec)
    if method == "redfield":
        return redfield_liouvillian(spec, bath, horizon="time-dependent")
    if method == "redfield_ti":
        return redfield_liouvillian(spec, bath, horizon=ASYMPTOTIC)
    if method == "rwa":
        return rwa_liouvillian(spec, bath)
    if method == "nr":
        return nr_liouvillian(spec, bath)
    raise ValueError(f"unknown method {method!r}; expected one of {METHOD_NAMES}")


def build_steady_generator(method: str, spec: SystemSpec, bath: BathSpec) -> Liouvillian:
    """Generator whose fixed point defines the method's stationary state.

    The time-dependent kernel relaxes to its asymptotic value, so the
    stationary state of `redfield` is that of `redfield_ti`; `exact` uses
    the asymptotic-coefficient exact generator.
    """
    if method == "exact":
        return hpz_asymptotic_liouvillian(bath, spec)
    if method == "redfield":
        return redfield_liouvillian(spec, bath, horizon=ASYMPTOTIC)
    return build_generator(method, spec, bath)


def benchmark_initial_state(generator: Liouvillian) -> np.ndarray:
    """The shared initial state, rotated into the generator's basis."""
    rho = initial_state(generator.spec).entries
    if generator.basis == "eigen":
        v = generator.frame.vectors
        rho = v.conj().T @ rho @ v
    return rho


def thermal_start_state(generator: Liouvillian) -> np.ndarray:
    """Gibbs state of the system Hamiltonian in the generator's basis."""
    beta = generator.bath.beta
    if generator.basis == "eigen":
        e = generator.frame.energies
        w = np.exp(-beta * (e - e.min()))
        return np.diag(w / w.sum()).astype(complex)
    h = system_hamiltonian(generator.spec, generator.bath)
    return gibbs_state(h, beta).entries


def number_operator_in_basis(generator: Liouvillian) -> np.ndarray:
    n = np.diag(np.arange(generator.spec.dim, dtype=float))
    if generator.basis == "eigen":
        v = generator.frame.vectors
        return v.conj().T @ n @ v
    return n


# ---------------------------------------------------------------------------
# time evolution


def evolve(
    generator: Liouvillian,
    rho0,
    t_final: float,
    samples: int = 400,
    rtol: float = 1e-9,
    atol: float = 1e-11,
    method: str = "DOP853",
) -> Trajectory:
    """Integrate drho/dt = L_t(rho) from t = 0 and sample uniformly.

    rho0 must already be expressed in the generator's basis.  Sampled states
    are Hermitized; the trace series is gated at 1e-6 drift.  Negative
    eigenvalues are recorded, not rejected.
    """
    if t_final <= 0:
        raise ValueError(f"t_final must be > 0, got {t_final}")
    if samples < 2:
        raise ValueError(f"samples must be >= 2, got {samples}")
    rho0 = np.asarray(rho0, dtype=complex)
    d = generator.dim
    if rho0.shape != (d, d):
        raise ValueError(f"rho0 shape {rho0.shape} does not match dim {d}")
    apply = generator.apply

    def rhs(t, y):
        return apply(t, y.reshape(d, d, order="F")).reshape(-1, order="F")

    times = np.linspace(0.0, t_final, samples)
    sol = solve_ivp(
        rhs,
        (0.0, t_final),
        rho0.reshape(-1, order="F"),
        method=method,
        t_eval=times,
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise EvolutionError(f"integration failed: {sol.message}")
    states = np.ascontiguousarray(
        np.transpose(sol.y.reshape(d, d, samples, order="F"), (2, 0, 1))
    )
    states = 0.5 * (states + np.conj(np.transpose(states, (0, 2, 1))))
    n_op = number_operator_in_basis(generator)
    traces = np.einsum("tii->t", states)
    n_expect = np.einsum("ij,tji->t", n_op, states).real
    min_eig = np.array([np.linalg.eigvalsh(s)[0] for s in states])
    observables = {
        "n_expect": n_expect,
        "min_eig": min_eig,
        "trace": traces.real,
    }
    drift = float(np.max(np.abs(traces - 1.0)))
    if not drift < TRACE_DRIFT_TOL:
        raise EvolutionError(f"trace drift {drift:.3e} exceeds {TRACE_DRIFT_TOL}")
    return Trajectory(
        times=times,
        states=states,
        observables=observables,
        basis=generator.basis,
        frame=generator.frame,
    )


def relaxation_time(bath: BathSpec, spec: SystemSpec) -> float:
    """Benchmark evolution window 2/(gamma omega), the weak-coupling
    relaxation scale of the oscillator."""
    if bath.gamma <= 0:
        raise ValueError("relaxation time undefined for gamma = 0")
    return 2.0 / (bath.gamma * spec.omega)


# ---------------------------------------------------------------------------
# stationary states


def _nullspace_state(generator: Liouvillian):
    a = generator.matrix_form
    d = generator.dim
    n = d * d
    diag_idx = np.arange(d) * (d + 1)

    a_csr = a.tocsr()
    scale = float(np.max(np.abs(a_csr.data))) if a_csr.nnz else 0.0
    if scale == 0.0:
        raise DegenerateSteadyStateError("generator vanishes identically")

    # replace the first row by the trace functional; solve M x = e_0
    m = a_csr.tolil()
    m[0, :] = 0.0
    m[0, diag_idx] = 1.0
    b = np.zeros(n, dtype=complex)
    b[0] = 1.0

    density = a_csr.nnz / (n * n)
    try:
        if density > 0.05 and n <= 4200:
            md = m.toarray()
            lu, piv = sla.lu_factor(md)
            x = sla.lu_solve((lu, piv), b)
            for _ in range(4):
                r = b - md @ x
                if np.linalg.norm(r) < 1e-13 * scale:
                    break
                x = x + sla.lu_solve((lu, piv), r)
        else:
            mc = m.tocsc()
            lu = spla.splu(mc)
            x = lu.solve(b)
            for _ in range(4):
                r = b - mc @ x
                if np.linalg.norm(r) < 1e-13 * scale:
                    break
                x = x + lu.solve(r)
    except RuntimeError as err:
        raise SteadyStateError(f"stationary solve failed: {err}") from err
    if not np.all(np.isfinite(x)):
        raise SteadyStateError("stationary solve returned non-finite entries")

    rho = unvec(x)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho)
    if abs(tr) < 1e-12:
        raise SteadyStateError("stationary solve returned a traceless matrix")
    rho = rho / tr
    residual = float(np.linalg.norm(a_csr @ vec(rho)))
    if residual > 1e-8 * max(1.0, scale):
        raise SteadyStateError(
            f"stationary residual {residual:.3e} too large for scale {scale:.3e}"
        )
    return rho, residual


def _long_time_state(generator: Liouvillian, rtol, atol):
    if generator.time_dependent:
        raise SteadyStateError(
            "long-time route needs a time-independent generator"
        )
    spec, bath = generator.spec, generator.bath
    horizon = 50.0 / (bath.gamma * spec.omega)
    rho = thermal_start_state(generator)
    for _ in range(6):
        traj = evolve(generator, rho, horizon, samples=3, rtol=rtol, atol=atol)
        drift = trace_distance(traj.states[2], traj.states[1])
        rho = traj.states[2]
        if drift < 1e-8:
            return rho / np.trace(rho).real, float(drift)
        horizon *= 2.0
    raise SteadyStateError(
        f"long-time evolution not stationary: drift {drift:.3e} at t = {horizon}"
    )


def steady_state(
    generator: Liouvillian,
    method: str = "auto",
    rtol: float = 1e-9,
    atol: float = 1e-11,
) -> SteadyStateResult:
    """Stationary state of a time-independent generator.

    `nullspace` solves L vec(rho) = 0 with the trace condition spliced into
    the linear system (dense LU above 5% fill, sparse LU otherwise, with
    iterative refinement); `long_time` integrates from the Gibbs state until
    two successive probe times agree; `auto` picks nullspace whenever a
    matrix form exists.  gamma = 0 has no unique stationary state and raises.
    """
    if generator.bath.gamma == 0.0:
        raise DegenerateSteadyStateError(
            "gamma = 0 evolution is unitary; every energy population is conserved"
        )
    if method == "auto":
        method = "nullspace" if generator.matrix_form is not None else "long_time"
    if method == "nullspace":
        if generator.matrix_form is None:
            raise SteadyStateError("generator carries no matrix form")
        rho, residual = _nullspace_state(generator)
    elif method == "long_time":
        rho, residual = _long_time_state(generator, rtol, atol)
    else:
        raise ValueError(f"unknown steady-state method {method!r}")
    min_eig = float(np.linalg.eigvalsh(rho)[0])
    return SteadyStateResult(
        state=DensityMatrix(rho),
        method=method,
        residual=residual,
        positivity_min_eig=min_eig,
        basis=generator.basis,
        frame=generator.frame,
    )


def truncation_tail(state, fraction: float = 0.1) -> float:
    """Population in the top ceil(dim * fraction) levels of the basis the
    state is expressed in; the scan layer gates references on it."""
    rho = np.asarray(state, dtype=complex)
    d = rho.shape[0]
    k = max(1, int(np.ceil(d * fraction)))
    return float(np.sum(np.diag(rho)[d - k :].real))


# ---------------------------------------------------------------------------
# error metrics


def trajectory_distances(a: Trajectory, b: Trajectory) -> np.ndarray:
    """Pointwise trace distance between two trajectories on one grid.

    Bases may differ; both are rotated to the Fock basis first (the trace
    distance itself is basis-independent, the subtraction is not).
    """
    if a.times.shape != b.times.shape or not np.allclose(
        a.times, b.times, rtol=0.0, atol=1e-12 * max(1.0, float(a.times[-1]))
    ):
        raise ValueError("trajectories must share their time grid")
    sa = a.states_in_fock_basis() if a.basis != b.basis else a.states
    sb = b.states_in_fock_basis() if a.basis != b.basis else b.states
    return np.array([trace_distance(x, y) for x, y in zip(sa, sb)])


def average_trace_distance(a: Trajectory, b: Trajectory) -> float:
    """Time average (1/T) int_0^T d(rho_a, rho_b) dt on the shared grid."""
    d = trajectory_distances(a, b)
    return float(_trapz(d, a.times) / (a.times[-1] - a.times[0]))


def steady_errors(
    method_result: SteadyStateResult,
    exact_result: SteadyStateResult,
    gamma: float,
) -> dict:
    """Stationary error metrics of a method against the exact reference.

    Returns trace_dist, trace_dist_over_gamma, and od_dist_over_gamma, the
    off-diagonal (coherence) error in the system eigenbasis scaled by the
    coupling.  The eigenbasis is taken from whichever result carries a
    frame; with both in the Fock basis the off-diagonal metric would lose
    its meaning, so that case is rejected.
    """
    frame = method_result.frame or exact_result.frame
    if frame is None:
        raise ValueError("off-diagonal metric needs an eigenbasis frame")
    v = frame.vectors
    rho_m = method_result.state_in_fock_basis()
    rho_e = exact_result.state_in_fock_basis()
    d = trace_distance(rho_m, rho_e)
    m_eig = v.conj().T @ rho_m @ v
    e_eig = v.conj().T @ rho_e @ v
    d_od = offdiag_distance(m_eig, e_eig)
    return {
        "trace_dist": float(d),
        "trace_dist_over_gamma": float(d / gamma),
        "od_dist_over_gamma": float(d_od / gamma),
    }


def positivity_diagnostics(traj: Trajectory) -> dict:
    """Extrema of the positivity-sensitive observables along a trajectory."""
    t = traj.times
    min_eig = traj.observables["min_eig"]
    n_expect = traj.observables["n_expect"]
    i_eig = int(np.argmin(min_eig))
    i_n = int(np.argmin(n_expect))
    return {
        "min_eig": float(min_eig[i_eig]),
        "t_min_eig": float(t[i_eig]),
        "min_n_expect": float(n_expect[i_n]),
        "t_min_n_expect": float(t[i_n]),
        "max_trace_error": float(np.max(np.abs(traj.observables["trace"] - 1.0))),
    }


def beta_tol_search(
    make_generator,
    beta_lo: float = 0.02,
    beta_hi: float = 5.0,
    tail_limit: float = 1e-3,
    rel_tol: float = 0.05,
) -> dict:
    """Smallest inverse temperature at which the stationary state still fits
    the truncated basis.

    make_generator(beta) must return a time-independent generator.  The
    predicate is truncation_tail(steady state) <= tail_limit: colder states
    (larger beta) concentrate at the bottom of the spectrum and pass, hotter
    ones spread upward and fail.  Geometric bisection on beta down to
    rel_tol; returns the smallest beta verified to pass, its tail, and the
    number of stationary solves.
    """

    evaluations = 0

    def tail_at(beta):
        nonlocal evaluations
        evaluations += 1
        result = steady_state(make_generator(beta))
        return truncation_tail(result.state.entries)

    if tail_at(beta_hi) > tail_limit:
        raise SteadyStateError(
            f"stationary state at beta = {beta_hi} already exceeds the tail limit"
        )
    if tail_at(beta_lo) <= tail_limit:
        return {"beta_tol": beta_lo, "tail": tail_at(beta_lo), "evaluations": evaluations}
    lo, hi = beta_lo, beta_hi
    while hi / lo > 1.0 + rel_tol:
        mid = float(np.sqrt(lo * hi))
        if tail_at(mid) <= tail_limit:
            hi = mid
        else:
            lo = mid
    return {"beta_tol": hi, "tail": tail_at(hi), "evaluations": evaluations}
