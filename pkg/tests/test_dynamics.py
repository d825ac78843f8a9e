"""Evolution, stationary-state solvers, and the benchmark error metrics."""

import numpy as np
import pytest

from oqs_bench import (
    BathSpec,
    DegenerateSteadyStateError,
    SteadyStateError,
    SystemSpec,
    Trajectory,
    average_trace_distance,
    benchmark_initial_state,
    beta_tol_search,
    build_generator,
    build_steady_generator,
    evolve,
    gibbs_state,
    initial_state,
    positivity_diagnostics,
    relaxation_time,
    steady_errors,
    steady_state,
    system_hamiltonian,
    thermal_start_state,
    trace_distance,
    trajectory_distances,
    truncation_tail,
)

SPEC = SystemSpec(dim=12)
BATH = BathSpec(gamma=0.1, beta=1.0, cutoff=1.0)


def test_benchmark_initial_state_rotates_with_basis():
    gen = build_generator("nr", SPEC, BATH)  # eigenbasis generator
    rho_eigen = benchmark_initial_state(gen)
    v = gen.frame.vectors
    back = v @ rho_eigen @ v.conj().T
    assert np.max(np.abs(back - initial_state(SPEC).entries)) < 1e-12
    gen_fock = build_generator("exact", SPEC, BATH, t_max=1.0)
    assert np.max(
        np.abs(benchmark_initial_state(gen_fock) - initial_state(SPEC).entries)
    ) < 1e-14


def test_thermal_start_state_matches_gibbs_in_both_bases():
    ref = gibbs_state(system_hamiltonian(SPEC, BATH), BATH.beta).entries
    gen_eigen = build_generator("rwa", SPEC, BATH)
    v = gen_eigen.frame.vectors
    rho = v @ thermal_start_state(gen_eigen) @ v.conj().T
    assert np.max(np.abs(rho - ref)) < 1e-12
    # fock-basis path: the frozen-asymptotic exact generator carries the bath
    gen_fock = build_steady_generator("exact", SPEC, BATH)
    assert np.max(np.abs(thermal_start_state(gen_fock) - ref)) < 1e-12


def test_zero_coupling_evolution_is_unitary():
    bath0 = BathSpec(gamma=0.0, beta=1.0, cutoff=1.0)
    gen = build_generator("rwa", SPEC, bath0)
    traj = evolve(gen, benchmark_initial_state(gen), 6.0, samples=61)
    n = traj.observables["n_expect"]
    assert np.max(np.abs(n - n[0])) < 1e-9
    assert np.max(np.abs(traj.observables["trace"] - 1.0)) < 1e-10
    assert np.min(traj.observables["min_eig"]) > -1e-8
    # the 01 coherence keeps its magnitude while rotating
    mags = np.abs(traj.states[:, 0, 1])
    assert np.max(np.abs(mags - mags[0])) < 1e-8


def test_evolve_validation():
    gen = build_generator("nr", SPEC, BATH)
    rho = benchmark_initial_state(gen)
    with pytest.raises(ValueError):
        evolve(gen, rho, -1.0)
    with pytest.raises(ValueError):
        evolve(gen, rho, 1.0, samples=1)
    with pytest.raises(ValueError):
        evolve(gen, np.eye(5, dtype=complex) / 5.0, 1.0)


def _constant_trajectory(rho, times):
    states = np.repeat(rho[None, :, :], times.size, axis=0)
    return Trajectory(
        times=times,
        states=states,
        observables={"trace": np.ones(times.size)},
        basis="fock",
    )


def test_trajectory_distance_metrics():
    times = np.linspace(0.0, 2.0, 9)
    a = _constant_trajectory(np.diag([1.0, 0.0, 0.0]).astype(complex), times)
    b = _constant_trajectory(np.diag([0.6, 0.4, 0.0]).astype(complex), times)
    d = trajectory_distances(a, b)
    assert np.max(np.abs(d - 0.4)) < 1e-14
    assert average_trace_distance(a, b) == pytest.approx(0.4, abs=1e-12)
    assert np.max(trajectory_distances(a, a)) == 0.0
    c = _constant_trajectory(np.diag([1.0, 0.0, 0.0]).astype(complex), times + 0.5)
    with pytest.raises(ValueError):
        trajectory_distances(a, c)


def test_trace_drift_gate_rejects_bad_series():
    times = np.linspace(0.0, 1.0, 3)
    states = np.repeat(np.diag([1.0, 0.0]).astype(complex)[None], 3, axis=0)
    with pytest.raises(Exception):
        Trajectory(
            times=times,
            states=states,
            observables={"trace": np.array([1.0, 1.0, 1.01])},
            basis="fock",
        )


def test_steady_state_routes_agree():
    gen = build_steady_generator("nr", SPEC, BATH)
    a = steady_state(gen, method="nullspace")
    b = steady_state(gen, method="long_time")
    assert trace_distance(a.state.entries, b.state.entries) < 1e-7
    assert a.residual < 1e-10
    with pytest.raises(ValueError):
        steady_state(gen, method="bogus")


def test_steady_state_zero_coupling_degenerate():
    bath0 = BathSpec(gamma=0.0, beta=1.0, cutoff=1.0)
    gen = build_generator("rwa", SPEC, bath0)
    with pytest.raises(DegenerateSteadyStateError):
        steady_state(gen)


def test_long_time_route_needs_time_independent_generator():
    gen = build_generator("redfield", SPEC, BATH)
    with pytest.raises(SteadyStateError):
        steady_state(gen, method="long_time")


def test_frozen_asymptotic_steady_matches_long_time_evolution():
    """The fixed point of the coefficient-frozen exact generator agrees with
    the end point of the time-dependent evolution run far past relaxation."""
    bath = BathSpec(gamma=0.2, beta=1.0, cutoff=1.0)
    spec = SystemSpec(dim=16)
    frozen = steady_state(build_steady_generator("exact", spec, bath))
    t_final = 320.0
    gen = build_generator("exact", spec, bath, t_max=t_final)
    traj = evolve(gen, benchmark_initial_state(gen), t_final, samples=3)
    assert trace_distance(traj.states[-1], frozen.state.entries) < 1e-6


def test_truncation_tail_counts_top_decile():
    rho = np.zeros((20, 20))
    rho[0, 0] = 0.9
    rho[18, 18] = 0.04
    rho[19, 19] = 0.06
    assert truncation_tail(rho) == pytest.approx(0.1, abs=1e-14)
    assert truncation_tail(rho, fraction=0.05) == pytest.approx(0.06, abs=1e-14)


def test_relaxation_time_rule():
    spec = SystemSpec(dim=4, omega=2.0)
    assert relaxation_time(BathSpec(gamma=0.5, beta=1.0, cutoff=1.0), spec) == 2.0
    with pytest.raises(ValueError):
        relaxation_time(BathSpec(gamma=0.0, beta=1.0, cutoff=1.0), spec)


def test_beta_tol_search_brackets_the_tail_limit():
    def make(beta):
        return build_steady_generator("nr", SPEC, BathSpec(gamma=0.5, beta=beta, cutoff=1.0))

    res = beta_tol_search(make, beta_lo=0.02, beta_hi=5.0, rel_tol=0.05)
    beta_tol = res["beta_tol"]
    assert 0.02 < beta_tol < 5.0
    assert res["tail"] <= 1e-3
    assert res["evaluations"] >= 3
    # just below the returned temperature the state no longer fits
    hotter = steady_state(make(beta_tol / 1.10)).state.entries
    assert truncation_tail(hotter) > 1e-3


def test_steady_errors_metrics_consistency():
    gen = build_steady_generator("redfield_ti", SPEC, BATH)
    exact = steady_state(build_steady_generator("exact", SPEC, BATH))
    approx = steady_state(gen)
    errs = steady_errors(approx, exact, BATH.gamma)
    direct = trace_distance(approx.state_in_fock_basis(), exact.state_in_fock_basis())
    assert errs["trace_dist"] == pytest.approx(direct, abs=1e-13)
    assert errs["trace_dist_over_gamma"] == pytest.approx(direct / BATH.gamma, abs=1e-12)
    assert errs["od_dist_over_gamma"] > 0.0
    with pytest.raises(ValueError):
        steady_errors(exact, exact, BATH.gamma)  # no eigenframe on either side


def test_positivity_diagnostics_track_extrema():
    gen = build_generator("nr", SPEC, BATH)
    traj = evolve(gen, benchmark_initial_state(gen), 3.0, samples=31)
    diag = positivity_diagnostics(traj)
    k = int(np.argmin(traj.observables["min_eig"]))
    assert diag["min_eig"] == traj.observables["min_eig"][k]
    assert diag["t_min_eig"] == traj.times[k]
    assert diag["max_trace_error"] < 1e-8
