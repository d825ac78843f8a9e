"""Exact damped-oscillator machinery: moment flow, time-local generator
coefficients, and the stationary Gaussian state."""

import numpy as np
import pytest

from oqs_bench import (
    BathSpec,
    ExactMoments,
    SystemSpec,
    benchmark_initial_state,
    build_position_momentum,
    evolve,
    exact_moments,
    expectation,
    default_coefficient_grid,
    fundamental_solutions,
    hpz_asymptotic_liouvillian,
    hpz_asymptotics,
    hpz_coefficients,
    hpz_liouvillian,
    initial_state,
    stationary_covariance,
    stationary_gaussian_state,
    steady_state,
    trace_distance,
)

SPEC = SystemSpec(dim=12)


def test_zero_coupling_coefficients_are_free_oscillator():
    bath = BathSpec(gamma=0.0, beta=1.0, cutoff=5.0)
    spec = SystemSpec(dim=6, omega=1.4)
    grid = np.linspace(0.0, 8.0, 101)
    coeffs = hpz_coefficients(bath, spec, grid)
    assert np.max(np.abs(coeffs.gamma_x - 1.4**2)) < 1e-10
    assert np.max(np.abs(coeffs.gamma_p)) < 1e-10
    assert np.max(np.abs(coeffs.d_x)) < 1e-12
    assert np.max(np.abs(coeffs.d_p)) < 1e-12


def test_coefficient_transient_then_plateau():
    # gamma/omega = 0.1, E_c = 5, beta omega = 1: the momentary frequency
    # starts at the bare-plus-counterterm value omega^2 + gamma E_c and
    # relaxes onto its asymptote after a transient
    bath = BathSpec(gamma=0.1, beta=1.0, cutoff=5.0)
    grid = np.linspace(0.0, 10.0, 2001)
    coeffs = hpz_coefficients(bath, SPEC, grid)
    assert coeffs.gamma_x[0] == pytest.approx(1.0 + 0.1 * 5.0, rel=1e-8)
    late = grid > 8.0
    assert np.max(np.abs(coeffs.gamma_x[late] - coeffs.gamma_x_inf)) < 1e-8
    assert np.max(np.abs(coeffs.gamma_p[late] - coeffs.gamma_p_inf)) < 1e-8
    assert np.max(np.abs(coeffs.d_p[late] - coeffs.d_p_inf)) < 1e-8
    # the transient actually departs from the plateau before settling
    assert np.max(np.abs(coeffs.gamma_x - coeffs.gamma_x_inf)) > 0.2
    assert np.max(np.abs(coeffs.d_p - coeffs.d_p_inf)) > 0.02


def test_static_limit_asymptotics_frozen_values():
    # ultraweak, high-temperature regime; values cross-checked against the
    # static closed forms (gamma_x -> omega^2, gamma_p -> gamma,
    # D_p -> gamma/(m beta)) and frozen here at full precision
    bath = BathSpec(gamma=0.01, beta=0.1, cutoff=5.0)
    gx, gp, dx, dp = hpz_asymptotics(bath, SPEC)
    assert gx == pytest.approx(1.00193022, rel=1e-7)
    assert gp == pytest.approx(0.00963251283, rel=1e-7)
    assert dp == pytest.approx(0.0964091803, rel=1e-7)
    assert dx == pytest.approx(0.0189243114, rel=1e-7)


def test_fundamental_solutions_initial_conditions_and_decay():
    bath = BathSpec(gamma=0.3, beta=1.0, cutoff=5.0)
    t = np.linspace(0.0, 6.0, 1201)
    phi, phid = fundamental_solutions(bath, SPEC, t)
    assert np.max(np.abs(phi[0] - np.eye(2))) < 1e-12
    # returned derivative matches a central difference of phi
    dt = t[1] - t[0]
    fd = (phi[2:] - phi[:-2]) / (2.0 * dt)
    assert np.max(np.abs(fd - phid[1:-1])) < 1e-3
    # dissipative flow: the propagator of the mean dies out
    phi_late, _ = fundamental_solutions(bath, SPEC, np.array([0.0, 120.0]))
    assert np.max(np.abs(phi_late[-1])) < 1e-6


def test_exact_moments_start_from_benchmark_state():
    bath = BathSpec(gamma=0.2, beta=1.0, cutoff=5.0)
    moments = exact_moments(bath, SPEC, np.array([0.0, 1.0]))
    x, p = build_position_momentum(SPEC)
    rho = initial_state(SPEC).entries
    mx = expectation(x, rho).real
    mp = expectation(p, rho).real
    assert moments.mean[0, 0] == pytest.approx(mx, abs=1e-12)
    assert moments.mean[0, 1] == pytest.approx(mp, abs=1e-12)
    vxx = expectation(x.entries @ x.entries, rho).real - mx * mx
    assert moments.covariance[0, 0, 0] == pytest.approx(vxx, abs=1e-12)


def test_zero_coupling_moments_rotate_at_bare_frequency():
    bath = BathSpec(gamma=0.0, beta=1.0, cutoff=5.0)
    spec = SystemSpec(dim=8)
    t = np.linspace(0.0, 7.0, 141)
    moments = exact_moments(bath, spec, t)
    x0, p0 = moments.mean[0]
    ref_x = x0 * np.cos(t) + p0 * np.sin(t)
    ref_p = p0 * np.cos(t) - x0 * np.sin(t)
    assert np.max(np.abs(moments.mean[:, 0] - ref_x)) < 1e-10
    assert np.max(np.abs(moments.mean[:, 1] - ref_p)) < 1e-10


def test_exact_moments_uncertainty_invariant():
    with pytest.raises(ValueError):
        ExactMoments(
            times=np.array([0.0]),
            mean=np.zeros((1, 2)),
            covariance=np.array([[[0.3, 0.0], [0.0, 0.3]]]),  # det 0.09 < 1/4
        )


def test_moment_flow_matches_density_matrix_evolution():
    """Gaussian moment flow vs direct integration of the time-local
    generator: two independent constructions of the same evolution."""
    bath = BathSpec(gamma=0.1, beta=1.0, cutoff=5.0)
    spec = SystemSpec(dim=40)
    t_final = 5.0
    grid = default_coefficient_grid(bath, spec, t_final)
    gen = hpz_liouvillian(hpz_coefficients(bath, spec, grid), spec)
    traj = evolve(gen, benchmark_initial_state(gen), t_final, samples=11)
    moments = exact_moments(bath, spec, traj.times)
    x, p = build_position_momentum(spec)
    xs = x.entries
    ps = p.entries
    for k, rho in enumerate(traj.states):
        mx = expectation(xs, rho).real
        mp = expectation(ps, rho).real
        assert mx == pytest.approx(moments.mean[k, 0], abs=1e-8)
        assert mp == pytest.approx(moments.mean[k, 1], abs=1e-8)
        vxx = expectation(xs @ xs, rho).real - mx * mx
        vpp = expectation(ps @ ps, rho).real - mp * mp
        vxp = expectation(0.5 * (xs @ ps + ps @ xs), rho).real - mx * mp
        assert vxx == pytest.approx(moments.covariance[k, 0, 0], abs=1e-5)
        assert vpp == pytest.approx(moments.covariance[k, 1, 1], abs=1e-5)
        assert vxp == pytest.approx(moments.covariance[k, 0, 1], abs=1e-5)


def test_stationary_covariance_matches_response_quadrature_oracle():
    # reference values from an independent fluctuation-dissipation
    # quadrature of the exact response function, frozen at full precision
    bath = BathSpec(gamma=1.0, beta=5.0, cutoff=1.0)
    v = stationary_covariance(bath, SPEC)
    assert v[0, 0] == pytest.approx(0.47212521031, rel=1e-9)
    assert v[1, 1] == pytest.approx(0.66157202716, rel=1e-9)
    assert abs(v[0, 1]) < 1e-12 and abs(v[1, 0]) < 1e-12
    assert v[0, 0] * v[1, 1] >= 0.25


def test_stationary_gaussian_state_reproduces_covariance():
    # dim 40 buries the Fock-space projection error below 1e-7 relative
    bath = BathSpec(gamma=0.3, beta=1.0, cutoff=1.0)
    spec = SystemSpec(dim=40)
    rho = stationary_gaussian_state(bath, spec)
    v = stationary_covariance(bath, spec)
    x, p = build_position_momentum(spec)
    vxx = expectation(x.entries @ x.entries, rho).real
    vpp = expectation(p.entries @ p.entries, rho).real
    assert vxx == pytest.approx(v[0, 0], rel=1e-6)
    assert vpp == pytest.approx(v[1, 1], rel=1e-6)


def test_frozen_generator_fixed_point_is_stationary_gaussian():
    # nullspace of the frozen generator vs the projected Gaussian: the two
    # routes approach each other as the truncation error dies (6e-4 at
    # dim 16, 4e-9 at dim 40)
    bath = BathSpec(gamma=0.2, beta=1.0, cutoff=1.0)
    spec = SystemSpec(dim=40)
    gen = hpz_asymptotic_liouvillian(bath, spec)
    result = steady_state(gen)
    ref = stationary_gaussian_state(bath, spec).entries
    assert trace_distance(result.state.entries, ref) < 1e-7


def test_liouvillian_rejects_times_outside_coefficient_grid():
    bath = BathSpec(gamma=0.1, beta=1.0, cutoff=5.0)
    grid = np.linspace(0.0, 2.0, 201)
    gen = hpz_liouvillian(hpz_coefficients(bath, SPEC, grid), SPEC)
    rho = benchmark_initial_state(gen)
    gen.apply(1.5, rho)
    with pytest.raises(ValueError):
        gen.apply(2.5, rho)


def test_default_coefficient_grid_shape():
    bath = BathSpec(gamma=0.1, beta=1.0, cutoff=5.0)
    grid = default_coefficient_grid(bath, SPEC, 12.0)
    assert grid[0] == 0.0
    assert grid[-1] == pytest.approx(12.0)
    assert np.all(np.diff(grid) > 0.0)
    with pytest.raises(ValueError):
        default_coefficient_grid(bath, SPEC, -1.0)
