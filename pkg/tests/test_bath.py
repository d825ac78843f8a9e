"""Bath kernels: spectral densities, correlation function, coupling
densities, and the jump/Lamb kernels, each checked against an independent
route or a closed form."""

import numpy as np
import pytest
from scipy.integrate import quad

from oqs_bench import (
    ASYMPTOTIC,
    BathSpec,
    asymptotic_imag_matsubara,
    asymptotic_imag_pv,
    bath_correlation,
    correlation_modes,
    coupling_density,
    nr_f,
    nr_f_cache_info,
    nr_f_many,
    nr_h,
    reorganization_energy,
    reset_kernel_caches,
    spectral_density,
    thermal_spectral_density,
)

BATH = BathSpec(gamma=0.1, beta=1.0, cutoff=5.0)

# small parameter battery reused across kernel checks
BATTERY = (
    BathSpec(gamma=0.1, beta=1.0, cutoff=1.0),
    BathSpec(gamma=1.0, beta=0.2, cutoff=5.0),
    BathSpec(gamma=0.5, beta=5.0, cutoff=1.0),
)


def test_spectral_density_odd_and_peaks_at_cutoff(rng):
    for bath in BATTERY:
        deltas = rng.uniform(0.01, 10.0, size=20)
        j_plus = spectral_density(deltas, bath)
        j_minus = spectral_density(-deltas, bath)
        assert np.max(np.abs(j_plus + j_minus)) < 1e-14
        assert np.all(j_plus > 0.0)
        # d/dDelta [Delta/(1 + Delta^2/E^2)] = 0 exactly at Delta = E_c
        grid = np.linspace(0.05, 10 * bath.cutoff, 4001)
        peak = grid[np.argmax(spectral_density(grid, bath))]
        assert abs(peak - bath.cutoff) < grid[1] - grid[0] + 1e-12


def test_thermal_spectral_density_positive_with_detailed_balance(rng):
    for bath in BATTERY:
        deltas = rng.uniform(-8.0, 8.0, size=30)
        w_plus = thermal_spectral_density(deltas, bath)
        w_minus = thermal_spectral_density(-deltas, bath)
        assert np.all(w_plus > 0.0)
        # W(-Delta) = e^{beta Delta} W(Delta), exactly
        ratio = w_minus / (np.exp(bath.beta * deltas) * w_plus)
        assert np.max(np.abs(ratio - 1.0)) < 1e-10
        assert thermal_spectral_density(0.0, bath) == pytest.approx(
            bath.gamma / (np.pi * bath.beta), rel=1e-12
        )


def test_reorganization_energy_matches_quadrature():
    for bath in BATTERY:
        ref, _ = quad(lambda w: spectral_density(w, bath) / w, 0.0, np.inf, limit=200)
        assert reorganization_energy(bath) == pytest.approx(ref, rel=1e-9)


def test_bath_correlation_conjugate_symmetry_and_imag_closed_form():
    for tau in (0.05, 0.3, 1.7):
        c = bath_correlation(tau, BATH)
        assert bath_correlation(-tau, BATH) == pytest.approx(np.conj(c), abs=1e-12)
        # Im C(tau) = -(gamma E_c^2 / 2) e^{-E_c tau} for the Drude form
        imag_ref = -(BATH.gamma * BATH.cutoff**2 / 2.0) * np.exp(-BATH.cutoff * tau)
        assert c.imag == pytest.approx(imag_ref, rel=1e-8)


def test_bath_correlation_matches_exponential_mode_sum():
    # quadrature route vs the Matsubara mode decomposition, independent
    # evaluations of the same function
    weights, rates = correlation_modes(BATH, n_terms=4000)
    for tau in (0.1, 0.5, 1.0, 3.0):
        ref = complex(np.sum(weights * np.exp(-rates * tau)))
        val = bath_correlation(tau, BATH)
        assert val == pytest.approx(ref, rel=1e-8, abs=1e-12)
    g0 = BathSpec(gamma=0.0, beta=1.0, cutoff=1.0)
    assert bath_correlation(0.7, g0) == 0.0
    w0, r0 = correlation_modes(g0)
    assert w0.size == 0 and r0.size == 0


def test_finite_time_coupling_density_matches_correlation_quadrature():
    """G_t(Delta) = int_0^t C(tau) e^{-i Delta tau} dtau.

    The direct quadrature uses tau = u^2 on the first panel to absorb the
    logarithmic derivative of Re C at tau = 0, then plain Gauss-Legendre.
    """
    bath = BathSpec(gamma=0.1, beta=1.0, cutoff=1.0)
    t_h = 5.0
    xu, wu = np.polynomial.legendre.leggauss(120)
    u = 0.5 * (xu + 1.0)
    tau = np.concatenate([u * u, 0.5 * (xu + 1.0) * (t_h - 1.0) + 1.0])
    wts = np.concatenate([0.5 * wu * 2.0 * u, 0.5 * wu * (t_h - 1.0)])
    cvals = np.array([bath_correlation(t, bath) for t in tau])
    for delta in (-1.0, 0.5, 2.0):
        ref = np.sum(wts * cvals * np.exp(-1j * delta * tau))
        gt = coupling_density(delta, t_h, bath)
        assert abs(gt.value - ref) / abs(ref) < 1e-6


def test_coupling_density_converges_to_asymptote():
    bath = BathSpec(gamma=0.1, beta=1.0, cutoff=5.0)
    t_long = 50.0 / bath.gamma
    for delta in (-2.0, -0.5, 1.0, 3.0):
        g_inf = coupling_density(delta, ASYMPTOTIC, bath)
        g_t = coupling_density(delta, t_long, bath)
        assert abs(g_t.value - g_inf.value) < 1e-4 * abs(g_inf.value)
        # asymptotic real part is pi W(Delta), nonnegative
        assert g_inf.real_part == pytest.approx(
            np.pi * thermal_spectral_density(delta, bath), rel=1e-12
        )
        assert g_inf.real_part >= 0.0


def test_asymptotic_imag_dual_routes_agree():
    for bath in BATTERY:
        for delta in np.linspace(-3.0, 3.0, 7):
            a = asymptotic_imag_matsubara(delta, bath)
            b = asymptotic_imag_pv(delta, bath)
            assert abs(a - b) < 1e-6 * max(1.0, abs(a))


def test_nr_h_square_root_of_thermal_density(rng):
    for bath in BATTERY:
        deltas = rng.uniform(-6.0, 6.0, size=20)
        h = np.array([nr_h(d, bath) for d in deltas])
        w = thermal_spectral_density(deltas, bath)
        assert np.max(np.abs(h * h - w / (2.0 * np.pi))) < 1e-14
        assert np.all(h > 0.0)
        # detailed balance of the amplitudes
        h_m = np.array([nr_h(-d, bath) for d in deltas])
        assert np.max(np.abs(h / h_m - np.exp(-0.5 * bath.beta * deltas))) < 1e-9
        assert nr_h(0.0, bath) == pytest.approx(
            np.sqrt(bath.gamma / (2.0 * np.pi**2 * bath.beta)), rel=1e-12
        )


def _f_cauchy(d1, d2, bath, cut=40.0):
    """Direct principal-value route for the f kernel, independent of the
    symmetric fold used by nr_f: Cauchy-weight quadrature around w = 0 plus
    plain tails."""

    def g(w):
        return nr_h(w + d1, bath) * nr_h(w - d2, bath)

    core, _ = quad(g, -cut, cut, weight="cauchy", wvar=0.0, limit=400)
    hi, _ = quad(lambda w: g(w) / w, cut, np.inf, limit=400)
    lo, _ = quad(lambda w: g(w) / w, -np.inf, -cut, limit=400)
    return 2.0 * np.pi * (core + hi + lo)


def test_nr_f_matches_cauchy_principal_value_route(rng):
    for bath in BATTERY:
        for _ in range(3):
            d1, d2 = rng.uniform(-3.0, 3.0, size=2)
            ref = _f_cauchy(d1, d2, bath)
            val = nr_f(d1, d2, bath)
            assert abs(val - ref) < 1e-8 * max(1.0, abs(ref))


def test_nr_f_symmetry_under_argument_swap(rng):
    # f(D1, D2) = f(-D2, -D1) holds identically: the swap maps the defining
    # integrand h(w+D1) h(w-D2) onto h(w-D2) h(w+D1), the same function, and
    # the cache canonicalization makes the two calls share one quadrature.
    for bath in BATTERY:
        for _ in range(4):
            d1, d2 = rng.uniform(-3.0, 3.0, size=2)
            assert nr_f(d1, d2, bath) == nr_f(-d2, -d1, bath)


def test_nr_f_many_matches_single_evaluations(rng):
    bath = BathSpec(gamma=0.3, beta=0.7, cutoff=2.0)
    pairs = [tuple(rng.uniform(-2.0, 2.0, size=2)) for _ in range(8)]
    pairs.append(pairs[0])  # duplicate exercises the cache path
    batch = nr_f_many(pairs, bath)
    singles = np.array([nr_f(d1, d2, bath) for d1, d2 in pairs])
    assert np.max(np.abs(batch - singles)) < 1e-12
    assert batch[-1] == batch[0]


def test_f_cache_counts_distinct_quadratures():
    reset_kernel_caches()
    bath = BathSpec(gamma=0.2, beta=1.3, cutoff=1.0)
    nr_f(0.4, -0.9, bath)
    hits0, misses0, size0 = nr_f_cache_info()
    assert (misses0, size0) == (1, 1)
    nr_f(0.9, -0.4, bath)  # swapped orientation shares the cache entry
    hits1, misses1, size1 = nr_f_cache_info()
    assert (hits1, misses1, size1) == (hits0 + 1, 1, 1)
    reset_kernel_caches()
    assert nr_f_cache_info() == (0, 0, 0)


def test_bath_spec_validation():
    with pytest.raises(ValueError):
        BathSpec(gamma=-0.1, beta=1.0, cutoff=1.0)
    with pytest.raises(ValueError):
        BathSpec(gamma=0.1, beta=0.0, cutoff=1.0)
    with pytest.raises(ValueError):
        BathSpec(gamma=0.1, beta=1.0, cutoff=-2.0)
    # Matsubara pole guard: beta * cutoff / (2 pi) may not be an integer
    with pytest.raises(ValueError):
        BathSpec(gamma=0.1, beta=2.0 * np.pi, cutoff=1.0)
    BathSpec(gamma=0.1, beta=2.0 * np.pi * 1.001, cutoff=1.0)
