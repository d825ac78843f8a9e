"""Exact dynamics of the damped oscillator: fundamental solutions, moments,
time-local coefficients, and the exact master-equation generator.

For a harmonic oscillator bilinearly coupled to the Ohmic-Drude bath the
Heisenberg equations close, and everything reduces to the fundamental
solutions of

    m xdd + m int_0^t ds eta(t - s) xd(s) + m w0^2 x = F(t),
    w0^2 = omega^2 + gamma E_c / m   (counterterm included),

whose Laplace denominator is the cubic s^3 + E_c s^2 + w0^2 s + E_c omega^2.
With roots s_i and P'(s) the cubic's derivative,

    G(t) = sum_i g_i e^{s_i t},  g_i  = (s_i + E_c)/P'(s_i)   (G(0)=0, Gd(0)=1),
    u(t) = sum_i ua_i e^{s_i t}, ua_i = s_i g_i               (u(0)=1, ud(0)=0).

Second moments follow from the noise kernel Re C(tau) decomposed into
exponentials; all double time integrals are then elementary.  The exact
generator is time-local with coefficients (gamma_x, gamma_p, D_x, D_p)
obtained by inverting the moment flow:

    drho/dt = -i[p^2/2m + (m/2) gamma_x x^2, rho] - i (gamma_p/2)[x, {p, rho}]
              - m^2 D_p [x, [x, rho]] + m^2 D_x [x, [p, rho]].

Everything here lives in the bare Fock basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .bath import BathSpec, correlation_modes
from .generators import Liouvillian, hamiltonian_superop
from .oscillator import (
    DensityMatrix,
    SystemSpec,
    build_position_momentum,
    expectation,
    gibbs_state,
    initial_state,
)

import scipy.sparse as sp

__all__ = [
    "ExactMoments",
    "HpzCoefficients",
    "fundamental_solutions",
    "exact_moments",
    "hpz_coefficients",
    "hpz_asymptotics",
    "stationary_covariance",
    "stationary_gaussian_state",
    "default_coefficient_grid",
    "hpz_liouvillian",
    "hpz_asymptotic_liouvillian",
]


@dataclass(frozen=True, eq=False)
class ExactMoments:
    """First and second moments along a time grid.

    mean has shape (T, 2) with columns (<x>, <p>); covariance has shape
    (T, 2, 2) in the same ordering, with the symmetrized cross element
    V_xp = <{x, p}>/2 - <x><p>.  The generalized uncertainty
    det V >= 1/4 (hbar = 1) is a constructor invariant up to 1e-9.
    """

    times: np.ndarray
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        det = (
            self.covariance[:, 0, 0] * self.covariance[:, 1, 1]
            - self.covariance[:, 0, 1] * self.covariance[:, 1, 0]
        )
        worst = float(np.min(det))
        if worst < 0.25 - 1e-9:
            raise ValueError(
                f"uncertainty violation: min det V = {worst} < 1/4 - 1e-9"
            )


@dataclass(frozen=True, eq=False)
class HpzCoefficients:
    """Time-local coefficients of the exact generator on a time grid.

    gamma_x is the momentary squared frequency, gamma_p the momentary
    friction, d_x and d_p the cross and momentum diffusion coefficients
    normalized so that the covariance flow reads

        Vd_xx = 2 V_xp / m,
        Vd_xp = V_pp / m - m gamma_x V_xx - gamma_p V_xp + m^2 d_x,
        Vd_pp = -2 m gamma_x V_xp - 2 gamma_p V_pp + 2 m^2 d_p.

    gamma_x and gamma_p derive from the fundamental solutions only, so they
    are independent of temperature; the diffusion coefficients are not.
    The *_inf fields carry the asymptotic values.
    """

    time_grid: np.ndarray
    gamma_x: np.ndarray
    gamma_p: np.ndarray
    d_x: np.ndarray
    d_p: np.ndarray
    gamma_x_inf: float
    gamma_p_inf: float
    d_x_inf: float
    d_p_inf: float

    def __post_init__(self):
        t = np.asarray(self.time_grid, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("time_grid must be a 1-d grid with >= 2 points")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time_grid must be strictly increasing")
        for name in ("gamma_x", "gamma_p", "d_x", "d_p"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != t.shape:
                raise ValueError(f"{name} must match time_grid in shape")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        object.__setattr__(self, "time_grid", t)


# ---------------------------------------------------------------------------
# fundamental solutions


def _cubic_roots(bath: BathSpec, spec: SystemSpec):
    """Roots s_i and residue weights (g_i, ua_i) of the response cubic."""
    m, w = spec.mass, spec.omega
    w0sq = w * w + bath.gamma * bath.cutoff / m
    ec = bath.cutoff
    roots = np.roots([1.0, ec, w0sq, ec * w * w])
    dP = 3.0 * roots**2 + 2.0 * ec * roots + w0sq
    g = (roots + ec) / dP
    ua = roots * g
    return roots, g, ua


def _safe_expm1_ratio(a, t):
    """E(a, t) = (e^{a t} - 1)/a for complex a, vectorized and overflow-safe."""
    a = np.asarray(a, dtype=complex)
    t = np.asarray(t, dtype=float)
    at = a * t
    small = np.abs(at) < 1e-5
    safe = np.where(small, 1.0, a)
    ex = np.exp(np.clip(at.real, None, 700.0) + 1j * at.imag)
    return np.where(small, t * (1.0 + at / 2.0 + at * at / 6.0), (ex - 1.0) / safe)


def fundamental_solutions(bath: BathSpec, spec: SystemSpec, t_grid):
    """Propagator of the mean, Phi(t) = [[u, G/m], [m ud, Gd]], plus its
    time derivative, both with shape (T, 2, 2).

    (<x>, <p>)(t) = Phi(t) (<x>, <p>)(0); u(0) = Gd(0) = 1, G(0) = ud(0) = 0.
    """
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    roots, g, ua = _cubic_roots(bath, spec)
    m = spec.mass
    ex = np.exp(roots[None, :] * t[:, None])
    u = (ex @ ua).real
    ud = (ex @ (ua * roots)).real
    udd = (ex @ (ua * roots**2)).real
    gr = (ex @ g).real
    gd = (ex @ (g * roots)).real
    gdd = (ex @ (g * roots**2)).real
    phi = np.empty((t.size, 2, 2))
    phi[:, 0, 0] = u
    phi[:, 0, 1] = gr / m
    phi[:, 1, 0] = m * ud
    phi[:, 1, 1] = gd
    phid = np.empty((t.size, 2, 2))
    phid[:, 0, 0] = ud
    phid[:, 0, 1] = gd / m
    phid[:, 1, 0] = m * udd
    phid[:, 1, 1] = gdd
    return phi, phid


# ---------------------------------------------------------------------------
# noise integrals


def _noise_modes(bath: BathSpec, n_terms=None):
    """Exponential modes of Re C(tau): weights (real) and decay rates."""
    weights, rates = correlation_modes(bath, n_terms=n_terms)
    return weights.real, rates


def _noise_covariance(roots, g, weights, rates, t, m):
    """Covariance of the noise-driven part of (x, p) at times t (T, 2, 2).

    V^N_ab = (1/m^2-scaled) sum_ij h^a_i h^b_j I_ij(t) with
    I_ij = int_0^t int_0^t e^{s_i(t-s)} e^{s_j(t-s')} Re C(s-s') ds ds'
    and (h^x, h^p) = (g, g s) from x_N = (1/m) int G(t-s) F(s) ds.
    Evaluated mode by mode with the elementary kernel
    (E(s_i+s_j, t) - E(s_i - nu, t))/(s_j + nu) + (i <-> j).
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros((t.size, 2, 2))
    if weights.size == 0:
        return out
    e_sum = {}
    for i, si in enumerate(roots):
        for j, sj in enumerate(roots):
            if (j, i) in e_sum:
                e_sum[(i, j)] = e_sum[(j, i)]
            else:
                e_sum[(i, j)] = _safe_expm1_ratio(si + sj, t)
    # E(s_i - nu_k, t): (3, K, T), chunked over t by the caller's grid size
    e_cross = [
        _safe_expm1_ratio(roots[i] - rates[:, None], t[None, :])
        for i in range(len(roots))
    ]
    for i, si in enumerate(roots):
        for j, sj in enumerate(roots):
            r1 = (e_sum[(i, j)][None, :] - e_cross[i]) / (sj + rates)[:, None]
            r2 = (e_sum[(i, j)][None, :] - e_cross[j]) / (si + rates)[:, None]
            base = weights @ (r1 + r2)
            gij = g[i] * g[j]
            out[:, 0, 0] += (gij * base).real / (m * m)
            out[:, 0, 1] += (gij * sj * base).real / m
            out[:, 1, 1] += (gij * si * sj * base).real
    out[:, 1, 0] = out[:, 0, 1]
    return out


def _noise_covariance_dot(roots, g, weights, rates, t, m):
    """Time derivative of the noise covariance, via
    J_v = sum_i Re g_i T_i, J_d = sum_i Re g_i s_i T_i,
    T_i = sum_k w_k (e^{s_i t} - e^{-nu_k t})/(s_i + nu_k):
    Vd_xx = 2 V_xp / m is implied, Vd_xp = (G J_d + Gd J_v)/m, Vd_pp = 2 Gd J_d.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if weights.size == 0:
        return np.zeros((t.size, 2, 2))
    ex = np.exp(np.clip(roots[None, :].real * t[:, None], None, 700.0) + 1j * roots[None, :].imag * t[:, None])
    gr = (ex @ g).real
    gd = (ex @ (g * roots)).real
    jv = np.zeros(t.size)
    jd = np.zeros(t.size)
    decay = np.exp(-rates[:, None] * t[None, :])
    for i, si in enumerate(roots):
        ei = np.exp(np.clip(si.real * t, None, 700.0) + 1j * si.imag * t)
        term = weights @ ((ei[None, :] - decay) / (si + rates)[:, None])
        jv += (g[i] * term).real
        jd += (g[i] * si * term).real
    out = np.zeros((t.size, 2, 2))
    out[:, 0, 1] = (gr * jd + gd * jv) / m
    out[:, 1, 0] = out[:, 0, 1]
    out[:, 1, 1] = 2.0 * gd * jd
    return out


def _stationary_noise_covariance(roots, g, weights, rates, m):
    """t -> inf limit of the noise covariance (2, 2)."""
    out = np.zeros((2, 2))
    if weights.size == 0:
        return out
    for i, si in enumerate(roots):
        for j, sj in enumerate(roots):
            r1 = (-1.0 / (si + sj) + 1.0 / (si - rates)) / (sj + rates)
            r2 = (-1.0 / (si + sj) + 1.0 / (sj - rates)) / (si + rates)
            base = weights @ (r1 + r2)
            gij = g[i] * g[j]
            out[0, 0] += (gij * base).real / (m * m)
            out[0, 1] += (gij * sj * base).real / m
            out[1, 1] += (gij * si * sj * base).real
    out[1, 0] = out[0, 1]
    return out


# ---------------------------------------------------------------------------
# moments and coefficients


def _benchmark_moments(spec: SystemSpec):
    """Mean and covariance of the benchmark initial state (|0> + |1>)/sqrt(2)."""
    work = SystemSpec(max(spec.dim, 4), spec.omega, spec.mass, spec.counterterm)
    x, p = build_position_momentum(work)
    rho = initial_state(work).entries
    xa, pa = x.entries, p.entries
    mx = expectation(xa, rho).real
    mp = expectation(pa, rho).real
    vxx = expectation(xa @ xa, rho).real - mx * mx
    vpp = expectation(pa @ pa, rho).real - mp * mp
    vxp = expectation(0.5 * (xa @ pa + pa @ xa), rho).real - mx * mp
    return np.array([mx, mp]), np.array([[vxx, vxp], [vxp, vpp]])


def exact_moments(
    bath: BathSpec,
    spec: SystemSpec,
    t_grid,
    mean0=None,
    covariance0=None,
) -> ExactMoments:
    """Exact Gaussian moment flow from the given initial moments.

    Defaults to the moments of the benchmark initial state.  The mean
    propagates with Phi(t); the covariance is Phi V0 Phi^T plus the noise
    covariance, V(t) = Phi(t) V0 Phi(t)^T + V^N(t).
    """
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if mean0 is None or covariance0 is None:
        bm, bc = _benchmark_moments(spec)
        mean0 = bm if mean0 is None else np.asarray(mean0, dtype=float)
        covariance0 = bc if covariance0 is None else np.asarray(covariance0, dtype=float)
    else:
        mean0 = np.asarray(mean0, dtype=float)
        covariance0 = np.asarray(covariance0, dtype=float)
    phi, _ = fundamental_solutions(bath, spec, t)
    mean = np.einsum("tab,b->ta", phi, mean0)
    cov = np.einsum("tab,bc,tdc->tad", phi, covariance0, phi)
    roots, g, _ = _cubic_roots(bath, spec)
    weights, rates = _noise_modes(bath)
    cov = cov + _chunked(_noise_covariance, roots, g, weights, rates, t, spec.mass)
    return ExactMoments(times=t, mean=mean, covariance=cov)


def _chunked(fn, roots, g, weights, rates, t, m, block=2048):
    parts = [
        fn(roots, g, weights, rates, t[i : i + block], m)
        for i in range(0, t.size, block)
    ]
    return np.concatenate(parts, axis=0)


def hpz_coefficients(bath: BathSpec, spec: SystemSpec, time_grid) -> HpzCoefficients:
    """Invert the exact moment flow for the time-local coefficients.

    With W = u Gd - ud G (the Wronskian-like pairing, W(0) = 1, never zero
    for the stable cubic),

        gamma_x = (ud Gdd - Gd udd)/W,   gamma_p = (udd G - u Gdd)/W,

    which depend only on the fundamental solutions (hence not on beta).  The
    diffusion matrix is D = Vd^N - A V^N - V^N A^T with
    A = [[0, 1/m], [-m gamma_x, -gamma_p]]; its only nonzero entries are
    D_xp = m^2 d_x and D_pp = m^2 d_p (D_xx vanishes identically).
    """
    t = np.atleast_1d(np.asarray(time_grid, dtype=float))
    m = spec.mass
    roots, g, ua = _cubic_roots(bath, spec)
    phi, phid = fundamental_solutions(bath, spec, t)
    u, gr = phi[:, 0, 0], m * phi[:, 0, 1]
    ud, gd = phi[:, 1, 0] / m, phi[:, 1, 1]
    udd, gdd = phid[:, 1, 0] / m, phid[:, 1, 1]
    wr = u * gd - ud * gr
    gamma_x = (ud * gdd - gd * udd) / wr
    gamma_p = (udd * gr - u * gdd) / wr

    weights, rates = _noise_modes(bath)
    vn = _chunked(_noise_covariance, roots, g, weights, rates, t, m)
    vnd = _chunked(_noise_covariance_dot, roots, g, weights, rates, t, m)
    # D = Vd - A V - V A^T elementwise for the (xp) and (pp) entries
    d_xp = vnd[:, 0, 1] - (vn[:, 1, 1] / m - m * gamma_x * vn[:, 0, 0] - gamma_p * vn[:, 0, 1])
    d_pp = 0.5 * (vnd[:, 1, 1] + 2.0 * m * gamma_x * vn[:, 0, 1] + 2.0 * gamma_p * vn[:, 1, 1])

    gx_inf, gp_inf, dx_inf, dp_inf = hpz_asymptotics(bath, spec)
    return HpzCoefficients(
        time_grid=t,
        gamma_x=gamma_x,
        gamma_p=gamma_p,
        d_x=d_xp / (m * m),
        d_p=d_pp / (m * m),
        gamma_x_inf=gx_inf,
        gamma_p_inf=gp_inf,
        d_x_inf=dx_inf,
        d_p_inf=dp_inf,
    )


def hpz_asymptotics(bath: BathSpec, spec: SystemSpec):
    """Asymptotic coefficients (gamma_x, gamma_p, d_x, d_p).

    The two slowest roots dominate the fundamental solutions at late times,
    so gamma_p -> -(s_1 + s_2) and gamma_x -> s_1 s_2; the diffusion limits
    follow from stationarity of the covariance flow,
    D_pp = gamma_p V^s_pp and D_xp = m gamma_x V^s_xx - V^s_pp / m.
    """
    m = spec.mass
    roots, g, _ = _cubic_roots(bath, spec)
    if bath.gamma == 0.0:
        return spec.omega**2, 0.0, 0.0, 0.0
    order = np.argsort(roots.real)[::-1]
    s1, s2 = roots[order[0]], roots[order[1]]
    gp = float(-(s1 + s2).real)
    gx = float((s1 * s2).real)
    vs = stationary_covariance(bath, spec)
    d_pp = gp * vs[1, 1]
    d_xp = m * gx * vs[0, 0] - vs[1, 1] / m
    return gx, gp, d_xp / (m * m), d_pp / (m * m)


def stationary_covariance(bath: BathSpec, spec: SystemSpec) -> np.ndarray:
    """Exact stationary covariance of (x, p), shape (2, 2); V_xp = 0 there."""
    roots, g, _ = _cubic_roots(bath, spec)
    weights, rates = _noise_modes(bath)
    return _stationary_noise_covariance(roots, g, weights, rates, spec.mass)


def stationary_gaussian_state(bath: BathSpec, spec: SystemSpec) -> DensityMatrix:
    """The stationary state as a Gaussian thermal state of an effective
    oscillator, projected onto the truncated Fock space.

    From V_xx, V_pp (V_xp = 0): the effective stiffness is
    m^ w^ = sqrt(V_pp/V_xx) and the symplectic eigenvalue
    nu = sqrt(V_xx V_pp) fixes the occupation through
    beta^ w^ = ln((2 nu + 1)/(2 nu - 1)).  Exact up to truncation.
    """
    vs = stationary_covariance(bath, spec)
    vxx, vpp = vs[0, 0], vs[1, 1]
    mu = np.sqrt(vpp / vxx)  # effective m*omega
    nu = np.sqrt(vxx * vpp)
    x, p = build_position_momentum(spec)
    xa, pa = x.entries, p.entries
    # effective oscillator at frequency omega with mass mu/omega
    m_eff = mu / spec.omega
    h_eff = pa @ pa / (2.0 * m_eff) + 0.5 * m_eff * spec.omega**2 * (xa @ xa)
    if nu <= 0.5 + 1e-12:
        beta_eff = 1e6 / spec.omega
    else:
        beta_eff = float(np.log((2.0 * nu + 1.0) / (2.0 * nu - 1.0))) / spec.omega
    return gibbs_state(h_eff, beta_eff)


# ---------------------------------------------------------------------------
# generator


def default_coefficient_grid(bath: BathSpec, spec: SystemSpec, t_max: float) -> np.ndarray:
    """Graded grid for coefficient interpolation: dense through the bath
    transient (cutoff and Matsubara time scales), coarser afterwards."""
    if t_max <= 0:
        raise ValueError(f"t_max must be > 0, got {t_max}")
    fast = max(bath.cutoff, spec.omega)
    h_early = 0.005 / fast
    t1 = min(t_max, 8.0 / bath.cutoff + 2.0 * bath.beta)
    h_late = 0.05 / spec.omega
    early = np.arange(0.0, t1, h_early)
    late = np.arange(t1, t_max, h_late)
    grid = np.concatenate([early, late, [t_max]])
    grid = np.unique(grid)
    if grid[0] > 0.0:
        grid = np.concatenate([[0.0], grid])
    return grid


def _hpz_apply_factory(spec: SystemSpec, coefficient_fn):
    x, p = build_position_momentum(spec)
    xa, pa = x.entries, p.entries
    m = spec.mass
    kinetic = pa @ pa / (2.0 * m)
    x2 = xa @ xa

    def apply(t, rho):
        gx, gp, dx, dp = coefficient_fn(t)
        h = kinetic + 0.5 * m * gx * x2
        out = -1j * (h @ rho - rho @ h)
        anti = pa @ rho + rho @ pa
        out += -0.5j * gp * (xa @ anti - anti @ xa)
        c1 = xa @ rho - rho @ xa
        out -= (m * m * dp) * (xa @ c1 - c1 @ xa)
        c2 = pa @ rho - rho @ pa
        out += (m * m * dx) * (xa @ c2 - c2 @ xa)
        return out

    return apply


def hpz_liouvillian(coeffs: HpzCoefficients, spec: SystemSpec) -> Liouvillian:
    """Exact time-local generator with cubic-spline interpolated coefficients.

    Requesting a time outside the coefficient grid raises, rather than
    extrapolating silently.  The bath is implicit in the coefficients; the
    stored BathSpec is a placeholder with gamma = 0.
    """
    t = coeffs.time_grid
    splines = [
        CubicSpline(t, getattr(coeffs, name))
        for name in ("gamma_x", "gamma_p", "d_x", "d_p")
    ]
    t_lo, t_hi = float(t[0]), float(t[-1])

    def coefficient_fn(tt):
        if tt < t_lo or tt > t_hi:
            raise ValueError(
                f"time {tt} outside the coefficient grid [{t_lo}, {t_hi}]"
            )
        return tuple(float(s(tt)) for s in splines)

    apply = _hpz_apply_factory(spec, coefficient_fn)
    placeholder = BathSpec(0.0, 1.0, 1.0)
    return Liouvillian(
        kind="HPZ",
        spec=spec,
        bath=placeholder,
        apply=apply,
        matrix_form=None,
        lamb_shift=None,
        frame=None,
        basis="fock",
        time_dependent=True,
    )


def hpz_asymptotic_liouvillian(bath: BathSpec, spec: SystemSpec) -> Liouvillian:
    """Exact generator with coefficients frozen at their asymptotic values.

    Its unique fixed point is the exact stationary state (up to truncation),
    which serves as the reference for every steady-state benchmark.  Carries
    a sparse matrix_form.
    """
    gx, gp, dx, dp = hpz_asymptotics(bath, spec)
    frozen = (gx, gp, dx, dp)
    apply = _hpz_apply_factory(spec, lambda t: frozen)

    x, p = build_position_momentum(spec)
    m = spec.mass
    xs = sp.csr_matrix(x.entries)
    ps = sp.csr_matrix(p.entries)
    eye = sp.identity(spec.dim, format="csr")
    h = (ps @ ps) / (2.0 * m) + 0.5 * m * gx * (xs @ xs)
    comm_x = sp.kron(eye, xs) - sp.kron(xs.T, eye)
    comm_p = sp.kron(eye, ps) - sp.kron(ps.T, eye)
    anti_p = sp.kron(eye, ps) + sp.kron(ps.T, eye)
    matrix = (
        hamiltonian_superop(h.toarray())
        - 0.5j * gp * (comm_x @ anti_p)
        - (m * m * dp) * (comm_x @ comm_x)
        + (m * m * dx) * (comm_x @ comm_p)
    )
    return Liouvillian(
        kind="HPZ",
        spec=spec,
        bath=bath,
        apply=apply,
        matrix_form=matrix.tocsc(),
        lamb_shift=None,
        frame=None,
        basis="fock",
        time_dependent=False,
    )
