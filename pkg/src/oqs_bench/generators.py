"""Master-equation generators in the eigenbasis of the system Hamiltonian.

Four approximate generators for a single Hermitian coupling operator x:

time-dependent Redfield
    drho/dt = -i[H, rho] + S rho S_t^dag + S_t rho S - S S_t rho - rho S_t^dag S,
    with (S_t)_{lk} = G_t(Delta_{lk}) x_{lk} and Delta_{lk} = e_l - e_k;
time-independent Redfield
    the same with S_t frozen at its asymptotic value S_inf;
RWA (quantum-optical)
    GKSL with jump operators grouped by equal gaps, rates 2 G_inf^r(Delta)
    and a diagonal Lamb shift; its fixed point is the Gibbs state of H_S;
NR
    GKSL with the single jump operator L_{lk} = 2 pi h(Delta_{lk}) x_{lk}
    and Lamb shift Lambda_{lk} = sum_n f(Delta_{nl}, Delta_{kn}) x_{ln} x_{nk}.

All four act in the eigenbasis of H_S (a real orthogonal transform away from
the Fock basis).  matrix_form uses column-major vectorization,
vec(A rho B) = (B^T kron A) vec(rho).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .bath import (
    ASYMPTOTIC,
    BathSpec,
    asymptotic_imag_matsubara,
    correlation_modes,
    coupling_density,
    nr_f_many,
    nr_h,
    thermal_spectral_density,
)
from .oscillator import (
    HERMITICITY_TOL,
    OperatorMatrix,
    SystemSpec,
    build_position_momentum,
    system_hamiltonian,
)

__all__ = [
    "GENERATOR_KINDS",
    "EigenFrame",
    "Liouvillian",
    "NRIngredients",
    "eigenframe",
    "redfield_liouvillian",
    "rwa_liouvillian",
    "nr_ingredients",
    "nr_liouvillian",
    "vec",
    "unvec",
    "hamiltonian_superop",
    "dissipator_superop",
]

GENERATOR_KINDS = ("RedfieldTD", "RedfieldTI", "RWA", "NathanRudner", "HPZ")

# gaps equal within this absolute quantum are treated as one transition energy
_GAP_QUANTUM = 1e-9


@dataclass(frozen=True, eq=False)
class EigenFrame:
    """Eigenbasis data of H_S: energies ascending, eigenvector columns (real
    orthogonal, from the Fock basis), the coupling operator x in that basis,
    and the gap matrix gaps[l, k] = energies[l] - energies[k]."""

    energies: np.ndarray
    vectors: np.ndarray
    position: np.ndarray
    gaps: np.ndarray


def eigenframe(spec: SystemSpec, bath: BathSpec) -> EigenFrame:
    h = system_hamiltonian(spec, bath).entries.real
    energies, vectors = np.linalg.eigh(h)
    x_fock = build_position_momentum(spec)[0].entries.real
    position = vectors.T @ x_fock @ vectors
    gaps = energies[:, None] - energies[None, :]
    return EigenFrame(energies, vectors, position, gaps)


@dataclass(eq=False)
class Liouvillian:
    """A generator drho/dt = apply(t, rho) acting on matrices in `basis`.

    matrix_form, when present, is the sparse vectorized superoperator of the
    same map (time-independent generators only).  lamb_shift is the Hermitian
    frequency-renormalization operator for inspection.  frame carries the
    eigenbasis data for generators formulated there; basis is "eigen" or
    "fock".
    """

    kind: str
    spec: SystemSpec
    bath: BathSpec
    apply: Callable[[float, np.ndarray], np.ndarray]
    matrix_form: sp.spmatrix | None = None
    lamb_shift: OperatorMatrix | None = None
    frame: EigenFrame | None = None
    basis: str = "eigen"
    time_dependent: bool = False

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.basis not in ("eigen", "fock"):
            raise ValueError(f"unknown basis {self.basis!r}")

    @property
    def dim(self) -> int:
        return self.spec.dim


@dataclass(frozen=True, eq=False)
class NRIngredients:
    """Jump operator and Lamb shift of the GKSL-form split; lamb must be
    Hermitian to 1e-10 by the f-kernel symmetry."""

    jump: OperatorMatrix
    lamb: OperatorMatrix

    def __post_init__(self):
        lam = self.lamb.entries
        dev = float(np.max(np.abs(lam - lam.conj().T)))
        if dev > HERMITICITY_TOL:
            raise ValueError(f"Lamb shift not Hermitian: max deviation {dev:.3e}")


# ---------------------------------------------------------------------------
# vectorization helpers


def vec(rho) -> np.ndarray:
    """Column-major stack: element (i, j) lands at index i + j*dim."""
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v) -> np.ndarray:
    v = np.asarray(v)
    d = int(round(np.sqrt(v.size)))
    return v.reshape((d, d), order="F")


def _sparsify(m, rel=1e-14) -> sp.csr_matrix:
    m = np.asarray(m)
    scale = np.max(np.abs(m))
    if scale > 0:
        m = np.where(np.abs(m) >= rel * scale, m, 0.0)
    return sp.csr_matrix(m)


def hamiltonian_superop(h) -> sp.csr_matrix:
    """vec form of rho -> -i[h, rho] (h need not be Hermitian-checked here)."""
    hs = _sparsify(h)
    eye = sp.identity(hs.shape[0], format="csr")
    return (-1j * (sp.kron(eye, hs) - sp.kron(hs.T, eye))).tocsr()


def dissipator_superop(jump) -> sp.csr_matrix:
    """vec form of rho -> L rho L^dag - (1/2){L^dag L, rho}."""
    ls = _sparsify(jump)
    eye = sp.identity(ls.shape[0], format="csr")
    ldl = (ls.conj().T @ ls).tocsr()
    out = sp.kron(ls.conj(), ls) - 0.5 * sp.kron(eye, ldl) - 0.5 * sp.kron(ldl.T, eye)
    return out.tocsr()


def _sandwich_superop(a, b) -> sp.csr_matrix:
    """vec form of rho -> a rho b."""
    return sp.kron(_sparsify(b).T, _sparsify(a)).tocsr()


def _distinct_gaps(gaps):
    """Quantize the gap matrix on the 1e-9 grid; return (values, index_matrix)."""
    keys = np.round(np.asarray(gaps) / _GAP_QUANTUM).astype(np.int64)
    uniq, inverse = np.unique(keys, return_inverse=True)
    return uniq * _GAP_QUANTUM, inverse.reshape(np.shape(gaps))


# ---------------------------------------------------------------------------
# Redfield


class _CouplingTable:
    """Hermite-interpolated finite-time coupling matrices.

    With the exponential decomposition C(tau) = sum_k c_k e^{-lambda_k tau},
    the finite-horizon coupling density is G_t(D) = G_inf(D) - e^{-iDt} M(t, D)
    with M(t, D) = sum_k c_k e^{-lambda_k t}/(lambda_k + iD), so

        S_t = S_inf - P(t) o M~(t),   P_{lk} = e^{-i Delta_{lk} t},
        M~(t) = x o M(t, Delta_{lk}).

    M(0, D) = G_inf(D) makes S_0 = 0, and M~ -> 0 beyond the correlation time
    restores S_inf exactly.  One fixed mode list serves every node, so the
    only t-dependent error is cubic-Hermite interpolation of the smooth,
    monotone-decaying M~; the node grid is geometric and refines until the
    midpoint error is below 1e-8 of the t = 0 scale.  Below the first node
    (where M~ has a t log t derivative kink of negligible weight) the value is
    frozen.
    """

    _MAX_MODES = 3000

    def __init__(self, frame: EigenFrame, bath: BathSpec):
        weights, rates = correlation_modes(
            bath, n_terms=min(bath.matsubara_terms, self._MAX_MODES)
        )
        deltas, idx = _distinct_gaps(frame.gaps)
        self.idx = idx
        self.x = frame.position
        inv = 1.0 / (rates[:, None] + 1j * deltas[None, :])
        self._w = weights
        self._rates = rates
        self._inv = inv

        fast = max(bath.cutoff, 2.0 * np.pi / bath.beta, float(np.max(np.abs(deltas))), 1.0)
        slow = min(bath.cutoff, 2.0 * np.pi / bath.beta)
        t_lo = 1e-4 / fast
        t_hi = 34.0 / slow
        n0 = max(8, int(np.ceil(np.log(t_hi / t_lo) / np.log(1.15))) + 1)
        ts = list(t_lo * (t_hi / t_lo) ** (np.arange(n0) / (n0 - 1)))
        vals = [self._exact(t) for t in ts]
        ders = [self._exact_derivative(t) for t in ts]

        scale = float(np.max(np.abs(self.x))) * float(np.max(np.abs(vals[0]))) + 1e-300
        tol = 1e-8 * scale
        xmax = float(np.max(np.abs(self.x))) + 1e-300
        for _ in range(12):
            bad = []
            for i in range(len(ts) - 1):
                tm = 0.5 * (ts[i] + ts[i + 1])
                approx = self._hermite(ts[i], ts[i + 1], vals[i], ders[i],
                                       vals[i + 1], ders[i + 1], tm)
                err = xmax * float(np.max(np.abs(approx - self._exact(tm))))
                if err > tol:
                    bad.append(i)
            if not bad:
                break
            for i in reversed(bad):
                tm = 0.5 * (ts[i] + ts[i + 1])
                ts.insert(i + 1, tm)
                vals.insert(i + 1, self._exact(tm))
                ders.insert(i + 1, self._exact_derivative(tm))
        self.ts = np.array(ts)
        self.vals = np.array(vals)
        self.ders = np.array(ders)
        self.horizon = t_hi
        self.gaps_flat = frame.gaps.reshape(-1)
        self.idx_flat = idx.reshape(-1)
        # S_inf from the same mode list, so S_0 = S_inf - M~(0) vanishes exactly
        self.s_inf = self.x * (weights @ inv)[idx]
        del self._inv

    def _exact(self, t):
        ev = self._w * np.exp(-self._rates * t)
        return ev @ self._inv

    def _exact_derivative(self, t):
        ev = self._w * self._rates * np.exp(-self._rates * t)
        return -(ev @ self._inv)

    @staticmethod
    def _hermite(t0, t1, v0, d0, v1, d1, t):
        h = t1 - t0
        s = (t - t0) / h
        s2 = s * s
        s3 = s2 * s
        return (
            (2 * s3 - 3 * s2 + 1) * v0
            + (s3 - 2 * s2 + s) * h * d0
            + (-2 * s3 + 3 * s2) * v1
            + (s3 - s2) * h * d1
        )

    def coupling_matrix(self, t: float) -> np.ndarray:
        """S_t on the gap index grid (already multiplied by x)."""
        ts = self.ts
        if t >= self.horizon:
            return self.s_inf.copy()
        if t <= ts[0]:
            m = self.vals[0]
        else:
            i = int(np.searchsorted(ts, t)) - 1
            i = min(max(i, 0), len(ts) - 2)
            m = self._hermite(ts[i], ts[i + 1], self.vals[i], self.ders[i],
                              self.vals[i + 1], self.ders[i + 1], t)
        phase = np.exp(-1j * t * np.asarray(self.gaps_flat))
        return self.s_inf - self.x * (phase * m[self.idx_flat]).reshape(self.x.shape)


def _redfield_apply_factory(energies, s, st_of_t):
    de = energies[:, None] - energies[None, :]

    def apply(t, rho):
        st = st_of_t(t)
        std = st.conj().T
        out = -1j * de * rho
        out += s @ (rho @ std) + st @ (rho @ s)
        out -= (s @ st) @ rho + rho @ (std @ s)
        return out

    return apply


def _asymptotic_coupling(frame, bath, route):
    deltas, idx = _distinct_gaps(frame.gaps)
    if route == "closed_form":
        g = np.array(
            [coupling_density(d, ASYMPTOTIC, bath).value for d in deltas]
        )
    elif route == "mode_sum":
        weights, rates = correlation_modes(bath, n_terms=bath.matsubara_terms)
        g = weights @ (1.0 / (rates[:, None] + 1j * deltas[None, :]))
    else:
        raise ValueError(f"unknown route {route!r}")
    return frame.position * g[idx]


def _redfield_lamb(s, s_inf):
    a = s @ s_inf
    return OperatorMatrix((a - a.conj().T) / 2j, "generic")


def redfield_liouvillian(
    spec: SystemSpec,
    bath: BathSpec,
    horizon=ASYMPTOTIC,
    route: str = "closed_form",
) -> Liouvillian:
    """Redfield generator in the eigenbasis of H_S.

    horizon: math.inf (or the string "asymptotic") builds the
    time-independent generator with S_t frozen at S_inf; the string
    "time-dependent" builds the finite-time generator whose coupling matrix
    follows G_t from t = 0 (S_0 = 0, so the dynamics starts unitarily).

    route selects how S_inf is evaluated for the time-independent generator:
    "closed_form" uses pi W(Delta) plus the Matsubara sum for the imaginary
    part; "mode_sum" integrates the exponential decomposition of C term by
    term, sum_k c_k/(lambda_k + i Delta).  The two constructions are
    independent and must agree elementwise.

    lamb_shift is Lambda^R = (S S_inf - S_inf^dag S)/(2i), the Hermitian
    part of the asymptotic frequency renormalization.
    """
    frame = eigenframe(spec, bath)
    s = frame.position
    time_dependent = isinstance(horizon, str) and horizon in ("time-dependent", "td")
    if not time_dependent:
        if isinstance(horizon, str):
            if horizon != "asymptotic":
                raise ValueError(f"unknown horizon {horizon!r}")
        elif not np.isinf(horizon):
            raise ValueError(
                "finite numeric horizons are not supported; use "
                "'time-dependent' for the finite-time generator"
            )
        s_inf = _asymptotic_coupling(frame, bath, route)
        apply = _redfield_apply_factory(frame.energies, s, lambda t: s_inf)
        matrix = (
            hamiltonian_superop(np.diag(frame.energies))
            + _sandwich_superop(s, s_inf.conj().T)
            + _sandwich_superop(s_inf, s)
            - _sandwich_superop(s @ s_inf, np.eye(spec.dim))
            - _sandwich_superop(np.eye(spec.dim), s_inf.conj().T @ s)
        )
        return Liouvillian(
            kind="RedfieldTI",
            spec=spec,
            bath=bath,
            apply=apply,
            matrix_form=matrix.tocsc(),
            lamb_shift=_redfield_lamb(s, s_inf),
            frame=frame,
            basis="eigen",
            time_dependent=False,
        )

    table = _CouplingTable(frame, bath)
    apply = _redfield_apply_factory(frame.energies, s, table.coupling_matrix)
    return Liouvillian(
        kind="RedfieldTD",
        spec=spec,
        bath=bath,
        apply=apply,
        matrix_form=None,
        lamb_shift=_redfield_lamb(s, table.s_inf),
        frame=frame,
        basis="eigen",
        time_dependent=True,
    )


# ---------------------------------------------------------------------------
# RWA (quantum-optical)


def rwa_liouvillian(spec: SystemSpec, bath: BathSpec) -> Liouvillian:
    """Full secular (quantum-optical) GKSL generator.

    The dressed spectrum is an equidistant ladder, so the secular classes
    are the level offsets m: all transitions l+m -> l share one collective
    jump A_m = sum_l x_{l,l+m} |l><l+m| at rate 2 G_inf^r(Delta_m) =
    2 pi W(Delta_m), plus the mirrored raising channel at -Delta_m.  The
    class gap is anchored to the bottom of the ladder, Delta_m = m (e_1 -
    e_0); truncation bends the upper gaps away from equidistance, but only
    on levels whose population is negligible whenever the truncated basis
    is valid at all.  Grouping per exact numerical gap instead would split
    the ladder into independent pairs and lose the A rho A^dag feeding
    between coherences on the same diagonal, overdamping them by an O(1)
    factor.  The Lamb shift Lambda = sum_m G_inf^i(Delta_m) A_m^dag A_m is
    diagonal for this model; the fixed point is the Gibbs state of H_S by
    detailed balance W(-Delta) = e^{beta Delta} W(Delta).
    """
    frame = eigenframe(spec, bath)
    x = frame.position
    d = spec.dim
    g0 = float(frame.energies[1] - frame.energies[0])
    xmax = float(np.max(np.abs(x))) + 1e-300

    lamb = np.zeros((d, d), dtype=complex)
    matrix = hamiltonian_superop(np.diag(frame.energies))
    for m in range(1, d):
        v = np.diag(x, m)
        if float(np.max(np.abs(v))) < 1e-14 * xmax:
            continue
        # gap convention gaps[l, k] = e_l - e_k: the lowering class
        # |l><l+m| carries Delta = -m g0, the raising class +m g0
        for a, delta in (
            (np.diag(v, m), -m * g0),
            (np.diag(np.diag(x, -m), -m), m * g0),
        ):
            rate = 2.0 * np.pi * thermal_spectral_density(delta, bath)
            gi = asymptotic_imag_matsubara(delta, bath)
            lamb += gi * (a.conj().T @ a)
            matrix = matrix + rate * dissipator_superop(a)
    lamb = 0.5 * (lamb + lamb.conj().T)
    matrix = matrix + hamiltonian_superop(lamb)
    matrix = matrix.tocsr()

    def apply(t, rho):
        return unvec(matrix @ vec(rho))

    return Liouvillian(
        kind="RWA",
        spec=spec,
        bath=bath,
        apply=apply,
        matrix_form=matrix.tocsc(),
        lamb_shift=OperatorMatrix(lamb, "generic"),
        frame=frame,
        basis="eigen",
        time_dependent=False,
    )


# ---------------------------------------------------------------------------
# NR


def nr_ingredients(spec: SystemSpec, bath: BathSpec) -> NRIngredients:
    """Jump operator and Lamb shift of the GKSL-form generator.

    jump:  L_{lk} = 2 pi h(Delta_{lk}) x_{lk}, so |L_{lk}|^2 equals the RWA
    rate 2 pi W(Delta_{lk}) |x_{lk}|^2 while off-diagonal coherences of the
    gap matrix survive in L itself.

    lamb:  Lambda_{lk} = sum_n f(Delta_{nl}, Delta_{kn}) x_{ln} x_{nk}.
    Hermiticity is exact because f(D1, D2) = f(-D2, -D1) is enforced through
    the canonical evaluation cache.  Terms with |x_{ln} x_{nk}| below 1e-12
    of the maximum are skipped (they shift Lambda at the 1e-11 relative
    level); distinct f arguments are grouped on the 1e-9 gap grid and are
    evaluated in one vectorized quadrature batch, so the cost stays
    proportional to the number of distinct transition-energy pairs.
    """
    frame = eigenframe(spec, bath)
    x = frame.position
    d = spec.dim
    deltas, idx = _distinct_gaps(frame.gaps)

    jump = 2.0 * np.pi * nr_h(frame.gaps, bath) * x

    xmax2 = float(np.max(np.abs(x))) ** 2 + 1e-300
    terms = []  # (l, k, product, pair index into args)
    args = []
    for l in range(d):
        for k in range(l, d):
            for n in range(d):
                prod = x[l, n] * x[n, k]
                if abs(prod) < 1e-12 * xmax2:
                    continue
                d1 = float(deltas[idx[n, l]])
                d2 = float(deltas[idx[k, n]])
                terms.append((l, k, prod, len(args)))
                args.append((d1, d2))
    values = nr_f_many(args, bath)
    lamb = np.zeros((d, d))
    for l, k, prod, j in terms:
        lamb[l, k] += values[j] * prod
    lamb = np.where(np.eye(d, dtype=bool), lamb, lamb + lamb.T)
    return NRIngredients(
        jump=OperatorMatrix(jump, "generic"),
        lamb=OperatorMatrix(lamb.astype(complex), "generic"),
    )


def nr_liouvillian(spec: SystemSpec, bath: BathSpec) -> Liouvillian:
    """GKSL generator -i[H_S + Lambda, rho] + L rho L^dag - (1/2){L^dag L, rho}
    with the single jump L and Lamb shift Lambda from nr_ingredients."""
    frame = eigenframe(spec, bath)
    ing = nr_ingredients(spec, bath)
    jump = ing.jump.entries
    lamb = ing.lamb.entries
    heff = np.diag(frame.energies.astype(complex)) + lamb
    ldl = jump.conj().T @ jump

    def apply(t, rho):
        out = -1j * (heff @ rho - rho @ heff)
        out += jump @ rho @ jump.conj().T
        out -= 0.5 * (ldl @ rho + rho @ ldl)
        return out

    matrix = hamiltonian_superop(heff) + dissipator_superop(jump)
    return Liouvillian(
        kind="NathanRudner",
        spec=spec,
        bath=bath,
        apply=apply,
        matrix_form=matrix.tocsc(),
        lamb_shift=ing.lamb,
        frame=frame,
        basis="eigen",
        time_dependent=False,
    )
