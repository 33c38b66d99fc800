"""Invariant suites behind ``goe-fluct verify``.

Each suite is a list of checks with fixed seeds; a check reports the measured
value next to its tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from goe_fluct import kernel as K
from goe_fluct.covariance import Brownian, FractionalBrownian, TimeGrid
from goe_fluct.ensemble import (
    packed_index,
    packed_size,
    sample_correlated_goe_pair,
    sample_goe_path,
    sample_standard_goe,
)
from goe_fluct.spectral import (
    eigen_decompose,
    grad_eigenvalue,
    hess_eigenvalue,
    parse_test_function,
    psi_pi_functionals,
    v_matrix,
)

__all__ = ["Check", "SUITES", "run_suite"]


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    measured: float
    tolerance: float

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name}: measured {self.measured:.3e} (tolerance {self.tolerance:.1e})"


ROUNDING = 1e-12


def _le(name, measured, tol):
    return Check(name, bool(measured <= tol), float(measured), float(tol))


# ---------------------------------------------------------------- kernel


def kernel_suite():
    rng = np.random.default_rng(101)
    out = []

    g = np.linspace(-2, 2, 202)[1:-1]
    zs = np.linspace(0.0, 0.99, 20)
    x, y = np.meshgrid(g, g, indexing="ij")
    low = min(float(np.min(K.kernel_closed(z, x, y))) for z in zs)
    out.append(Check("kernel positive on 200x200x20 grid", low > 0, low, 0.0))

    z = rng.uniform(0.0, 0.99, 10_000)
    x = rng.uniform(-1.999, 1.999, 10_000)
    y = rng.uniform(-1.999, 1.999, 10_000)
    Q = 40
    closed = K.kernel_closed(z, x, y)
    diff = np.abs(closed - K.kernel_series(z, x, y, Q))
    # the bound is exact arithmetic; allow for rounding in both evaluations
    bound = K.kernel_tail_bound(z, x, y, Q) + ROUNDING * np.maximum(1.0, np.abs(closed))
    excess = float(np.max(diff - bound))
    out.append(_le("series within tail bound, 1e4 triples (Q=40)", max(excess, 0.0), 0.0))

    out.append(_le("K_0.5(0, 0) = 4/3", abs(K.kernel_closed(0.5, 0.0, 0.0) - 4.0 / 3.0), 1e-15))
    ref = K.kernel_series(0.3, 1.0, -0.5, 200)
    out.append(_le("closed form vs 200-term sum at (1, -0.5, 0.3)", abs(K.kernel_closed(0.3, 1.0, -0.5) - ref), 1e-12))
    Qe = _edge_truncation(0.9, 1.9, 1e-8)
    err = abs(K.kernel_closed(0.9, 1.9, 1.9) - K.kernel_series(0.9, 1.9, 1.9, Qe))
    out.append(_le(f"edge case z=0.9, x=y=1.9 (Q={Qe})", err, 1e-8))

    worst = 0.0
    for z in (0.0, 0.3, 0.9):
        for p in range(13):
            up = K.chebyshev_u_polynomial(p)
            for q in range(13):
                val = K.semicircular_pair_expectation(up, K.chebyshev_u_polynomial(q), z)
                worst = max(worst, abs(val - (z**p if p == q else 0.0)))
    out.append(_le("orthonormality p, q <= 12", worst, 1e-10))

    x1, x2 = parse_test_function("x"), parse_test_function("x^2")
    bm = Brownian()
    out.append(_le("series f=g=x at rho=1 -> 2", abs(K.limiting_cov_series(x1, x1, bm, 1, 1) - 2), 1e-10))
    out.append(_le("series f=g=x^2 at rho=1 -> 4", abs(K.limiting_cov_series(x2, x2, bm, 1, 1) - 4), 1e-10))
    out.append(_le("Brownian s=0.5, t=1, f=g=x -> 1", abs(K.limiting_cov_series(x1, x1, bm, 0.5, 1) - 1), 1e-12))

    worst = 0.0
    fb = FractionalBrownian(0.7)
    for a, b in (("x^2", "x^3"), ("x^4", "x^4"), ("poly:0,1,-1,0.5", "x^5")):
        f, h = parse_test_function(a), parse_test_function(b)
        worst = max(worst, abs(K.limiting_cov_series(f, h, fb, 0.5, 1) - K.limiting_cov_quadrature(f, h, fb, 0.5, 1)))
    out.append(_le("series vs quadrature route, fBm H=0.7", worst, 1e-6))
    return out


def _edge_truncation(z, x, tol):
    Q = 0
    while K.kernel_tail_bound(z, x, x, Q) > tol:
        Q += 1
    return Q


# ---------------------------------------------------------------- derivatives


def _fd_eigs(mat_fn, base, steps):
    """Descending eigenvalues of ``mat_fn(base + step)`` for each step (numpy oracle)."""
    mats = np.array([mat_fn(base + s) for s in steps])
    return np.linalg.eigvalsh(mats)[:, ::-1]


def _matrix_from_packed(n):
    rows, cols = np.triu_indices(n)
    diag = rows == cols

    def build(x):
        vals = np.where(diag, math.sqrt(2.0) * x, x)
        out = np.empty((n, n))
        out[rows, cols] = vals
        out[cols, rows] = vals
        return out

    return build


def derivative_errors(coeffs, n, h1=1e-5):
    """Max relative errors of the analytic gradient and Hessian of every
    eigenvalue against central finite differences."""
    build = _matrix_from_packed(n)
    dcmp = eigen_decompose(build(coeffs))
    d = packed_size(n)
    eye = np.eye(d)
    phi = _fd_eigs(build, coeffs, np.concatenate([h1 * eye, -h1 * eye]))
    g_fd = (phi[:d] - phi[d:]) / (2 * h1)
    gaps = np.abs(dcmp.eigenvalues[:, None] - dcmp.eigenvalues[None, :]) + np.diag(np.full(n, np.inf))
    a_idx, b_idx = np.triu_indices(d)
    m = a_idx.size
    g_err = h_err = 0.0
    for i in range(n):
        g = grad_eigenvalue(dcmp, i)
        g_err = max(g_err, np.max(np.abs(g_fd[:, i] - g)) / np.max(np.abs(g)))
        # second differences of Phi_i with a step scaled to its own gap
        h2 = 1e-3 * float(np.min(gaps[i]))
        steps = [h2 * (sa * eye[a_idx] + sb * eye[b_idx]) for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1))]
        vals = _fd_eigs(build, coeffs, np.concatenate(steps))[:, i]
        h_fd = (vals[:m] - vals[m:2 * m] - vals[2 * m:3 * m] + vals[3 * m:]) / (4 * h2 * h2)
        H = hess_eigenvalue(dcmp, i)
        scale = max(np.max(np.abs(H)), 1e-300)
        h_err = max(h_err, np.max(np.abs(h_fd - H[a_idx, b_idx])) / scale)
    return float(g_err), float(h_err)


def isometry_errors(coeffs, n, f):
    dcmp = eigen_decompose(_matrix_from_packed(n)(coeffs))
    phi = dcmp.eigenvalues
    fv = f(phi)
    pp = psi_pi_functionals(dcmp, f)
    e1 = abs(np.sum(pp.psi**2) - 2 * np.sum(fv**2))
    e2 = abs(np.sum(pp.psi2**2) - 4 * np.sum(fv**2))
    dd = (fv[:, None] - fv[None, :]) / (phi[:, None] - phi[None, :] + np.eye(n))
    np.fill_diagonal(dd, 0.0)
    e3 = abs(np.sum(pp.pi**2) - 2 * np.sum(dd**2))
    V = {(i, j): v_matrix(dcmp.U, i, j) for i in range(n) for j in range(n)}
    ev = 0.0
    for (i1, j1), a in V.items():
        for (i2, j2), b in V.items():
            want = float(i1 == i2 and j1 == j2) + float(i1 == j2 and j1 == i2)
            ev = max(ev, abs(float(a @ b) - want))
    G = np.array([grad_eigenvalue(dcmp, i) for i in range(n)])
    eg = float(np.max(np.abs(G @ G.T - 2 * np.eye(n))))
    return {"psi": e1, "psi2": e2, "pi": e3, "V": ev, "grad": eg}


def derivatives_suite(count=100, seed=202):
    out = []
    g_err = h_err = 0.0
    iso = {"psi": 0.0, "psi2": 0.0, "pi": 0.0, "V": 0.0, "grad": 0.0}
    f = parse_test_function("x^2")
    for r in range(count):
        n = 2 + r % 7
        a = sample_standard_goe(n, seed, replica=r)
        ge, he = derivative_errors(a.coeffs, n)
        g_err, h_err = max(g_err, ge), max(h_err, he)
        for key, val in isometry_errors(a.coeffs, n, f).items():
            iso[key] = max(iso[key], val)
    out.append(_le(f"gradient vs finite differences ({count} matrices)", g_err, 1e-6))
    out.append(_le(f"Hessian vs finite differences ({count} matrices)", h_err, 1e-4))
    out.append(_le("V-identity", iso["V"], 1e-10))
    out.append(_le("gradient orthogonality", iso["grad"], 1e-10))
    out.append(_le("sum Psi^2 = 2 sum f^2", iso["psi"], 1e-9))
    out.append(_le("sum (Psi^pq)^2 = 4 sum f^2", iso["psi2"], 1e-9))
    out.append(_le("sum Pi^2 = 2 sum DD^2", iso["pi"], 1e-9))
    return out


# ---------------------------------------------------------------- quadrature


def quadrature_suite():
    out = []
    wsum = max(abs(float(np.sum(K.quadrature(m).weights)) - 1.0) for m in range(1, 513))
    out.append(_le("weight sums, m = 1..512", wsum, 1e-14))
    q = K.quadrature(200)
    worst = max(abs(q.integrate(lambda x, k=k: x**k) - K.semicircle_moment(k)) for k in (2, 4, 6, 8))
    out.append(_le("Catalan moments 2..8 with m=200", worst, 1e-12))
    worst = 0.0
    for m in (1, 2, 3, 5, 8, 13):
        qm = K.quadrature(m)
        for k in range(2 * m):
            exact = K.semicircle_moment(k)
            # relative to the size of x^k on [-2, 2]
            worst = max(worst, abs(qm.integrate(lambda x, k=k: x**k) - exact) / 2.0**k)
    out.append(_le("exactness to degree 2m-1", worst, 1e-12))
    x = parse_test_function("x")
    x2 = parse_test_function("x^2")
    ps = abs(K.pastur_shcherbina_cov(x, x, 1.0) - 2.0)
    out.append(_le("divided-difference form, f=g=x", ps, 1e-12))
    ps = abs(K.pastur_shcherbina_cov(x2, x2, 1.0) - 4.0)
    out.append(_le("divided-difference form, f=g=x^2", ps, 1e-6))
    return out


# ---------------------------------------------------------------- ensemble


def ensemble_suite(draws=20_000, seed=303):
    out = []
    bm = Brownian()
    grid = TimeGrid([0.5, 1.0])
    p1 = sample_goe_path(bm, 5, grid, seed)
    p2 = sample_goe_path(bm, 5, grid, seed)
    out.append(Check("same seed gives identical path", p1.equals(p2), 0.0, 0.0))

    n = 3
    xs = np.array([sample_goe_path(bm, n, grid, seed, r).coeffs for r in range(draws)])
    off = packed_index(n, 0, 1)
    dia = packed_index(n, 0, 0)
    worst = 0.0
    for idx, scale in ((off, 1.0), (dia, 2.0)):
        a = xs[:, 0, idx]
        b = xs[:, 1, idx]
        if idx == dia:
            a, b = math.sqrt(2) * a, math.sqrt(2) * b
        for s_i, t_i, R in ((0, 0, 0.5), (0, 1, 0.5), (1, 1, 1.0)):
            u, v = (a, b)[s_i], (a, b)[t_i]
            p = u * v
            z = abs(p.mean() - scale * R / n) / (p.std(ddof=1) / math.sqrt(draws))
            worst = max(worst, z)
    out.append(_le("cross-time entry covariance (z-score)", worst, 4.0))

    tr2 = np.array([np.sum(sample_standard_goe(2, seed, r).to_matrix() ** 2) / 2 for r in range(draws)])
    z = abs(tr2.mean() - 1.5) / (tr2.std(ddof=1) / math.sqrt(draws))
    out.append(_le("(1/n) E Tr A^2 = (n+1)/n at n=2 (z-score)", z, 4.0))

    pairs = [sample_correlated_goe_pair(4, 0.6, seed, r) for r in range(draws)]
    a = np.array([p[0].coeffs[1] for p in pairs])
    b = np.array([p[1].coeffs[1] for p in pairs])
    corr = float(np.corrcoef(a, b)[0, 1])
    out.append(_le("correlated pair, z=0.6", abs(corr - 0.6), 0.01))
    same = sample_correlated_goe_pair(4, 1.0, seed)
    out.append(Check("z=1 gives identical outputs", same[0] == same[1], 0.0, 0.0))

    r0 = np.array([sample_standard_goe(4, seed, r).coeffs[1] for r in range(draws)])
    r1 = np.array([sample_standard_goe(4, seed + 1, r).coeffs[1] for r in range(draws)])
    z = abs(float(np.corrcoef(r0, r1)[0, 1])) * math.sqrt(draws)
    out.append(_le("independent seeds uncorrelated (z-score)", z, 4.0))
    return out


SUITES = {
    "kernel": kernel_suite,
    "derivatives": derivatives_suite,
    "quadrature": quadrature_suite,
    "ensemble": ensemble_suite,
}


def run_suite(name: str) -> list[Check]:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name]()
