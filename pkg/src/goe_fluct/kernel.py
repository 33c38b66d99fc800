"""Chebyshev and semicircle analytics, the kernel K_z and the limiting covariance.

Conventions: ``U_q`` are Chebyshev polynomials of the second kind rescaled to
``[-2, 2]`` (``U_q(2 cos th) = sin((q+1) th) / sin th``), orthonormal for the
unit semicircle law.  The kernel

    K_z(x, y) = sum_q U_q(x) U_q(y) z^q
              = (1 - z^2) / (z^2 (x - y)^2 - x y z (1 - z)^2 + (1 - z^2)^2)

is the joint density (against the product of semicircle laws) of a pair of
semicircular variables with correlation ``z``.

Limiting covariance of the fluctuations of ``sum_i f(Phi_i(Y(s)))`` and
``sum_i g(Phi_i(Y(t)))``::

    C(s, t) = P * 2 * sum_q c_q(f' o sigma_s) c_q(g' o sigma_t) rho^q / (q + 1)

with ``c_q(h) = int h U_q dmu_1`` and prefactor ``P = R(s, t)``
(:attr:`Variant.R_CORRECTED`, default) or ``P = 1``
(:attr:`Variant.PAPER_LITERAL`).  The quadrature route integrates the same
quantity as ``2 P int_0^1 int int f'(sigma_s x) g'(sigma_t y) K_{z rho}(x, y)``
against the product semicircle density (:attr:`Normalization.PROOF_CONSISTENT`)
or twice that (:attr:`Normalization.THEOREM_STATED`).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from goe_fluct.covariance import CovarianceModel, DegenerateTimeError
from goe_fluct.spectral import PolynomialFunction, TestFunction

__all__ = [
    "Variant",
    "Normalization",
    "ConstantMode",
    "KernelDomainError",
    "QuadratureRefusal",
    "chebyshev_u",
    "chebyshev_u_table",
    "chebyshev_u_polynomial",
    "SemicircleQuadrature",
    "quadrature",
    "semicircle_moment",
    "ChebCoefficients",
    "cheb_coeffs",
    "kernel_closed",
    "kernel_series",
    "kernel_tail_bound",
    "pair_nodes",
    "semicircular_pair_expectation",
    "limiting_cov_series",
    "limiting_cov_quadrature",
    "pastur_shcherbina_cov",
]


class Variant(enum.Enum):
    PAPER_LITERAL = "paper_literal"
    R_CORRECTED = "r_corrected"


class Normalization(enum.Enum):
    THEOREM_STATED = "theorem_stated"
    PROOF_CONSISTENT = "proof_consistent"


class ConstantMode(enum.Enum):
    AS_PRINTED = "as_printed"  # 1 / (2 pi)
    SERIES_CALIBRATED = "series_calibrated"  # 1 / (2 pi^2)


class KernelDomainError(ValueError):
    """Kernel argument outside ``0 <= z < 1``, ``|x|, |y| < 2``."""


class QuadratureRefusal(ArithmeticError):
    """Correlation too close to 1 for the quadrature route; use the series route."""


RHO_EDGE = 1e-6
SERIES_TOL = 1e-14
SERIES_RUN = 3
SERIES_CAP = 512
PAIR_NODES_MAX = 20_000
PAIR_BLOCK = 512
QUAD_NODES_MAX = 2000


# ---------------------------------------------------------------- Chebyshev U


def chebyshev_u(q: int, x):
    """``U_q(x)`` by the three-term recursion; outside ``[-2, 2]`` this extrapolates."""
    if q < 0:
        raise ValueError("degree must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    prev, cur = np.ones_like(x), x.copy()
    if q == 0:
        return prev if prev.ndim else float(prev)
    for _ in range(q - 1):
        prev, cur = cur, x * cur - prev
    return cur if cur.ndim else float(cur)


def chebyshev_u_table(qmax: int, x) -> np.ndarray:
    """Rows ``U_0(x), ..., U_qmax(x)``."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty((qmax + 1,) + x.shape)
    out[0] = 1.0
    if qmax >= 1:
        out[1] = x
    for q in range(1, qmax):
        out[q + 1] = x * out[q] - out[q - 1]
    return out


def chebyshev_u_polynomial(q: int) -> PolynomialFunction:
    """``U_q`` as an exact-coefficient polynomial test function."""
    prev, cur = np.array([1.0]), np.array([0.0, 1.0])
    if q == 0:
        return PolynomialFunction(prev, label="U_0")
    for _ in range(q - 1):
        shifted = np.concatenate([[0.0], cur])
        shifted[: prev.size] -= prev
        prev, cur = cur, shifted
    return PolynomialFunction(cur, label=f"U_{q}")


# ---------------------------------------------------------------- semicircle quadrature


@dataclass(frozen=True, eq=False)
class SemicircleQuadrature:
    """Gauss rule for the unit semicircle law; exact for degree ``<= 2m - 1``."""

    m: int
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, g) -> float:
        return float(np.dot(self.weights, g(self.nodes)))


@lru_cache(maxsize=64)
def quadrature(m: int) -> SemicircleQuadrature:
    if m < 1:
        raise ValueError("node count must be at least 1")
    j = np.arange(1, m + 1)
    th = j * math.pi / (m + 1)
    nodes = 2.0 * np.cos(th)
    # symmetrize so that nodes are exactly antisymmetric about 0
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = (2.0 / (m + 1)) * np.sin(th) ** 2
    weights = 0.5 * (weights + weights[::-1])
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return SemicircleQuadrature(m, nodes, weights)


def semicircle_moment(k: int) -> int:
    """``int x^k dmu_1``: Catalan number ``C_{k/2}`` for even ``k``, else 0."""
    if k < 0:
        raise ValueError("moment order must be nonnegative")
    if k % 2:
        return 0
    cat = [1]
    for p in range(1, k // 2 + 1):
        cat.append(sum(cat[i] * cat[p - 1 - i] for i in range(p)))
    return cat[k // 2]


# ---------------------------------------------------------------- coefficients


@dataclass(frozen=True)
class ChebCoefficients:
    """``c_q = int g(scale x) U_q(x) dmu_1(x)`` for ``q = 0..Q``.

    ``tail`` bounds ``|c_q|`` for ``q > Q``: exactly 0 for polynomials of degree
    ``<= Q``, otherwise the largest computed coefficient in ``(Q, 2Q + 16]``.
    """

    coeffs: np.ndarray
    scale: float
    truncation: int
    tail: float


def cheb_coeffs(g: TestFunction, sigma: float, Q: int, m: int | None = None) -> ChebCoefficients:
    if Q < 0:
        raise ValueError("truncation must be nonnegative")
    if not sigma > 0:
        raise ValueError("scale must be positive")
    poly = g.is_polynomial
    extra = 0 if poly else Q + 16
    qtop = Q + extra
    deg = g.degree if poly else qtop
    need = max(qtop + deg, 2 * qtop) + 1
    m = max(m or 0, need)
    quad = quadrature(m)
    table = chebyshev_u_table(qtop, quad.nodes)
    full = table @ (quad.weights * g(sigma * quad.nodes))
    if poly:
        full[deg + 1:] = 0.0
        tail = 0.0
        if deg > Q:
            tail = float(np.max(np.abs(cheb_coeffs(g, sigma, deg).coeffs[Q + 1:])))
    else:
        tail = float(np.max(np.abs(full[Q + 1:]), initial=0.0))
    return ChebCoefficients(full[: Q + 1].copy(), float(sigma), Q, tail)


# ---------------------------------------------------------------- kernel K_z


def _check_kernel_args(z, x, y):
    z = np.asarray(z, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(z < 0) or np.any(z >= 1):
        raise KernelDomainError("kernel requires 0 <= z < 1")
    if np.any(np.abs(x) >= 2) or np.any(np.abs(y) >= 2):
        raise KernelDomainError("kernel requires |x| < 2 and |y| < 2")
    return z, x, y


def _scalar(v):
    return float(v) if np.ndim(v) == 0 else v


def _kernel_unchecked(z, x, y):
    z2 = z * z
    return (1.0 - z2) / (z2 * (x - y) ** 2 - x * y * z * (1.0 - z) ** 2 + (1.0 - z2) ** 2)


def kernel_closed(z, x, y):
    z, x, y = _check_kernel_args(z, x, y)
    return _scalar(_kernel_unchecked(z, x, y))


def kernel_series(z, x, y, Q: int):
    """Partial sum ``sum_{q <= Q} U_q(x) U_q(y) z^q``."""
    if Q < 0:
        raise ValueError("truncation must be nonnegative")
    z, x, y = _check_kernel_args(z, x, y)
    z, x, y = np.broadcast_arrays(z, x, y)
    ux_prev, ux = np.ones_like(x), x.copy()
    uy_prev, uy = np.ones_like(y), y.copy()
    total = np.ones_like(x)
    zq = np.ones_like(z)
    for _ in range(Q):
        zq = zq * z
        total = total + ux * uy * zq
        ux_prev, ux = ux, x * ux - ux_prev
        uy_prev, uy = uy, y * uy - uy_prev
    return _scalar(total)


def kernel_tail_bound(z, x, y, Q: int):
    """Bound on ``|K_z - kernel_series(Q)|``:
    ``2 z^{Q+1} / ((1 - z)^2 sqrt(1 - x^2/4) sqrt(1 - y^2/4))``."""
    z, x, y = _check_kernel_args(z, x, y)
    den = (1.0 - z) ** 2 * np.sqrt(1.0 - 0.25 * x * x) * np.sqrt(1.0 - 0.25 * y * y)
    return _scalar(2.0 * z ** (Q + 1) / den)


def pair_nodes(z: float) -> int:
    """Default tensor-rule size for :func:`semicircular_pair_expectation`.

    ``K_z`` has poles at distance ``O(1 - z)`` from ``[-2, 2]``, so the Gauss
    rule converges like ``exp(-c m (1 - z))``; ``20 / (1 - z)`` nodes reach
    rounding level.  Capped at ``PAIR_NODES_MAX``.
    """
    return int(min(PAIR_NODES_MAX, max(200, math.ceil(20.0 / (1.0 - z)))))


def semicircular_pair_expectation(phi: TestFunction, psi: TestFunction, z: float, m: int | None = None) -> float:
    """``int int phi(x) psi(y) K_z(x, y) dmu_1(x) dmu_1(y)`` on an ``m x m`` tensor grid."""
    z = float(z)
    if not 0.0 <= z < 1.0:
        raise KernelDomainError("kernel requires 0 <= z < 1")
    quad = quadrature(m or pair_nodes(z))
    x = quad.nodes
    a = quad.weights * phi(x)
    b = quad.weights * psi(x)
    total = 0.0
    # row blocks keep memory bounded for large m
    for lo in range(0, x.size, PAIR_BLOCK):
        ker = _kernel_unchecked(z, x[lo : lo + PAIR_BLOCK, None], x[None, :])
        total += float(a[lo : lo + PAIR_BLOCK] @ ker @ b)
    return total


# ---------------------------------------------------------------- limiting covariance


def _scales(model: CovarianceModel, s, t):
    ss, st = model.sigma(s), model.sigma(t)
    if ss == 0.0 or st == 0.0:
        raise DegenerateTimeError(f"sigma vanishes at t={s if ss == 0.0 else t}")
    return ss, st, model.rho(s, t)


def _prefactor(model, s, t, variant):
    return model.evaluate(s, t) if Variant(variant) is Variant.R_CORRECTED else 1.0


def limiting_cov_series(
    f: TestFunction,
    g: TestFunction,
    model: CovarianceModel,
    s: float,
    t: float,
    Q: int | None = None,
    variant: Variant = Variant.R_CORRECTED,
) -> float:
    """Series route.  ``Q=None`` picks the truncation automatically: the lower
    derivative degree for polynomials, otherwise the first ``q`` after which
    three consecutive terms fall below 1e-14 (at most 512)."""
    ss, st, r = _scales(model, s, t)
    fp, gp = f.derivative(), g.derivative()
    if Q is None:
        if fp.is_polynomial or gp.is_polynomial:
            degs = [h.degree for h in (fp, gp) if h.is_polynomial]
            Q = min(degs)
        else:
            Q = SERIES_CAP
        adaptive = not (fp.is_polynomial or gp.is_polynomial)
    else:
        adaptive = False
    c = cheb_coeffs(fp, ss, Q).coeffs
    d = cheb_coeffs(gp, st, Q).coeffs
    total = 0.0
    run = 0
    rq = 1.0
    for q in range(Q + 1):
        term = c[q] * d[q] * rq / (q + 1)
        total += term
        rq *= r
        if adaptive:
            run = run + 1 if abs(term) < SERIES_TOL else 0
            if run >= SERIES_RUN:
                break
    return _prefactor(model, s, t, variant) * 2.0 * total


def _gauss_legendre01(k):
    x, w = np.polynomial.legendre.leggauss(k)
    return 0.5 * (x + 1.0), 0.5 * w


def limiting_cov_quadrature(
    f: TestFunction,
    g: TestFunction,
    model: CovarianceModel,
    s: float,
    t: float,
    m: int = 200,
    z_nodes: int = 64,
    variant: Variant = Variant.R_CORRECTED,
    normalization: Normalization = Normalization.PROOF_CONSISTENT,
    z_tol: float = 1e-9,
    z_max: int = 4096,
) -> float:
    """Quadrature route: semicircle tensor rule in ``(x, y)``, Gauss-Legendre in ``z``
    with the node count doubled until successive values differ by less than ``z_tol``.

    ``K_{z rho}`` sharpens as ``|rho| -> 1``, so the ``(x, y)`` rule uses at least
    ``10 / (1 - |rho|)`` nodes.  When that exceeds ``QUAD_NODES_MAX`` (roughly
    ``|rho| > 0.995``) the route refuses, as it does within ``RHO_EDGE`` of 1.
    """
    ss, st, r = _scales(model, s, t)
    if r >= 1.0 - RHO_EDGE or r <= -1.0 + RHO_EDGE:
        raise QuadratureRefusal(
            f"|rho| = {abs(r):.9g} is within {RHO_EDGE:g} of 1; use the series route"
        )
    need = math.ceil(10.0 / (1.0 - abs(r)))
    if need > QUAD_NODES_MAX:
        raise QuadratureRefusal(
            f"|rho| = {abs(r):.9g} needs {need} nodes per axis (cap {QUAD_NODES_MAX}); use the series route"
        )
    quad = quadrature(max(m, need))
    x = quad.nodes
    a = quad.weights * f.derivative()(ss * x)
    b = quad.weights * g.derivative()(st * x)
    # K_{-u}(x, y) = K_u(-x, y)
    xs = (-x if r < 0 else x)[:, None]
    ys = x[None, :]
    u = abs(r)

    # K_z = (1 - z^2) / (z^2 d2 - z (1 - z)^2 xy + (1 - z^2)^2), with d2 and xy fixed
    d2 = (xs - ys) ** 2
    xy = xs * ys

    def integral(k):
        zk, wk = _gauss_legendre01(k)
        vals = np.empty(k)
        for j, z in enumerate(zk * u):
            c = 1.0 - z * z
            ker = c / ((z * z) * d2 - (z * (1.0 - z) ** 2) * xy + c * c)
            vals[j] = a @ ker @ b
        return float(np.dot(wk, vals))

    k = z_nodes
    prev = integral(k)
    while True:
        k *= 2
        cur = integral(k)
        if abs(cur - prev) < z_tol:
            break
        if k >= z_max:
            raise ArithmeticError(f"z-integration did not settle with {k} nodes")
        prev = cur
    norm = 2.0 if Normalization(normalization) is Normalization.THEOREM_STATED else 1.0
    return _prefactor(model, s, t, variant) * 2.0 * norm * cur


def pastur_shcherbina_cov(
    f: TestFunction,
    g: TestFunction,
    sigma: float,
    m: int = 256,
    constant_mode: ConstantMode = ConstantMode.SERIES_CALIBRATED,
) -> float:
    """Single-time limiting covariance as a divided-difference double integral over
    ``[-2 sigma, 2 sigma]^2`` with weight ``(4 sigma^2 - l1 l2) / (sqrt(4 sigma^2 - l1^2) sqrt(4 sigma^2 - l2^2))``.

    Substituting ``l = 2 sigma cos(th)`` removes the edge singularities; the
    ``th`` integrals use the ``m``-point Gauss-Chebyshev (midpoint) rule.
    """
    sigma = float(sigma)
    if not sigma > 0:
        raise ValueError("scale must be positive")
    th = (2.0 * np.arange(1, m + 1) - 1.0) * math.pi / (2.0 * m)
    lam = 2.0 * sigma * np.cos(th)
    w = math.pi / m

    def divided(h):
        hv = h(lam)
        num = hv[:, None] - hv[None, :]
        den = lam[:, None] - lam[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = num / den
        np.fill_diagonal(out, h.derivative()(lam))
        return out

    weight = 4.0 * sigma * sigma - lam[:, None] * lam[None, :]
    total = w * w * float(np.sum(divided(f) * divided(g) * weight))
    mode = ConstantMode(constant_mode)
    const = 1.0 / (2.0 * math.pi) if mode is ConstantMode.AS_PRINTED else 1.0 / (2.0 * math.pi**2)
    return const * total
