"""Eigen-decomposition of packed symmetric matrices, linear statistics and
eigenvalue derivatives in packed coordinates.

Derivatives are taken with respect to the packed coefficients ``x_{k,h}``
(``k <= h``, row-major upper triangle) where the matrix diagonal is
``sqrt(2) * x_{k,k}``.  With ``U`` the eigenvector matrix,

    V^{i,j}_{k,h} = U_{k,i} U_{h,j} + U_{h,i} U_{k,j}    (k != h)
    V^{i,j}_{k,k} = sqrt(2) U_{k,i} U_{k,j}

gives ``dPhi_i/dx = V^{i,i}`` and
``d2Phi_i/dx dx' = sum_{j != i} 2 / (Phi_i - Phi_j) V^{i,j} V^{i,j}'``.
Use :func:`to_matrix_gradient` for derivatives with respect to raw entries.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import hermite_e

from goe_fluct import _backend
from goe_fluct.ensemble import SQRT2, PackedSymmetric, packed_size

__all__ = [
    "SweepBudgetExceeded",
    "DegenerateSpectrumError",
    "SpectralDecomposition",
    "eigen_decompose",
    "eigenvalues",
    "TestFunction",
    "PolynomialFunction",
    "BuiltinFunction",
    "parse_test_function",
    "linear_statistic",
    "v_matrix",
    "grad_eigenvalue",
    "hess_eigenvalue",
    "PsiPi",
    "psi_pi_functionals",
    "to_matrix_gradient",
    "DEGENERACY_RTOL",
]

DEGENERACY_RTOL = 1e-10
SWEEPS_PER_DIM = 30


class SweepBudgetExceeded(ArithmeticError):
    """QL iteration did not converge within ``30 * n`` sweeps."""


class DegenerateSpectrumError(ArithmeticError):
    """An eigenvalue gap is below the degeneracy tolerance."""


def _as_matrix(m) -> np.ndarray:
    if isinstance(m, PackedSymmetric):
        mat = m.to_matrix()
    else:
        mat = np.array(m, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("expected a square matrix")
    if not np.all(np.isfinite(mat)):
        raise ValueError("matrix has non-finite entries")
    return np.ascontiguousarray(mat)


def _solve(mat, vectors):
    n = mat.shape[0]
    try:
        vals = _backend.tridiag_ql(mat, vectors, SWEEPS_PER_DIM * n)
    except ArithmeticError as exc:
        raise SweepBudgetExceeded(str(exc)) from None
    return np.asarray(vals)


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenvalues in descending order and orthonormal eigenvectors as columns of ``U``.

    Each column is signed so that its first nonzero component is positive.
    """

    eigenvalues: np.ndarray
    U: np.ndarray

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    @property
    def scale(self) -> float:
        return float(np.max(np.abs(self.eigenvalues), initial=0.0))

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.eigenvalues) @ self.U.T

    def gap_tolerance(self) -> float:
        return DEGENERACY_RTOL * self.scale

    def is_simple(self, i: int | None = None) -> bool:
        gaps = -np.diff(self.eigenvalues)
        tol = self.gap_tolerance()
        if i is None:
            return bool(np.all(gaps > tol))
        ok = True
        if i > 0:
            ok &= gaps[i - 1] > tol
        if i < self.n - 1:
            ok &= gaps[i] > tol
        return bool(ok)


def eigen_decompose(m) -> SpectralDecomposition:
    """Householder tridiagonalization followed by implicit-shift QL."""
    a = _as_matrix(m)
    vals = _solve(a, True)
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = a[:, order]
    for j in range(vecs.shape[1]):
        nz = np.flatnonzero(vecs[:, j])
        if nz.size and vecs[nz[0], j] < 0:
            vecs[:, j] = -vecs[:, j]
    vals.setflags(write=False)
    vecs.setflags(write=False)
    return SpectralDecomposition(vals, vecs)


def eigenvalues(m) -> np.ndarray:
    """Descending eigenvalues only (skips the eigenvector accumulation)."""
    vals = _solve(_as_matrix(m), False)
    return -np.sort(-vals)


# ---------------------------------------------------------------- test functions


class TestFunction:
    """A test function with access to its derivatives.

    ``degree`` is the polynomial degree, or ``None`` for built-ins.
    """

    __test__ = False  # not a pytest class
    label = "?"
    degree: int | None = None

    def __call__(self, x):
        raise NotImplementedError

    def derivative(self, k: int = 1) -> "TestFunction":
        raise NotImplementedError

    @property
    def is_polynomial(self) -> bool:
        return self.degree is not None


class PolynomialFunction(TestFunction):
    """Polynomial with ascending coefficients ``c0 + c1 x + ...``."""

    def __init__(self, coeffs, label: str | None = None):
        coef = np.trim_zeros(np.asarray(coeffs, dtype=np.float64), "b")
        if coef.size == 0:
            coef = np.zeros(1)
        if not np.all(np.isfinite(coef)):
            raise ValueError("polynomial coefficients must be finite")
        self.poly = Polynomial(coef)
        self.coeffs = coef
        self.degree = coef.size - 1
        self.label = label or "poly:" + ",".join(repr(float(c)) for c in coef)

    def __call__(self, x):
        return self.poly(np.asarray(x, dtype=np.float64))

    def derivative(self, k: int = 1):
        if k < 0:
            raise ValueError("derivative order must be nonnegative")
        if k == 0:
            return self
        return PolynomialFunction(self.poly.deriv(k).coef, f"d{k}[{self.label}]")

    def __repr__(self):
        return f"PolynomialFunction({self.coeffs.tolist()})"


def _arctan_derivs(x, k):
    u = 1.0 + x * x
    if k == 0:
        return np.arctan(x)
    if k == 1:
        return 1.0 / u
    if k == 2:
        return -2.0 * x / u**2
    if k == 3:
        return (6.0 * x * x - 2.0) / u**3
    if k == 4:
        return 24.0 * x * (1.0 - x * x) / u**4
    raise ValueError("arctan derivatives are provided up to order 4")


def _gaussian_derivs(x, k):
    # d^k/dx^k exp(-x^2/2) = (-1)^k He_k(x) exp(-x^2/2)
    he = np.zeros(k + 1)
    he[k] = 1.0
    return (-1.0) ** k * hermite_e.hermeval(x, he) * np.exp(-0.5 * x * x)


_BUILTINS = {
    "sin": None,  # derivatives by quarter-turn rotation, see BuiltinFunction
    "cos": None,
    "gaussian": _gaussian_derivs,
    "arctan": _arctan_derivs,
}
_MAX_ORDER = {"sin": None, "cos": None, "gaussian": None, "arctan": 4}


class BuiltinFunction(TestFunction):
    """Smooth built-in with bounded derivatives: ``sin``, ``cos``, ``gaussian`` (exp(-x^2/2)), ``arctan``."""

    def __init__(self, name: str, order: int = 0):
        if name not in _BUILTINS:
            raise ValueError(f"unknown built-in test function {name!r}")
        top = _MAX_ORDER[name]
        if order < 0 or (top is not None and order > top):
            raise ValueError(f"{name}: derivative order {order} not available")
        self.name = name
        self.order = order
        self.label = name if order == 0 else f"d{order}[{name}]"

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.name in ("sin", "cos"):
            cycle = (np.sin, np.cos, lambda v: -np.sin(v), lambda v: -np.cos(v))
            start = 0 if self.name == "sin" else 1
            return cycle[(start + self.order) % 4](x)
        return _BUILTINS[self.name](x, self.order)

    def derivative(self, k: int = 1):
        if k < 0:
            raise ValueError("derivative order must be nonnegative")
        return BuiltinFunction(self.name, self.order + k)

    def __repr__(self):
        return f"BuiltinFunction({self.name!r}, order={self.order})"


_POWER = re.compile(r"^x\s*(?:\^|\*\*)\s*(\d+)$")


def parse_test_function(text: str) -> TestFunction:
    """Parse ``x``, ``x^k``, ``x**k``, ``poly:c0,c1,...`` or a built-in name."""
    if not isinstance(text, str):
        raise ValueError(f"test function must be a string, got {text!r}")
    s = text.strip()
    if s == "x":
        return PolynomialFunction([0.0, 1.0], label=s)
    m = _POWER.match(s)
    if m:
        k = int(m.group(1))
        if k < 1:
            raise ValueError("power must be at least 1")
        coef = np.zeros(k + 1)
        coef[k] = 1.0
        return PolynomialFunction(coef, label=s)
    if s.startswith("poly:"):
        try:
            coef = [float(c) for c in s[5:].split(",")]
        except ValueError:
            raise ValueError(f"bad polynomial coefficients in {text!r}") from None
        f = PolynomialFunction(coef, label=s)
        if f.degree < 1:
            raise ValueError("polynomial test functions need degree >= 1")
        return f
    if s in _BUILTINS:
        return BuiltinFunction(s)
    raise ValueError(f"unrecognized test function {text!r}")


def linear_statistic(d: SpectralDecomposition | np.ndarray, f: TestFunction) -> float:
    """``sum_i f(Phi_i)``; accepts a decomposition or a bare eigenvalue array."""
    vals = d.eigenvalues if isinstance(d, SpectralDecomposition) else np.asarray(d)
    out = float(np.sum(f(vals)))
    if not math.isfinite(out):
        raise ValueError("linear statistic is not finite")
    return out


# ---------------------------------------------------------------- derivatives


def v_matrix(U: np.ndarray, i: int, j: int) -> np.ndarray:
    """Packed vector ``V^{i,j}_{k,h}`` over ``k <= h``."""
    n = U.shape[0]
    outer = np.outer(U[:, i], U[:, j])
    sym = outer + outer.T
    rows, cols = np.triu_indices(n)
    out = sym[rows, cols]
    diag = rows == cols
    out[diag] = SQRT2 * outer[rows[diag], rows[diag]]
    return out


def _check_index(d, i):
    if not 0 <= i < d.n:
        raise IndexError(f"eigenvalue index {i} out of range for n={d.n}")


def grad_eigenvalue(d: SpectralDecomposition, i: int) -> np.ndarray:
    """``dPhi_i / dx_{k,h}`` in packed order (0-based ``i``, descending order)."""
    _check_index(d, i)
    if not d.is_simple(i):
        raise DegenerateSpectrumError(f"eigenvalue {i} is not simple within tolerance")
    return v_matrix(d.U, i, i)


def hess_eigenvalue(d: SpectralDecomposition, i: int) -> np.ndarray:
    """``d2Phi_i / dx_{k,h} dx_{p,q}`` as a ``(d(n), d(n))`` array.

    Refuses when any gap ``|Phi_i - Phi_j|`` is below the tolerance.
    """
    _check_index(d, i)
    tol = d.gap_tolerance()
    phi = d.eigenvalues
    size = packed_size(d.n)
    out = np.zeros((size, size))
    for j in range(d.n):
        if j == i:
            continue
        gap = phi[i] - phi[j]
        if abs(gap) <= tol:
            raise DegenerateSpectrumError(
                f"gap between eigenvalues {i} and {j} is {abs(gap):.3g} <= {tol:.3g}"
            )
        v = v_matrix(d.U, i, j)
        out += (2.0 / gap) * np.outer(v, v)
    return out


@dataclass(frozen=True)
class PsiPi:
    psi: np.ndarray  # (d,)
    psi2: np.ndarray  # (d, d), indexed [kh, pq]
    pi: np.ndarray  # (d, d)


def psi_pi_functionals(d: SpectralDecomposition, f: TestFunction) -> PsiPi:
    """Psi_{k,h}[f], Psi^{p,q}_{k,h}[f] and Pi^{p,q}_{k,h}[f] on a simple spectrum.

    Pi is evaluated through divided differences,
    ``sum_{i != j} (f(Phi_i) - f(Phi_j)) / (Phi_i - Phi_j) V^{i,j} V^{i,j}'``.
    """
    if not d.is_simple():
        raise DegenerateSpectrumError("spectrum is not simple within tolerance")
    n = d.n
    phi = d.eigenvalues
    fv = np.asarray(f(phi), dtype=np.float64)
    grads = np.array([v_matrix(d.U, i, i) for i in range(n)])
    psi = fv @ grads
    psi2 = grads.T @ (fv[:, None] * grads)
    size = packed_size(n)
    pi = np.zeros((size, size))
    for i in range(n):
        for j in range(i + 1, n):
            dd = (fv[i] - fv[j]) / (phi[i] - phi[j])
            v = v_matrix(d.U, i, j)
            # ordered pairs (i, j) and (j, i) contribute equally
            pi += 2.0 * dd * np.outer(v, v)
    return PsiPi(psi, psi2, pi)


def to_matrix_gradient(grad: np.ndarray, n: int) -> np.ndarray:
    """Convert a packed-coordinate gradient to the symmetric matrix ``G`` with
    ``dPhi = <G, dA>_F`` for symmetric perturbations ``dA`` of the raw matrix.

    Off-diagonal: ``G_{k,h} = grad_{k,h} / 2``; diagonal: ``G_{k,k} = grad_{k,k} / sqrt(2)``.
    For an eigenvalue gradient this is ``U_i U_i^T``.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != (packed_size(n),):
        raise ValueError("gradient length does not match n")
    rows, cols = np.triu_indices(n)
    vals = np.where(rows == cols, grad / SQRT2, grad / 2.0)
    out = np.empty((n, n))
    out[rows, cols] = vals
    out[cols, rows] = vals
    return out
