"""Covariance models R(s, t) for the entry processes and Gram factorization on time grids.

All built-in models satisfy the regularity hypotheses required by the limit
theorems analytically (absolute continuity of ``s -> R(s, t)`` with
integrable derivative, and ``C^1`` variance away from zero); nothing is
checked numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CovarianceError",
    "DegenerateTimeError",
    "CovarianceModel",
    "FractionalBrownian",
    "Brownian",
    "OrnsteinUhlenbeck",
    "Tabulated",
    "TimeGrid",
    "GramFactor",
    "JitterPolicy",
    "evaluate",
    "sigma",
    "rho",
    "gram_matrix",
    "gram_factor",
    "model_from_dict",
]


class CovarianceError(ValueError):
    """Invalid covariance model, query, or Gram matrix."""


class DegenerateTimeError(CovarianceError):
    """A time with zero standard deviation where a correlation is required."""


def _check_time(t: float) -> float:
    t = float(t)
    if not math.isfinite(t) or t < 0.0:
        raise CovarianceError(f"time must be finite and nonnegative, got {t!r}")
    return t


class CovarianceModel:
    """Base class; subclasses implement :meth:`evaluate` and may add :meth:`partial_s`."""

    kind = "abstract"

    def evaluate(self, s: float, t: float) -> float:
        raise NotImplementedError

    def sigma(self, t: float) -> float:
        return math.sqrt(max(self.evaluate(t, t), 0.0))

    def rho(self, s: float, t: float) -> float:
        ss, st = self.sigma(s), self.sigma(t)
        if ss == 0.0 or st == 0.0:
            zero = s if ss == 0.0 else t
            raise DegenerateTimeError(
                f"correlation undefined at t={zero}: sigma vanishes for {self.kind}"
            )
        if float(s) == float(t):
            return 1.0
        r = self.evaluate(s, t) / (ss * st)
        if abs(r) > 1.0:
            if abs(r) - 1.0 <= 1e-12:
                return math.copysign(1.0, r)
            raise CovarianceError(f"|rho({s}, {t})| = {abs(r)} exceeds 1: not a covariance")
        return r

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class FractionalBrownian(CovarianceModel):
    """R(s, t) = (s^{2H} + t^{2H} - |t - s|^{2H}) / 2."""

    hurst: float
    kind = "fbm"

    def __post_init__(self):
        if not 0.0 < self.hurst < 1.0:
            raise CovarianceError(f"Hurst exponent must lie in (0, 1), got {self.hurst}")

    def evaluate(self, s, t):
        s, t = _check_time(s), _check_time(t)
        if self.hurst == 0.5:
            return min(s, t)
        h2 = 2.0 * self.hurst
        return 0.5 * (s**h2 + t**h2 - abs(t - s) ** h2)

    def partial_s(self, s, t):
        s, t = _check_time(s), _check_time(t)
        h2 = 2.0 * self.hurst
        if s == t:
            # two-sided derivative exists only for H > 1/2; H = 1/2 uses the mean of both sides
            if self.hurst > 0.5:
                return 0.5 * h2 * s ** (h2 - 1.0) if s > 0.0 else math.inf
            return 0.5 if self.hurst == 0.5 else math.nan
        return 0.5 * h2 * (s ** (h2 - 1.0) - math.copysign(abs(s - t) ** (h2 - 1.0), s - t))

    def to_dict(self):
        return {"kind": "fbm", "hurst": self.hurst}


@dataclass(frozen=True)
class Brownian(CovarianceModel):
    """R(s, t) = min(s, t)."""

    kind = "bm"

    def evaluate(self, s, t):
        return min(_check_time(s), _check_time(t))

    def partial_s(self, s, t):
        s, t = _check_time(s), _check_time(t)
        return 1.0 if s < t else (0.5 if s == t else 0.0)

    def to_dict(self):
        return {"kind": "bm"}


@dataclass(frozen=True)
class OrnsteinUhlenbeck(CovarianceModel):
    """Stationary unit-variance OU: R(s, t) = exp(-theta |t - s|)."""

    theta: float
    kind = "ou"

    def __post_init__(self):
        if not self.theta > 0.0:
            raise CovarianceError(f"mean-reversion rate must be positive, got {self.theta}")

    def evaluate(self, s, t):
        s, t = _check_time(s), _check_time(t)
        return math.exp(-self.theta * abs(t - s))

    def partial_s(self, s, t):
        s, t = _check_time(s), _check_time(t)
        if s == t:
            return 0.0
        return -self.theta * math.copysign(1.0, s - t) * math.exp(-self.theta * abs(t - s))

    def to_dict(self):
        return {"kind": "ou", "theta": self.theta}


@dataclass(frozen=True, eq=False)
class Tabulated(CovarianceModel):
    """Covariance known only on a finite set of times; off-grid queries are errors."""

    times: tuple
    matrix: np.ndarray = field(repr=False)
    kind = "tabulated"

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        mat = np.array(self.matrix, dtype=np.float64)
        if mat.shape != (len(times), len(times)):
            raise CovarianceError("tabulated matrix must be square and match the times")
        if not np.all(np.isfinite(mat)):
            raise CovarianceError("tabulated matrix has non-finite entries")
        if not np.allclose(mat, mat.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(mat).max(initial=0))):
            raise CovarianceError("tabulated matrix is not symmetric")
        for t in times:
            _check_time(t)
        if len(set(times)) != len(times):
            raise CovarianceError("tabulated times must be distinct")
        mat = 0.5 * (mat + mat.T)
        if len(times) and np.linalg.eigvalsh(mat).min() < -1e-10 * max(1.0, np.abs(mat).max()):
            raise CovarianceError("tabulated matrix is not positive semidefinite")
        mat.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(times)})

    def _lookup(self, t):
        t = _check_time(t)
        try:
            return self._index[t]
        except KeyError:
            raise CovarianceError(f"time {t} is not on the tabulated grid") from None

    def evaluate(self, s, t):
        return float(self.matrix[self._lookup(s), self._lookup(t)])

    def to_dict(self):
        return {"kind": "tabulated", "times": list(self.times), "matrix": self.matrix.tolist()}


def model_from_dict(spec: dict) -> CovarianceModel:
    """Build a model from its config form, e.g. ``{"kind": "fbm", "hurst": 0.75}``."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise CovarianceError(f"model descriptor must be an object with a 'kind', got {spec!r}")
    kind = spec["kind"]
    extra = set(spec) - {"kind"}
    try:
        if kind == "fbm":
            _expect_keys(extra, {"hurst"})
            return FractionalBrownian(float(spec["hurst"]))
        if kind == "bm":
            _expect_keys(extra, set())
            return Brownian()
        if kind == "ou":
            _expect_keys(extra, {"theta"})
            return OrnsteinUhlenbeck(float(spec["theta"]))
        if kind == "tabulated":
            _expect_keys(extra, {"times", "matrix"})
            return Tabulated(tuple(spec["times"]), spec["matrix"])
    except (KeyError, TypeError) as exc:
        raise CovarianceError(f"malformed {kind} model: {exc}") from None
    raise CovarianceError(f"unknown covariance kind {kind!r}")


def _expect_keys(got, allowed):
    if got - allowed:
        raise CovarianceError(f"unexpected model keys: {sorted(got - allowed)}")
    if allowed - got:
        raise CovarianceError(f"missing model keys: {sorted(allowed - got)}")


def evaluate(model: CovarianceModel, s: float, t: float) -> float:
    return model.evaluate(s, t)


def sigma(model: CovarianceModel, t: float) -> float:
    return model.sigma(t)


def rho(model: CovarianceModel, s: float, t: float) -> float:
    return model.rho(s, t)


@dataclass(frozen=True, eq=False)
class TimeGrid:
    times: np.ndarray

    def __post_init__(self):
        arr = np.array(self.times, dtype=np.float64).reshape(-1)
        if arr.size == 0:
            raise CovarianceError("time grid is empty")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise CovarianceError("grid times must be finite and nonnegative")
        if np.any(np.diff(arr) <= 0):
            raise CovarianceError("grid times must be strictly increasing")
        arr.setflags(write=False)
        object.__setattr__(self, "times", arr)

    def __len__(self):
        return self.times.size

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.times, other.times)

    def __hash__(self):
        return hash(self.times.tobytes())


@dataclass(frozen=True)
class JitterPolicy:
    """Jitter starts at ``initial * max(diag)`` and grows by ``factor`` up to ``max_retries`` times."""

    initial: float = 1e-12
    factor: float = 10.0
    max_retries: int = 6


@dataclass(frozen=True, eq=False)
class GramFactor:
    grid: TimeGrid
    lower: np.ndarray
    jitter_applied: float


def gram_matrix(model: CovarianceModel, grid: TimeGrid) -> np.ndarray:
    t = grid.times
    k = len(t)
    out = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            out[i, j] = out[j, i] = model.evaluate(t[i], t[j])
    return out


def gram_factor(
    model: CovarianceModel, grid: TimeGrid, jitter_policy: JitterPolicy | None = None
) -> GramFactor:
    """Cholesky factor of the Gram matrix, adding diagonal jitter only when needed."""
    policy = jitter_policy or JitterPolicy()
    gram = gram_matrix(model, grid)
    k = gram.shape[0]
    if k == 1:
        # 1x1: exact even when the variance is zero
        if gram[0, 0] < 0:
            raise CovarianceError("negative variance")
        return GramFactor(grid, np.array([[math.sqrt(gram[0, 0])]]), 0.0)
    scale = max(float(np.max(np.diag(gram))), 0.0) or 1.0
    jitter = 0.0
    for attempt in range(policy.max_retries + 1):
        lower = _cholesky(gram + jitter * np.eye(k), scale)
        if lower is not None:
            return GramFactor(grid, lower, jitter)
        if attempt < policy.max_retries:
            jitter = policy.initial * scale * policy.factor**attempt
    raise CovarianceError(
        f"Gram matrix is not positive semidefinite even with jitter {jitter:.3g}"
    )


def _cholesky(mat, scale):
    # pivots at rounding level (squared pivot <= 4 k eps max-diag) count as singular
    try:
        lower = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        return None
    floor = 4.0 * mat.shape[0] * np.finfo(float).eps * scale
    if not np.all(np.isfinite(lower)) or np.any(np.diag(lower) ** 2 <= floor):
        return None
    return lower
