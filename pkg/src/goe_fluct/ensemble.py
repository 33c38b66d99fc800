"""Sampling of GOE processes, standard GOE matrices and correlated GOE pairs.

Matrices are stored packed: ``coeffs`` holds the upper triangle row by row,
``(0,0), (0,1), ..., (0,n-1), (1,1), ...``, and the diagonal coefficient
``x`` stands for the matrix entry ``sqrt(2) * x``.

Randomness
----------
Every packed entry of every replica owns an independent stream.  The stream
key is ``stream_key(seed, replica, tag, entry)``, a chain of splitmix64
finalizers (``mix64``), and the ``c``-th 64-bit word of the stream is
``mix64(key + c * 0x9E3779B97F4A7C15)`` for ``c = 1, 2, ...``.  Uniforms use
the top 53 bits; Gaussians come from the Marsaglia polar method, taking
words in pairs and rejecting ``s >= 1`` or ``s == 0``.  Nothing depends on
scheduling, so replicas can be drawn in any order or on any thread.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from goe_fluct import _backend
from goe_fluct.covariance import (
    CovarianceModel,
    DegenerateTimeError,
    GramFactor,
    TimeGrid,
    gram_factor,
)

SQRT2 = math.sqrt(2.0)

TAG_PATH = 0
TAG_GOE = 1
TAG_PAIR = 2

_MAGIC = b"GOEP"
_HEADER = struct.Struct("<4sQQQ")

__all__ = [
    "PackedSymmetric",
    "GoePath",
    "packed_size",
    "packed_index",
    "standard_normals",
    "sample_goe_path",
    "sample_standard_goe",
    "sample_correlated_goe_pair",
]


def packed_size(n: int) -> int:
    return n * (n + 1) // 2


def packed_index(n: int, k: int, h: int) -> int:
    """Position of entry ``(k, h)`` (0-based, any order) in the packed vector."""
    if k > h:
        k, h = h, k
    return k * n - k * (k - 1) // 2 + (h - k)


@lru_cache(maxsize=32)
def _triu(n):
    rows, cols = np.triu_indices(n)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols, rows == cols


def _unscale_diagonal(d):
    """``d / sqrt(2)``, nudged by an ulp where that makes ``sqrt(2) * x == d`` exactly.

    Off-diagonal coefficients round-trip bit-for-bit; for the diagonal the
    guarantee is that the realized matrix does.
    """
    x = d / SQRT2
    for _ in range(2):
        off = SQRT2 * x != d
        if not off.any():
            break
        up = np.nextafter(x, np.inf)
        down = np.nextafter(x, -np.inf)
        x = np.where(off & (SQRT2 * up == d), up, np.where(off & (SQRT2 * down == d), down, x))
    return x


def _check_n(n):
    if int(n) != n or n < 1:
        raise ValueError(f"matrix dimension must be a positive integer, got {n!r}")
    return int(n)


@dataclass(frozen=True, eq=False)
class PackedSymmetric:
    n: int
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if coeffs.shape != (packed_size(self.n),):
            raise ValueError(
                f"expected {packed_size(self.n)} coefficients for n={self.n}, got {coeffs.shape}"
            )
        object.__setattr__(self, "coeffs", coeffs)

    def to_matrix(self) -> np.ndarray:
        n = self.n
        rows, cols, diag = _triu(n)
        vals = np.where(diag, SQRT2 * self.coeffs, self.coeffs)
        out = np.empty((n, n))
        out[rows, cols] = vals
        out[cols, rows] = vals
        return out

    @classmethod
    def from_matrix(cls, mat) -> "PackedSymmetric":
        mat = np.asarray(mat, dtype=np.float64)
        n = mat.shape[0]
        if mat.shape != (n, n):
            raise ValueError("matrix must be square")
        if not np.array_equal(mat, mat.T):
            raise ValueError("matrix must be exactly symmetric")
        rows, cols, diag = _triu(n)
        vals = mat[rows, cols].copy()
        vals[diag] = _unscale_diagonal(np.diag(mat))
        return cls(n, vals)

    def __eq__(self, other):
        return (
            isinstance(other, PackedSymmetric)
            and self.n == other.n
            and np.array_equal(self.coeffs, other.coeffs)
        )


@dataclass(frozen=True, eq=False)
class GoePath:
    n: int
    grid: TimeGrid
    coeffs: np.ndarray  # shape (len(grid), packed_size(n))
    seed: int
    replica: int = 0
    model: dict | None = None

    @property
    def matrices(self) -> list[PackedSymmetric]:
        return [PackedSymmetric(self.n, row) for row in self.coeffs]

    def at(self, k: int) -> PackedSymmetric:
        return PackedSymmetric(self.n, self.coeffs[k])

    def to_bytes(self) -> bytes:
        """Debug dump: header ``b"GOEP", n, len(grid), seed`` (little-endian u64),
        then the grid times and the packed coefficients as little-endian f64."""
        head = _HEADER.pack(_MAGIC, self.n, len(self.grid), self.seed)
        body = self.grid.times.astype("<f8").tobytes() + self.coeffs.astype("<f8").tobytes()
        return head + body

    @classmethod
    def from_bytes(cls, blob: bytes) -> "GoePath":
        magic, n, k, seed = _HEADER.unpack_from(blob)
        if magic != _MAGIC:
            raise ValueError("not a GoePath dump")
        off = _HEADER.size
        times = np.frombuffer(blob, dtype="<f8", count=k, offset=off)
        off += 8 * k
        d = packed_size(n)
        coeffs = np.frombuffer(blob, dtype="<f8", count=k * d, offset=off).reshape(k, d)
        return cls(int(n), TimeGrid(times.copy()), coeffs.astype(np.float64), int(seed))

    def equals(self, other: "GoePath") -> bool:
        return (
            self.n == other.n
            and self.grid == other.grid
            and self.seed == other.seed
            and self.replica == other.replica
            and np.array_equal(self.coeffs, other.coeffs)
        )


def _seed64(seed):
    seed = int(seed)
    if seed < 0 or seed >= 1 << 64:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    return seed


def standard_normals(seed: int, replica: int, tag: int, n_entries: int, k: int) -> np.ndarray:
    """Array ``(n_entries, k)``: row ``e`` is the first ``k`` normals of entry stream ``e``."""
    out = np.empty((n_entries, k), dtype=np.float64)
    _backend.fill_normals(_seed64(seed), int(replica), int(tag), out)
    return out


def sample_goe_path(
    model: CovarianceModel,
    n: int,
    grid: TimeGrid,
    seed: int,
    replica: int = 0,
    factor: GramFactor | None = None,
) -> GoePath:
    """Draw one path of the GOE process on ``grid``.

    Each of the ``n(n+1)/2`` entry processes is an independent Gaussian
    vector ``L xi`` across the grid, with ``L`` the Gram Cholesky factor;
    packed coefficients are those entries divided by ``sqrt(n)``.
    """
    n = _check_n(n)
    if not isinstance(grid, TimeGrid):
        grid = TimeGrid(grid)
    for t in grid.times:
        if model.sigma(t) == 0.0:
            raise DegenerateTimeError(f"sigma({t}) = 0: degenerate time on the grid")
    if factor is None:
        factor = gram_factor(model, grid)
    elif factor.grid != grid:
        raise ValueError("Gram factor was built for a different grid")
    k = len(grid)
    xi = standard_normals(seed, replica, TAG_PATH, packed_size(n), k)
    lower = factor.lower
    x = np.zeros_like(xi)
    # explicit column sums keep the result independent of BLAS threading
    for j in range(k):
        acc = x[:, j]
        for m in range(j + 1):
            acc += lower[j, m] * xi[:, m]
    coeffs = np.ascontiguousarray((x / math.sqrt(n)).T)
    desc = model.to_dict() if hasattr(model, "to_dict") else None
    return GoePath(n, grid, coeffs, _seed64(seed), int(replica), desc)


def sample_standard_goe(n: int, seed: int, replica: int = 0) -> PackedSymmetric:
    """Off-diagonal entries have variance ``1/n``, diagonal entries ``2/n``."""
    n = _check_n(n)
    xi = standard_normals(seed, replica, TAG_GOE, packed_size(n), 1)
    return PackedSymmetric(n, xi[:, 0] / math.sqrt(n))


def sample_correlated_goe_pair(
    n: int, z: float, seed: int, replica: int = 0
) -> tuple[PackedSymmetric, PackedSymmetric]:
    """Return ``(A, z A + sqrt(1 - z^2) A~)`` with ``A``, ``A~`` independent standard GOE."""
    n = _check_n(n)
    z = float(z)
    if not 0.0 <= z <= 1.0:
        raise ValueError(f"correlation must lie in [0, 1], got {z}")
    xi = standard_normals(seed, replica, TAG_PAIR, packed_size(n), 2) / math.sqrt(n)
    a = xi[:, 0]
    b = z * a + math.sqrt(1.0 - z * z) * xi[:, 1]
    return PackedSymmetric(n, a), PackedSymmetric(n, b)
