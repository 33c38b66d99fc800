import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from goe_fluct.covariance import Brownian, FractionalBrownian, OrnsteinUhlenbeck, TimeGrid
from goe_fluct.ensemble import (
    GoePath,
    PackedSymmetric,
    packed_index,
    packed_size,
    sample_correlated_goe_pair,
    sample_goe_path,
    sample_standard_goe,
)

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


def test_packed_layout():
    p = PackedSymmetric(3, np.arange(1.0, 7.0))
    m = p.to_matrix()
    assert np.array_equal(m, m.T)
    assert m[0, 1] == 2.0 and m[0, 2] == 3.0 and m[1, 2] == 5.0
    assert np.allclose(np.diag(m), math.sqrt(2) * np.array([1.0, 4.0, 6.0]), rtol=0, atol=0)
    assert packed_index(3, 1, 2) == 4 and packed_index(3, 2, 1) == 4
    assert packed_size(4) == 10


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 8).flatmap(lambda n: st.tuples(st.just(n), st.lists(finite, min_size=n * (n + 1) // 2, max_size=n * (n + 1) // 2))))
def test_pack_unpack_roundtrip(args):
    n, vals = args
    p = PackedSymmetric(n, np.array(vals))
    q = PackedSymmetric.from_matrix(p.to_matrix())
    assert np.array_equal(q.to_matrix(), p.to_matrix())
    rows, cols = np.triu_indices(n)
    off = rows != cols
    assert np.array_equal(q.coeffs[off], p.coeffs[off])
    # the diagonal coefficient can only move by the rounding of the sqrt(2) scaling
    assert np.all(np.abs(q.coeffs - p.coeffs) <= np.spacing(np.abs(p.coeffs)) * 2)


def test_from_matrix_rejects_asymmetric():
    with pytest.raises(ValueError):
        PackedSymmetric.from_matrix(np.array([[0.0, 1.0], [2.0, 0.0]]))


def test_n_zero_rejected():
    with pytest.raises(ValueError):
        sample_standard_goe(0, 1)
    with pytest.raises(ValueError):
        sample_goe_path(Brownian(), 0, TimeGrid([1.0]), 1)


def test_path_determinism_and_dump():
    grid = TimeGrid([0.25, 0.5, 1.0])
    model = FractionalBrownian(0.7)
    a = sample_goe_path(model, 6, grid, 12345)
    b = sample_goe_path(model, 6, grid, 12345)
    assert a.equals(b)
    assert a.to_bytes() == b.to_bytes()
    back = GoePath.from_bytes(a.to_bytes())
    assert back.equals(a)
    assert a.to_bytes()[:4] == b"GOEP"
    c = sample_goe_path(model, 6, grid, 12345, replica=1)
    assert not np.array_equal(a.coeffs, c.coeffs)


def test_path_degenerate_time_rejected():
    from goe_fluct.covariance import DegenerateTimeError

    with pytest.raises(DegenerateTimeError):
        sample_goe_path(FractionalBrownian(0.6), 3, TimeGrid([0.0, 1.0]), 1)


def test_one_by_one_variance():
    M = 100_000
    x = np.array([sample_goe_path(Brownian(), 1, TimeGrid([1.0]), s).at(0).to_matrix()[0, 0] for s in range(M)])
    assert abs(np.var(x, ddof=1) - 2.0) <= 0.06


def test_trace_square_mean_n2():
    M = 100_000
    grid = TimeGrid([1.0])
    vals = np.empty(M)
    for r in range(M):
        m = sample_goe_path(OrnsteinUhlenbeck(1.0), 2, grid, 77, r).at(0).to_matrix()
        vals[r] = np.sum(m * m) / 2
    assert abs(vals.mean() - 1.5) <= 0.02


def test_standard_goe_entry_variances():
    M = 100_000
    draws = np.array([sample_standard_goe(4, 3, r).coeffs for r in range(M)])
    assert abs(np.var(draws[:, packed_index(4, 0, 1)], ddof=1) - 0.25) <= 0.01
    diag = math.sqrt(2) * draws[:, packed_index(4, 0, 0)]
    assert abs(np.var(diag, ddof=1) - 0.5) <= 0.02


def test_standard_goe_fourth_moment():
    vals = []
    for r in range(500):
        m = sample_standard_goe(200, 8, r).to_matrix()
        m2 = m @ m
        vals.append(np.sum(m2 * m2) / 200)
    assert abs(np.mean(vals) - 2.0) <= 0.1


def test_correlated_pairs():
    a, b = sample_correlated_goe_pair(5, 1.0, 4)
    assert a == b
    with pytest.raises(ValueError):
        sample_correlated_goe_pair(5, 1.5, 4)
    with pytest.raises(ValueError):
        sample_correlated_goe_pair(5, -0.1, 4)
    M = 100_000
    for z, tol in ((0.0, 0.01), (0.6, 0.01)):
        pairs = [sample_correlated_goe_pair(4, z, 21, r) for r in range(M)]
        x = np.array([p[0].coeffs[1] for p in pairs])
        y = np.array([p[1].coeffs[1] for p in pairs])
        assert abs(np.corrcoef(x, y)[0, 1] - z) <= tol


def test_replicas_independent():
    M = 20_000
    x = np.array([sample_standard_goe(3, 5, 2 * r).coeffs for r in range(M)])
    y = np.array([sample_standard_goe(3, 5, 2 * r + 1).coeffs for r in range(M)])
    for e in range(x.shape[1]):
        assert abs(np.corrcoef(x[:, e], y[:, e])[0, 1]) * math.sqrt(M) <= 4.0


def test_marginal_moments_scale_with_sigma():
    model = FractionalBrownian(0.3)
    grid = TimeGrid([0.5, 2.0])
    n, M = 30, 2000
    tr2 = np.empty((M, 2))
    tr4 = np.empty((M, 2))
    for r in range(M):
        p = sample_goe_path(model, n, grid, 99, r)
        for k in range(2):
            m = p.at(k).to_matrix()
            m2 = m @ m
            tr2[r, k] = np.trace(m2) / n
            tr4[r, k] = np.sum(m2 * m2) / n
    for k, t in enumerate(grid.times):
        s2 = model.evaluate(t, t)
        # (1/n) E Tr Y^2 = sigma^2 (n+1)/n exactly
        se = tr2[:, k].std(ddof=1) / math.sqrt(M)
        assert abs(tr2[:, k].mean() - s2 * (n + 1) / n) <= 4 * se
        # fourth moment tends to 2 sigma^4; at n=30 the 1/n correction is about 5/n
        assert abs(tr4[:, k].mean() / s2**2 - 2.0) <= 6.0 / n


def test_cross_time_entry_covariance():
    model = Brownian()
    grid = TimeGrid([0.5, 1.0])
    n, M = 3, 40_000
    xs = np.array([sample_goe_path(model, n, grid, 31, r).coeffs for r in range(M)])
    for idx, mult in ((packed_index(n, 0, 2), 1.0), (packed_index(n, 1, 1), 2.0)):
        scale = math.sqrt(2.0) if mult == 2.0 else 1.0
        a, b = scale * xs[:, 0, idx], scale * xs[:, 1, idx]
        p = a * b
        assert abs(p.mean() - mult * 0.5 / n) <= 4 * p.std(ddof=1) / math.sqrt(M)
