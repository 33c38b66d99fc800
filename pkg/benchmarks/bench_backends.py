"""Compiled core vs pure-Python fallback on the two hot kernels.

    python benchmarks/bench_backends.py [--repeat 5]

Both implementations are imported directly, so the comparison does not depend
on ``GOE_FLUCT_BACKEND``.  Outputs are checked for agreement before timing.
"""

import argparse
import timeit

import numpy as np

from goe_fluct import _fallback

try:
    from goe_fluct import _core
except ImportError:
    _core = None


def bench_normals(impl, entries, k):
    out = np.empty((entries, k))
    return lambda: impl.fill_normals(2024, 1, 0, out)


def bench_eigen(impl, n, vectors):
    rng = np.random.default_rng(n)
    m = rng.standard_normal((n, n))
    m = m + m.T
    return lambda: impl.tridiag_ql(m.copy(), vectors, 30 * n)


def best(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def check_agreement():
    a = np.empty((500, 3))
    b = np.empty((500, 3))
    _core.fill_normals(7, 0, 0, a)
    _fallback.fill_normals(7, 0, 0, b)
    assert a.tobytes() == b.tobytes(), "normal streams differ"
    m = np.random.default_rng(0).standard_normal((20, 20))
    m = m + m.T
    ea = np.sort(_core.tridiag_ql(m.copy(), False, 600))
    eb = np.sort(_fallback.tridiag_ql(m.copy(), False, 600))
    assert np.allclose(ea, eb, atol=1e-12), "eigenvalues differ"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _core is None:
        raise SystemExit("compiled core not built; run pip install -e . --no-build-isolation")
    check_agreement()
    cases = [
        ("fill_normals 820x1 (n=40 path, 1 time)", bench_normals, (820, 1)),
        ("fill_normals 5050x4 (n=100, 4 times)", bench_normals, (5050, 4)),
        ("tridiag_ql n=40, values", bench_eigen, (40, False)),
        ("tridiag_ql n=100, values", bench_eigen, (100, False)),
        ("tridiag_ql n=40, vectors", bench_eigen, (40, True)),
    ]
    print(f"{'kernel':<42}{'cython':>12}{'python':>12}{'speedup':>10}")
    for label, make, params in cases:
        tc = best(make(_core, *params), args.repeat)
        tp = best(make(_fallback, *params), args.repeat)
        print(f"{label:<42}{tc * 1e3:>10.3f}ms{tp * 1e3:>10.3f}ms{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
