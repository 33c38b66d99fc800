# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: counter-based Gaussian streams and the symmetric eigensolver.

``_fallback.py`` implements the same algorithms in Python; keep the two in sync.
"""
from libc.math cimport sqrt, log, fabs
from libc.stdint cimport uint64_t, int64_t

import numpy as np

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t _stream_key(uint64_t seed, uint64_t replica, uint64_t tag,
                                 uint64_t entry) nogil:
    cdef uint64_t h = _mix64(seed + GOLDEN)
    h = _mix64(h ^ _mix64(replica + GOLDEN))
    h = _mix64(h ^ _mix64(tag + GOLDEN))
    h = _mix64(h ^ _mix64(entry + GOLDEN))
    return h


cdef inline double _uniform(uint64_t key, uint64_t counter) nogil:
    return <double>(_mix64(key + counter * GOLDEN) >> 11) * INV_2_53


def mix64(uint64_t z):
    return _mix64(z)


def stream_key(uint64_t seed, uint64_t replica, uint64_t tag, uint64_t entry):
    return _stream_key(seed, replica, tag, entry)


cdef void _fill_stream(uint64_t key, double* out, int64_t k) nogil:
    cdef uint64_t counter = 0
    cdef int64_t filled = 0
    cdef double v1, v2, s, f
    while filled < k:
        counter += 1
        v1 = 2.0 * _uniform(key, counter) - 1.0
        counter += 1
        v2 = 2.0 * _uniform(key, counter) - 1.0
        s = v1 * v1 + v2 * v2
        if s >= 1.0 or s == 0.0:
            continue
        f = sqrt(-2.0 * log(s) / s)
        out[filled] = v1 * f
        filled += 1
        if filled < k:
            out[filled] = v2 * f
            filled += 1


def fill_normals(uint64_t seed, uint64_t replica, uint64_t tag, double[:, ::1] out,
                 uint64_t entry_offset=0):
    """Row ``e`` of ``out`` receives the stream of entry ``entry_offset + e``."""
    cdef int64_t e, n_entries = out.shape[0], k = out.shape[1]
    cdef uint64_t key
    if k == 0:
        return
    with nogil:
        for e in range(n_entries):
            key = _stream_key(seed, replica, tag, entry_offset + <uint64_t>e)
            _fill_stream(key, &out[e, 0], k)


cdef inline double _pythag(double a, double b) nogil:
    cdef double absa = fabs(a), absb = fabs(b), r
    if absa > absb:
        r = absb / absa
        return absa * sqrt(1.0 + r * r)
    if absb == 0.0:
        return 0.0
    r = absa / absb
    return absb * sqrt(1.0 + r * r)


cdef void _tred2(double[:, ::1] a, double[::1] d, double[::1] e, bint vectors) nogil:
    cdef Py_ssize_t n = a.shape[0], i, j, k, l
    cdef double scale, hh, h, g, f
    for i in range(n - 1, 0, -1):
        l = i - 1
        h = 0.0
        scale = 0.0
        if l > 0:
            for k in range(l + 1):
                scale += fabs(a[i, k])
            if scale == 0.0:
                e[i] = a[i, l]
            else:
                for k in range(l + 1):
                    a[i, k] /= scale
                    h += a[i, k] * a[i, k]
                f = a[i, l]
                g = -sqrt(h) if f >= 0.0 else sqrt(h)
                e[i] = scale * g
                h -= f * g
                a[i, l] = f - g
                f = 0.0
                for j in range(l + 1):
                    if vectors:
                        a[j, i] = a[i, j] / h
                    g = 0.0
                    for k in range(j + 1):
                        g += a[j, k] * a[i, k]
                    for k in range(j + 1, l + 1):
                        g += a[k, j] * a[i, k]
                    e[j] = g / h
                    f += e[j] * a[i, j]
                hh = f / (h + h)
                for j in range(l + 1):
                    f = a[i, j]
                    g = e[j] - hh * f
                    e[j] = g
                    for k in range(j + 1):
                        a[j, k] -= f * e[k] + g * a[i, k]
        else:
            e[i] = a[i, l]
        d[i] = h
    d[0] = 0.0
    e[0] = 0.0
    for i in range(n):
        if vectors:
            if d[i] != 0.0:
                for j in range(i):
                    g = 0.0
                    for k in range(i):
                        g += a[i, k] * a[k, j]
                    for k in range(i):
                        a[k, j] -= g * a[k, i]
            d[i] = a[i, i]
            a[i, i] = 1.0
            for j in range(i):
                a[j, i] = 0.0
                a[i, j] = 0.0
        else:
            d[i] = a[i, i]


cdef int _tqli(double[::1] d, double[::1] e, double[:, ::1] z, bint vectors,
               int64_t budget) nogil:
    cdef Py_ssize_t n = d.shape[0], m, l, i, k
    cdef int64_t used = 0
    cdef double s, r, p, g, f, dd, c, b
    cdef bint underflow
    for i in range(1, n):
        e[i - 1] = e[i]
    e[n - 1] = 0.0
    for l in range(n):
        while True:
            m = l
            while m < n - 1:
                dd = fabs(d[m]) + fabs(d[m + 1])
                if fabs(e[m]) + dd == dd:
                    break
                m += 1
            if m == l:
                break
            used += 1
            if used > budget:
                return -1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = _pythag(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + (fabs(r) if g >= 0.0 else -fabs(r)))
            s = 1.0
            c = 1.0
            p = 0.0
            underflow = False
            i = m - 1
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = _pythag(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                if vectors:
                    for k in range(n):
                        f = z[k, i + 1]
                        z[k, i + 1] = s * z[k, i] + c * f
                        z[k, i] = c * z[k, i] - s * f
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return 0


def tridiag_ql(double[:, ::1] a, bint vectors, int64_t budget):
    """Eigen-decompose the symmetric matrix ``a`` in place.

    Only the lower triangle is read. Returns the unsorted eigenvalues; when
    ``vectors`` is true the eigenvectors are left in the columns of ``a``.
    Raises ``ArithmeticError`` if the QL iteration exceeds ``budget`` sweeps.
    """
    cdef Py_ssize_t n = a.shape[0]
    d_arr = np.empty(n, dtype=np.float64)
    e_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] d = d_arr
    cdef double[::1] e = e_arr
    cdef int status
    if n == 0:
        return d_arr
    with nogil:
        _tred2(a, d, e, vectors)
        status = _tqli(d, e, a, vectors, budget)
    if status != 0:
        raise ArithmeticError("QL iteration did not converge within %d sweeps" % budget)
    return d_arr
