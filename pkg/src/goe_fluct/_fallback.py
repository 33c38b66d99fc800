"""Pure-Python twin of ``_core.pyx``.

The Gaussian streams are bit-identical to the compiled kernel (integer mixing,
``math.log`` and IEEE ``sqrt`` only). The eigensolver follows the same
Householder + implicit QL steps but vectorizes the inner products with numpy,
so it agrees with the compiled kernel to rounding, not bit for bit.
"""

import math

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
_INV_2_53 = 1.0 / 9007199254740992.0

_U64 = np.uint64


def mix64(z):
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def stream_key(seed, replica, tag, entry):
    h = mix64(seed + GOLDEN)
    h = mix64(h ^ mix64(replica + GOLDEN))
    h = mix64(h ^ mix64(tag + GOLDEN))
    return mix64(h ^ mix64(entry + GOLDEN))


def _mix64_array(z):
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
    return z ^ (z >> _U64(31))


def _keys(seed, replica, tag, entries):
    g = _U64(GOLDEN)
    with np.errstate(over="ignore"):
        h = _U64(mix64(seed + GOLDEN))
        h = _U64(mix64(int(h) ^ mix64(replica + GOLDEN)))
        h = _U64(mix64(int(h) ^ mix64(tag + GOLDEN)))
        return _mix64_array(h ^ _mix64_array(entries + g))


def _uniforms(keys, counters):
    with np.errstate(over="ignore"):
        bits = _mix64_array(keys + counters * _U64(GOLDEN))
    return (bits >> _U64(11)).astype(np.float64) * _INV_2_53


def fill_normals(seed, replica, tag, out, entry_offset=0):
    """Row ``e`` of ``out`` receives the stream of entry ``entry_offset + e``."""
    n_entries, k = out.shape
    if k == 0 or n_entries == 0:
        return
    entries = np.arange(n_entries, dtype=np.uint64) + _U64(entry_offset)
    keys = _keys(seed, replica, tag, entries)
    counters = np.zeros(n_entries, dtype=np.uint64)
    filled = np.zeros(n_entries, dtype=np.int64)
    active = np.arange(n_entries)
    while active.size:
        kk = keys[active]
        c = counters[active]
        v1 = 2.0 * _uniforms(kk, c + _U64(1)) - 1.0
        v2 = 2.0 * _uniforms(kk, c + _U64(2)) - 1.0
        counters[active] = c + _U64(2)
        s = v1 * v1 + v2 * v2
        ok = (s < 1.0) & (s != 0.0)
        rows = active[ok]
        s_ok = s[ok]
        logs = np.array([math.log(v) for v in s_ok.tolist()], dtype=np.float64)
        f = np.sqrt(-2.0 * logs / s_ok)
        pos = filled[rows]
        out[rows, pos] = v1[ok] * f
        second = pos + 1 < k
        out[rows[second], pos[second] + 1] = v2[ok][second] * f[second]
        filled[rows] = np.minimum(pos + 2, k)
        active = active[filled[active] < k]


def _pythag(a, b):
    absa = abs(a)
    absb = abs(b)
    if absa > absb:
        r = absb / absa
        return absa * math.sqrt(1.0 + r * r)
    if absb == 0.0:
        return 0.0
    r = absa / absb
    return absb * math.sqrt(1.0 + r * r)


def _tred2(a, vectors):
    n = a.shape[0]
    d = np.zeros(n)
    e = np.zeros(n)
    for i in range(n - 1, 0, -1):
        l = i - 1
        h = 0.0
        if l > 0:
            row = a[i, : l + 1]
            scale = float(np.sum(np.abs(row)))
            if scale == 0.0:
                e[i] = a[i, l]
            else:
                row /= scale
                h = float(row @ row)
                f = float(row[l])
                g = -math.sqrt(h) if f >= 0.0 else math.sqrt(h)
                e[i] = scale * g
                h -= f * g
                row[l] = f - g
                if vectors:
                    a[: l + 1, i] = row / h
                sub = a[: l + 1, : l + 1]
                lower = np.tril(sub)
                sym = lower + np.tril(sub, -1).T
                ev = (sym @ row) / h
                f = float(ev @ row)
                hh = f / (h + h)
                ev = ev - hh * row
                e[: l + 1] = ev
                upd = np.outer(row, ev) + np.outer(ev, row)
                sub -= np.tril(upd)
        else:
            e[i] = a[i, l]
        d[i] = h
    d[0] = 0.0
    e[0] = 0.0
    for i in range(n):
        if vectors:
            if d[i] != 0.0:
                g = a[i, :i] @ a[:i, :i]
                a[:i, :i] -= np.outer(a[:i, i], g)
            d[i] = a[i, i]
            a[i, i] = 1.0
            a[:i, i] = 0.0
            a[i, :i] = 0.0
        else:
            d[i] = a[i, i]
    return d, e


def _tqli(d, e, z, vectors, budget):
    n = len(d)
    for i in range(1, n):
        e[i - 1] = e[i]
    if n:
        e[n - 1] = 0.0
    used = 0
    for l in range(n):
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) + dd == dd:
                    break
                m += 1
            if m == l:
                break
            used += 1
            if used > budget:
                raise ArithmeticError(
                    "QL iteration did not converge within %d sweeps" % budget
                )
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = _pythag(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + (abs(r) if g >= 0.0 else -abs(r)))
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
                    col = z[:, i + 1].copy()
                    z[:, i + 1] = s * z[:, i] + c * col
                    z[:, i] = c * z[:, i] - s * col
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0


def tridiag_ql(a, vectors, budget):
    """Eigen-decompose the symmetric matrix ``a`` in place (see ``_core``)."""
    n = a.shape[0]
    if n == 0:
        return np.empty(0)
    d_arr, e_arr = _tred2(a, vectors)
    d = d_arr.tolist()
    e = e_arr.tolist()
    _tqli(d, e, a, vectors, budget)
    return np.array(d, dtype=np.float64)
