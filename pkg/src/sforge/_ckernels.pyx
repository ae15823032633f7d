# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pairwise kernels.

Every reduction runs in a fixed loop order so results do not depend on how
many workers call into the module.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, log

cnp.import_array()


def sqdist_cols(const double[:, ::1] XT, const long[::1] cols):
    """Squared distances between rows of ``XT.T`` restricted to ``cols``.

    ``XT`` is the transposed ensemble (D x m) so that each coordinate is a
    contiguous run over particles.
    """
    cdef Py_ssize_t m = XT.shape[1]
    cdef Py_ssize_t q = cols.shape[0]
    cdef Py_ssize_t a, i, j
    cdef long c
    cdef double xi, diff
    out = np.zeros((m, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    for a in range(q):
        c = cols[a]
        for i in range(m):
            xi = XT[c, i]
            for j in range(i + 1, m):
                diff = xi - XT[c, j]
                o[i, j] += diff * diff
    for i in range(m):
        for j in range(i + 1, m):
            o[j, i] = o[i, j]
    return out


def sqdist_remove(const double[:, ::1] sq, const double[:, ::1] XT, const long[::1] cols):
    """``sq`` minus the contribution of coordinates ``cols``, clipped at 0."""
    cdef Py_ssize_t m = XT.shape[1]
    cdef Py_ssize_t q = cols.shape[0]
    cdef Py_ssize_t a, i, j
    cdef long c
    cdef double xi, diff, v
    out = np.empty((m, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(m):
        o[i, i] = 0.0
        for j in range(i + 1, m):
            v = sq[i, j]
            for a in range(q):
                c = cols[a]
                diff = XT[c, i] - XT[c, j]
                v -= diff * diff
            if v < 0.0:
                v = 0.0
            o[i, j] = v
            o[j, i] = v
    return out


def stein_phi(const double[:, ::1] sq, const double[:, ::1] XT,
              const double[:, ::1] ST, const long[::1] cols,
              double h, int family):
    """Kernelized Stein direction on coordinates ``cols``.

    out[n, a] = (1/m) sum_i k(x_i, x_n) s_i[c] + d/dx_i[c] k(x_i, x_n), with
    c = cols[a] and the kernel evaluated on the precomputed distances ``sq``.
    family 0 is RBF, 1 is IMQ.
    """
    cdef Py_ssize_t m = sq.shape[0]
    cdef Py_ssize_t q = cols.shape[0]
    cdef Py_ssize_t n, i, a
    cdef long c
    cdef double inv2h = 1.0 / (2.0 * h)
    cdef double ginv = 1.0 / h
    cdef double t, ks, gx, gs, xn
    cdef double invm = 1.0 / m
    kbuf = np.empty(m, dtype=np.float64)
    gbuf = np.empty(m, dtype=np.float64)
    cdef double[::1] kb = kbuf
    cdef double[::1] gb = gbuf
    out = np.empty((m, q), dtype=np.float64)
    cdef double[:, ::1] o = out
    for n in range(m):
        if family == 0:
            for i in range(m):
                kb[i] = exp(-sq[n, i] * inv2h)
            for i in range(m):
                gb[i] = kb[i] * ginv
        else:
            for i in range(m):
                t = 1.0 / sqrt(1.0 + sq[n, i] * inv2h)
                kb[i] = t
                gb[i] = t * t * t * inv2h
        gs = 0.0
        for i in range(m):
            gs += gb[i]
        for a in range(q):
            c = cols[a]
            ks = 0.0
            gx = 0.0
            for i in range(m):
                ks += kb[i] * ST[c, i]
                gx += gb[i] * XT[c, i]
            xn = XT[c, n]
            o[n, a] = (ks + xn * gs - gx) * invm
    return out


cdef double _select(double* a, Py_ssize_t n, Py_ssize_t k) noexcept nogil:
    """k-th smallest of a[0:n] (0-based), partially reordering ``a``."""
    cdef Py_ssize_t lo = 0, hi = n - 1, i, j
    cdef double pivot, tmp
    while lo < hi:
        pivot = a[(lo + hi) // 2]
        i = lo
        j = hi
        while i <= j:
            while a[i] < pivot:
                i += 1
            while a[j] > pivot:
                j -= 1
            if i <= j:
                tmp = a[i]
                a[i] = a[j]
                a[j] = tmp
                i += 1
                j -= 1
        if k <= j:
            hi = j
        elif k >= i:
            lo = i
        else:
            break
    return a[k]


def median_pairwise(const double[:, ::1] sq):
    """Median distance over distinct pairs, from squared distances."""
    cdef Py_ssize_t m = sq.shape[0]
    cdef Py_ssize_t n = m * (m - 1) // 2
    cdef Py_ssize_t i, j, t = 0, k
    cdef double a, b
    if n == 0:
        return 0.0
    buf = np.empty(n, dtype=np.float64)
    cdef double[::1] bv = buf
    for i in range(m):
        for j in range(i + 1, m):
            bv[t] = sq[i, j]
            t += 1
    k = n // 2
    a = _select(&bv[0], n, k)
    if n % 2 == 1:
        return sqrt(a)
    # lower middle is the max of the left part after selection
    b = bv[0]
    for i in range(1, k):
        if bv[i] > b:
            b = bv[i]
    return 0.5 * (sqrt(a) + sqrt(b))


def batch_phi(const double[:, ::1] full_sq, const double[:, ::1] XT,
              const double[:, ::1] ST, const long[:, ::1] kcols,
              const long[::1] klen, const int[::1] kmode,
              const long[:, ::1] ucols, const long[::1] ulen,
              double h_fixed, int family, double fallback_h):
    """Many restricted Stein directions in one call.

    Row ``j`` evaluates the kernel on a coordinate subset given by
    ``kcols[j, :klen[j]]``: ``kmode`` 0 removes those coordinates from
    ``full_sq``, 1 keeps only them, 2 uses ``full_sq`` unchanged.  The
    direction is taken on ``ucols[j, :ulen[j]]``.  ``h_fixed <= 0`` selects the
    median rule per row.  Returns ``(rows, m, max ulen)`` plus the bandwidths.
    """
    cdef Py_ssize_t m = XT.shape[1]
    cdef Py_ssize_t rows = kcols.shape[0]
    cdef Py_ssize_t pmax = ucols.shape[1]
    cdef Py_ssize_t ntri = m * (m - 1) // 2
    cdef Py_ssize_t row, i, j, a, n, t, k
    cdef long c
    cdef double v, diff, med, lo, h, inv2h, ginv, tt, ks, gx, gs, xn, xi
    cdef double invm = 1.0 / m
    cdef bint need_sq = False
    for row in range(rows):
        if kmode[row] != 2:
            need_sq = True
    cdef Py_ssize_t msq = m if need_sq else 1
    cdef Py_ssize_t ntri_buf = ntri if (h_fixed <= 0 and ntri > 0) else 1
    sq_arr = np.empty((msq, msq), dtype=np.float64)
    tri_arr = np.empty(ntri_buf, dtype=np.float64)
    kb_arr = np.empty(m, dtype=np.float64)
    gb_arr = np.empty(m, dtype=np.float64)
    out = np.zeros((rows, m, pmax), dtype=np.float64)
    hs = np.empty(rows, dtype=np.float64)
    cdef double[:, ::1] sq = sq_arr
    cdef double[::1] tri = tri_arr
    cdef double[::1] kb = kb_arr
    cdef double[::1] gb = gb_arr
    cdef double[:, :, ::1] o = out
    cdef double[::1] hv = hs
    cdef const double[:, ::1] S

    for row in range(rows):
        if kmode[row] == 2:
            S = full_sq
        else:
            # coordinate-outer loops keep the inner loop contiguous; the
            # per-entry accumulation order is still a = 0, 1, ...
            for i in range(m):
                for j in range(i + 1, m):
                    sq[i, j] = full_sq[i, j] if kmode[row] == 0 else 0.0
            for a in range(klen[row]):
                c = kcols[row, a]
                for i in range(m):
                    xi = XT[c, i]
                    if kmode[row] == 0:
                        for j in range(i + 1, m):
                            diff = xi - XT[c, j]
                            sq[i, j] -= diff * diff
                    else:
                        for j in range(i + 1, m):
                            diff = xi - XT[c, j]
                            sq[i, j] += diff * diff
            for i in range(m):
                sq[i, i] = 0.0
                for j in range(i + 1, m):
                    v = sq[i, j]
                    if v < 0.0:
                        v = 0.0
                    sq[i, j] = v
                    sq[j, i] = v
            S = sq
        if h_fixed > 0:
            h = h_fixed
        elif ntri == 0:
            h = fallback_h
        else:
            t = 0
            for i in range(m):
                for j in range(i + 1, m):
                    tri[t] = S[i, j]
                    t += 1
            k = ntri // 2
            med = sqrt(_select(&tri[0], ntri, k))
            if ntri % 2 == 0:
                lo = tri[0]
                for i in range(1, k):
                    if tri[i] > lo:
                        lo = tri[i]
                med = 0.5 * (med + sqrt(lo))
            if med > 0:
                h = med * med / _log_m(m)
            else:
                h = fallback_h
        hv[row] = h
        inv2h = 1.0 / (2.0 * h)
        ginv = 1.0 / h
        for n in range(m):
            if family == 0:
                for i in range(m):
                    kb[i] = exp(-S[n, i] * inv2h)
                for i in range(m):
                    gb[i] = kb[i] * ginv
            else:
                for i in range(m):
                    tt = 1.0 / sqrt(1.0 + S[n, i] * inv2h)
                    kb[i] = tt
                    gb[i] = tt * tt * tt * inv2h
            gs = 0.0
            for i in range(m):
                gs += gb[i]
            for a in range(ulen[row]):
                c = ucols[row, a]
                ks = 0.0
                gx = 0.0
                for i in range(m):
                    ks += kb[i] * ST[c, i]
                    gx += gb[i] * XT[c, i]
                xn = XT[c, n]
                o[row, n, a] = (ks + xn * gs - gx) * invm
    return out, hs


cdef double _log_m(Py_ssize_t m) noexcept nogil:
    if m < 2:
        m = 2
    return log(<double>m)
