# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: batched tridiagonal solves, banded LU without
pivoting, and convergence-factor maxima over log-spaced sample grids.

Every routine here has a pure-Python twin in :mod:`parasplit._fallback`
with an identical signature.  All loops run without the GIL so callers can
fan them out over threads.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, log1p, fabs, INFINITY

from parasplit.errors import SingularPivotError

cnp.import_array()


# ---------------------------------------------------------------------------
# tridiagonal
# ---------------------------------------------------------------------------

def tridiag_factor(double[:, ::1] lower, double[:, ::1] diag, double[:, ::1] upper):
    """Factor a batch of tridiagonal systems.

    ``lower[b, i]`` is ``A[i, i-1]`` (column 0 ignored) and ``upper[b, i]`` is
    ``A[i, i+1]`` (last column ignored).  Returns ``(lower, cprime, inv)``.
    """
    cdef Py_ssize_t nb = diag.shape[0], n = diag.shape[1], b, i
    cdef double den
    cp_arr = np.zeros((nb, n))
    inv_arr = np.empty((nb, n))
    cdef double[:, ::1] cp = cp_arr
    cdef double[:, ::1] inv = inv_arr
    cdef int bad = 0
    with nogil:
        for b in range(nb):
            den = diag[b, 0]
            if den == 0.0:
                bad = 1
                break
            inv[b, 0] = 1.0 / den
            if n > 1:
                cp[b, 0] = upper[b, 0] * inv[b, 0]
            for i in range(1, n):
                den = diag[b, i] - lower[b, i] * cp[b, i - 1]
                if den == 0.0:
                    bad = 1
                    break
                inv[b, i] = 1.0 / den
                if i < n - 1:
                    cp[b, i] = upper[b, i] * inv[b, i]
            if bad:
                break
    if bad:
        raise SingularPivotError("zero pivot in tridiagonal elimination")
    return np.ascontiguousarray(lower), cp_arr, inv_arr


def tridiag_solve(double[:, ::1] lower, double[:, ::1] cp, double[:, ::1] inv,
                  double[:, ::1] x, Py_ssize_t start=0, Py_ssize_t stop=-1):
    """Overwrite rows ``start:stop`` of ``x`` with the solutions."""
    cdef Py_ssize_t n = x.shape[1], b, i
    if stop < 0:
        stop = x.shape[0]
    with nogil:
        for b in range(start, stop):
            x[b, 0] = x[b, 0] * inv[b, 0]
            for i in range(1, n):
                x[b, i] = (x[b, i] - lower[b, i] * x[b, i - 1]) * inv[b, i]
            for i in range(n - 2, -1, -1):
                x[b, i] = x[b, i] - cp[b, i] * x[b, i + 1]


# ---------------------------------------------------------------------------
# banded LU, row-oriented storage: ab[i, kl + j - i] = A[i, j]
# ---------------------------------------------------------------------------

def band_factor(double[:, ::1] ab, int kl, int ku, double pivot_tol=0.0):
    """In-place Doolittle LU of a banded matrix, no pivoting.

    Returns the factor ``(ab, reciprocal pivots)``.  Raises
    :class:`SingularPivotError` when a pivot magnitude drops to ``pivot_tol``
    or below.
    """
    cdef Py_ssize_t n = ab.shape[0], k, i, j, iend, jend
    cdef double piv, l
    cdef Py_ssize_t bad = -1
    invd_arr = np.empty(n)
    cdef double[::1] invd = invd_arr
    with nogil:
        for k in range(n):
            piv = ab[k, kl]
            if fabs(piv) <= pivot_tol:
                bad = k
                break
            invd[k] = 1.0 / piv
            iend = k + kl
            if iend > n - 1:
                iend = n - 1
            jend = k + ku
            if jend > n - 1:
                jend = n - 1
            for i in range(k + 1, iend + 1):
                l = ab[i, kl + k - i] * invd[k]
                ab[i, kl + k - i] = l
                if l != 0.0:
                    for j in range(k + 1, jend + 1):
                        ab[i, kl + j - i] -= l * ab[k, kl + j - k]
    if bad >= 0:
        raise SingularPivotError(f"pivot {bad} below tolerance in banded LU")
    return np.asarray(ab), invd_arr


def band_solve(factor, int kl, int ku, double[::1] x):
    """Forward/back substitution in place on ``x``."""
    _band_solve(factor[0], factor[1], kl, ku, x)


cdef void _band_solve(double[:, ::1] lu, double[::1] invd, int kl, int ku,
                      double[::1] x) noexcept:
    cdef Py_ssize_t n = lu.shape[0], i, j, j0, j1
    cdef double acc
    with nogil:
        for i in range(n):
            acc = x[i]
            j0 = i - kl
            if j0 < 0:
                j0 = 0
            for j in range(j0, i):
                acc -= lu[i, kl + j - i] * x[j]
            x[i] = acc
        for i in range(n - 1, -1, -1):
            acc = x[i]
            j1 = i + ku
            if j1 > n - 1:
                j1 = n - 1
            for j in range(i + 1, j1 + 1):
                acc -= lu[i, kl + j - i] * x[j]
            x[i] = acc * invd[i]


# ---------------------------------------------------------------------------
# convergence factor maxima
#
# Per-axis inputs (z_i on the sample axis, s the fine-step ratio):
#   lg[i] = log R_FIE(z_i)             (coarse, one term)
#   rg[i] = R_FIE(z_i)
#   lf[i] = s * log R_FIE(z_i / s)     (FIE fine, one term)
#   w[i]  = z_i / s,  a[i] = 1 / (1 - w[i])   (DR fine)
# K is symmetric under permutations of z, so only sorted index tuples are
# visited.  Ties keep the first maximum in visiting order.
# ---------------------------------------------------------------------------

cdef inline double _kval(double g, double eg, double f) noexcept nogil:
    # |e^f - e^g| / (1 - e^g); the expm1 forms only where the plain
    # differences would cancel
    cdef double den, num, ef = exp(f)
    if eg > 0.5:
        den = -expm1(g)
    else:
        den = 1.0 - eg
    if den <= 0.0:
        return INFINITY
    if 0.5 * eg < ef < 2.0 * eg:
        num = eg * fabs(expm1(f - g))
    else:
        num = fabs(ef - eg)
    return num / den


def kmax_fie(double[::1] lg, double[::1] rg, double[::1] lf, int m,
             Py_ssize_t start, Py_ssize_t stop):
    """Max of K_FIE-FIE over sorted index tuples whose first index is in
    ``[start, stop)``.  Returns ``(kmax, (i, j[, k]))``."""
    cdef Py_ssize_t n = lg.shape[0], i, j, k
    cdef Py_ssize_t bi = -1, bj = -1, bk = -1
    cdef double best = -1.0, kv, g2, e2, f2
    with nogil:
        for i in range(start, stop):
            for j in range(i, n):
                g2 = lg[i] + lg[j]
                e2 = rg[i] * rg[j]
                f2 = lf[i] + lf[j]
                if m == 2:
                    kv = _kval(g2, e2, f2)
                    if kv > best:
                        best = kv; bi = i; bj = j
                else:
                    for k in range(j, n):
                        kv = _kval(g2 + lg[k], e2 * rg[k], f2 + lf[k])
                        if kv > best:
                            best = kv; bi = i; bj = j; bk = k
    if m == 2:
        return best, (bi, bj)
    return best, (bi, bj, bk)


def kmax_dr(double[::1] lg, double[::1] rg, double[::1] w, double[::1] a, double s,
            int m, Py_ssize_t start, Py_ssize_t stop):
    """As :func:`kmax_fie` for the FIE coarse / DR fine pair."""
    cdef Py_ssize_t n = lg.shape[0], i, j, k
    cdef Py_ssize_t bi = -1, bj = -1, bk = -1
    cdef double best = -1.0, kv, g2, e2, ws, ap, f
    with nogil:
        for i in range(start, stop):
            for j in range(i, n):
                g2 = lg[i] + lg[j]
                e2 = rg[i] * rg[j]
                if m == 2:
                    f = s * log1p((w[i] + w[j]) * a[i] * a[j])
                    kv = _kval(g2, e2, f)
                    if kv > best:
                        best = kv; bi = i; bj = j
                else:
                    ws = w[i] + w[j]
                    ap = a[i] * a[j]
                    for k in range(j, n):
                        f = s * log1p((ws + w[k]) * ap * a[k])
                        kv = _kval(g2 + lg[k], e2 * rg[k], f)
                        if kv > best:
                            best = kv; bi = i; bj = j; bk = k
    if m == 2:
        return best, (bi, bj)
    return best, (bi, bj, bk)
