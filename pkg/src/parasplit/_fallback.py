"""NumPy/SciPy implementations of the kernels in ``_kernels.pyx``.

Selected automatically when the compiled extension is missing, or forced with
``PARASPLIT_PURE_PYTHON=1``.  Results agree with the compiled path to
rounding, not bitwise: the banded solve here goes through LAPACK ``gbtrf``
with partial pivoting.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lapack

from .errors import SingularPivotError


def tridiag_factor(lower, diag, upper):
    lower = np.ascontiguousarray(lower, dtype=float)
    diag = np.asarray(diag, dtype=float)
    upper = np.asarray(upper, dtype=float)
    nb, n = diag.shape
    cp = np.zeros((nb, n))
    inv = np.empty((nb, n))
    den = diag[:, 0]
    if np.any(den == 0.0):
        raise SingularPivotError("zero pivot in tridiagonal elimination")
    inv[:, 0] = 1.0 / den
    if n > 1:
        cp[:, 0] = upper[:, 0] * inv[:, 0]
    for i in range(1, n):
        den = diag[:, i] - lower[:, i] * cp[:, i - 1]
        if np.any(den == 0.0):
            raise SingularPivotError("zero pivot in tridiagonal elimination")
        inv[:, i] = 1.0 / den
        if i < n - 1:
            cp[:, i] = upper[:, i] * inv[:, i]
    return lower, cp, inv


def tridiag_solve(lower, cp, inv, x, start=0, stop=-1):
    if stop < 0:
        stop = x.shape[0]
    rows = slice(start, stop)
    n = x.shape[1]
    xr = x[rows]
    lo, c, iv = lower[rows], cp[rows], inv[rows]
    xr[:, 0] *= iv[:, 0]
    for i in range(1, n):
        xr[:, i] = (xr[:, i] - lo[:, i] * xr[:, i - 1]) * iv[:, i]
    for i in range(n - 2, -1, -1):
        xr[:, i] -= c[:, i] * xr[:, i + 1]


def band_factor(ab, kl, ku, pivot_tol=0.0):
    n = ab.shape[0]
    # row-oriented ab[i, kl + j - i] -> LAPACK ab[kl + ku + i - j, j], with
    # kl extra rows on top for fill-in
    lp = np.zeros((2 * kl + ku + 1, n))
    for d in range(-kl, ku + 1):
        # entries A[i, i + d]
        if d >= 0:
            i = np.arange(0, n - d)
        else:
            i = np.arange(-d, n)
        lp[kl + ku - d, i + d] = ab[i, kl + d]
    lu, piv, info = lapack.dgbtrf(lp, kl, ku)
    if info > 0 or np.any(np.abs(lu[kl + ku]) <= pivot_tol):
        raise SingularPivotError(f"pivot {info - 1} below tolerance in banded LU")
    return lu, piv


def band_solve(factor, kl, ku, x):
    lu, piv = factor
    sol, info = lapack.dgbtrs(lu, kl, ku, x, piv)
    x[:] = sol


def _kval(g, eg, f):
    ef = np.exp(f)
    den = np.where(eg > 0.5, -np.expm1(g), 1.0 - eg)
    close = (0.5 * eg < ef) & (ef < 2.0 * eg)
    num = np.where(close, eg * np.abs(np.expm1(f - g)), np.abs(ef - eg))
    with np.errstate(divide="ignore", invalid="ignore"):
        k = num / den
    return np.where(den > 0.0, k, np.inf)


def _first_max(vals, idx_fn, best, arg):
    if vals.size == 0:
        return best, arg
    flat = int(np.argmax(vals))
    v = float(vals.flat[flat])
    if v > best:
        return v, idx_fn(flat)
    return best, arg


def _kmax(point_fn, n, m, start, stop):
    best, arg = -1.0, None
    jj = np.arange(n)
    for i in range(start, stop):
        j = jj[i:]
        if m == 2:
            vals = point_fn(i, j, None)
            best, arg = _first_max(vals, lambda f, i=i, j=j: (i, int(j[f])), best, arg)
        else:
            for jv in range(i, n):
                k = jj[jv:]
                vals = point_fn(i, jv, k)
                best, arg = _first_max(vals, lambda f, i=i, jv=jv, k=k: (i, jv, int(k[f])),
                                       best, arg)
    if arg is None:
        arg = (-1,) * m
    return best, arg


def kmax_fie(lg, rg, lf, m, start, stop):
    lg, rg, lf = np.asarray(lg), np.asarray(rg), np.asarray(lf)

    def point(i, j, k):
        g = lg[i] + lg[j]
        e = rg[i] * rg[j]
        f = lf[i] + lf[j]
        if k is not None:
            g = g + lg[k]
            e = e * rg[k]
            f = f + lf[k]
        return _kval(g, e, f)

    return _kmax(point, lg.shape[0], m, start, stop)


def kmax_dr(lg, rg, w, a, s, m, start, stop):
    lg, rg, w, a = np.asarray(lg), np.asarray(rg), np.asarray(w), np.asarray(a)

    def point(i, j, k):
        g = lg[i] + lg[j]
        e = rg[i] * rg[j]
        if k is None:
            f = s * np.log1p((w[i] + w[j]) * a[i] * a[j])
        else:
            g = g + lg[k]
            e = e * rg[k]
            f = s * np.log1p((w[i] + w[j] + w[k]) * (a[i] * a[j]) * a[k])
        return _kval(g, e, f)

    return _kmax(point, lg.shape[0], m, start, stop)
