"""Stability functions, the parareal convergence factor on the partitioned
Dahlquist problem, and numerical checks of its bounds.

For ``y' = (l_1 + ... + l_M) y`` with ``z_j = l_j * dT`` the coarse step
multiplies by ``R_G(z)`` and a fine slab by ``R_F(z/s)^s``.  The contraction
factor per iteration is

    K = |R_F(z/s)^s - R_G(z)| / (1 - |R_G(z)|),

reported as infinite when ``|R_G(z)| >= 1``.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import mpmath
import numpy as np

from . import backend, parallel

FIE_FIE, FIE_DR, IE_IE = "FIE-FIE", "FIE-DR", "IE-IE"
PAIRS = (FIE_FIE, FIE_DR, IE_IE)
BOUNDS = {FIE_FIE: 1.0 / 3.0, FIE_DR: 1.0}

# region scan defaults: (re_min, re_max, im_min, im_max)
SMALL_RECT = (-1.0, 0.0, -20.0, 20.0)
LARGE_RECT = (-2.5e7, 0.0, -1e7, 1e7)
HIGH_PRECISION_RATIO = 1e6


def _check_poles(z):
    for zj in z:
        if np.any(np.asarray(zj) == 1):
            raise ZeroDivisionError("stability function has a pole at z_j = 1")


def r_fie(z: Sequence):
    """``prod_j 1/(1 - z_j)``; works for floats, complex, mpmath and arrays."""
    _check_poles(z)
    p = 1
    for zj in z:
        p = p / (1 - zj)
    return p


def r_dr(z: Sequence):
    """``1 + (prod_j 1/(1 - z_j)) * sum_j z_j``."""
    return 1 + r_fie(z) * sum(z[1:], z[0])


def r_ie(z: Sequence):
    """Implicit Euler on the unsplit sum: ``1/(1 - sum_j z_j)``."""
    s = sum(z[1:], z[0])
    if np.any(np.asarray(s) == 1):
        raise ZeroDivisionError("stability function has a pole at sum z_j = 1")
    return 1 / (1 - s)


STABILITY = {"FIE": r_fie, "DR": r_dr, "IE": r_ie}


def pair_schemes(pair: str) -> tuple[str, str]:
    """``(coarse, fine)`` scheme names of a pair tag."""
    if pair not in PAIRS:
        raise ValueError(f"unknown propagator pair {pair!r}; expected one of {PAIRS}")
    g, f = pair.split("-")
    return g, f


def ipow(x, s: int):
    """``x**s`` by repeated squaring (elementwise for arrays)."""
    if s < 1:
        raise ValueError("exponent must be >= 1")
    result = None
    base = x
    while s:
        if s & 1:
            result = base if result is None else result * base
        s >>= 1
        if s:
            base = base * base
    return result


@dataclass(frozen=True)
class ConvergenceFactorSample:
    z: tuple
    s: int
    K: float
    finite: bool
    pair: str


def _k_from(rf_s, rg) -> tuple[float, bool]:
    den = 1 - abs(rg)
    if den <= 0:
        return math.inf, False
    return float(abs(rf_s - rg) / den), True


def conv_factor(pair: str, z: Sequence, s: int) -> ConvergenceFactorSample:
    """Convergence factor of the pair for splitting arguments ``z``."""
    g, f = pair_schemes(pair)
    if int(s) != s or s < 1:
        raise ValueError(f"s must be a positive integer, got {s}")
    s = int(s)
    z = tuple(z)
    zmax = max(abs(complex(v)) for v in z)
    if zmax / s > HIGH_PRECISION_RATIO:
        with mpmath.workdps(40):
            zz = [mpmath.mpc(complex(v)) for v in z]
            rg = STABILITY[g](zz)
            rf = ipow(STABILITY[f]([v / s for v in zz]), s)
            k, ok = _k_from(rf, rg)
    else:
        zz = [complex(v) for v in z]
        rg = STABILITY[g](zz)
        rf = ipow(STABILITY[f]([v / s for v in zz]), s)
        k, ok = _k_from(rf, rg)
    return ConvergenceFactorSample(z, s, k, ok, pair)


def k_value(pair: str, z: Sequence, s: int) -> float:
    return conv_factor(pair, z, s).K


# ---------------------------------------------------------------------------
# certification over log-spaced grids of the negative real orthant
# ---------------------------------------------------------------------------

@dataclass
class CertificationResult:
    pair: str
    M: int
    points_per_axis: int
    s_values: tuple[int, ...]
    max_k: dict[int, float]
    argmax: dict[int, tuple[float, ...]]
    bound: float
    passed: bool
    seconds: float

    @property
    def overall_max(self) -> float:
        return max(self.max_k.values())

    def lines(self) -> list[str]:
        rel = "<=" if self.pair == FIE_FIE else "<"
        out = []
        for s in self.s_values:
            z = ", ".join(f"{v:.4g}" for v in self.argmax[s])
            out.append(f"{self.pair} M={self.M} s={s}: max K = {self.max_k[s]:.12g} at z = ({z})")
        verdict = "PASS" if self.passed else "FAIL"
        out.append(f"{self.pair} M={self.M}: max K = {self.overall_max:.12g} {rel} "
                   f"{self.bound:.12g} -> {verdict} ({self.seconds:.2f} s)")
        return out


def log_axis(n: int, lo: float = 1e-6, hi: float = 1e6) -> np.ndarray:
    """``n`` negative samples with magnitudes log-spaced over ``[lo, hi]``."""
    return -np.logspace(math.log10(lo), math.log10(hi), n)


def _balanced_ranges(n: int, m: int, parts: int) -> list[tuple[int, int]]:
    # work for first index i is ~ (n - i)^(m - 1)
    w = (n - np.arange(n, dtype=float)) ** (m - 1)
    c = np.concatenate([[0.0], np.cumsum(w)])
    cuts = np.searchsorted(c, np.linspace(0, c[-1], parts + 1)[1:-1])
    edges = np.unique(np.concatenate([[0], cuts, [n]]))
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def max_k_on_axis(pair: str, axis: np.ndarray, M: int, s: int,
                  kernels=None, threads: int | None = None) -> tuple[float, tuple[int, ...]]:
    """Max of K over all sorted ``M``-tuples drawn from ``axis`` (K is
    symmetric in its arguments).  Returns the value and the index tuple."""
    if M not in (2, 3):
        raise ValueError("grid certification supports M = 2 or 3")
    z = np.ascontiguousarray(axis, dtype=float)
    if np.any(z >= 0):
        raise ValueError("certification samples must lie in the open negative orthant")
    k = kernels or backend.get_kernels()
    lg = -np.log1p(-z)
    rg = np.exp(lg)
    w = z / s
    g, f = pair_schemes(pair)
    if g != "FIE" or f not in ("FIE", "DR"):
        raise ValueError(f"certification is defined for {FIE_FIE} and {FIE_DR}")
    if f == "FIE":
        lf = -s * np.log1p(-w)
        job = lambda r: k.kmax_fie(lg, rg, lf, M, r[0], r[1])
    else:
        a = 1.0 / (1.0 - w)
        job = lambda r: k.kmax_dr(lg, rg, w, a, float(s), M, r[0], r[1])
    threads = threads or parallel.thread_budget()
    ranges = _balanced_ranges(len(z), M, max(1, 4 * threads) if threads > 1 else 1)
    best, arg = -1.0, None
    for val, idx in parallel.parallel_map(job, ranges, threads):
        if val > best:
            best, arg = val, tuple(idx)
    return float(best), arg


def certify_bound(pair: str, M: int = 2, points_per_axis: int | None = None,
                  s_values: Iterable[int] = (1, 2, 10, 20, 1000), lo: float = 1e-6,
                  hi: float = 1e6, axis: np.ndarray | None = None,
                  kernels=None) -> CertificationResult:
    """Evaluate K on every sorted ``M``-tuple of a log-spaced axis for each
    ``s`` and compare the maximum with the proved bound (``<= 1/3`` for
    FIE-FIE, ``< 1`` for FIE-DR, both with ``1e-12`` slack)."""
    if pair not in BOUNDS:
        raise ValueError(f"no proved bound for pair {pair!r}")
    if axis is None:
        n = points_per_axis or (10_000 if M == 2 else 1_000)
        axis = log_axis(n, lo, hi)
    axis = np.asarray(axis, dtype=float)
    if np.any(~(axis < 0)):
        raise ValueError("certification samples must lie in the open negative orthant")
    s_values = tuple(int(s) for s in s_values)
    t0 = time.perf_counter()
    max_k, argmax = {}, {}
    for s in s_values:
        v, idx = max_k_on_axis(pair, axis, M, s, kernels)
        max_k[s] = v
        argmax[s] = tuple(float(axis[i]) for i in idx)
    overall = max(max_k.values())
    bound = BOUNDS[pair]
    passed = overall <= bound + 1e-12 if pair == FIE_FIE else overall < bound - 1e-12
    return CertificationResult(pair, M, len(axis), s_values, max_k, argmax, bound, bool(passed),
                               time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# proof functions
# ---------------------------------------------------------------------------

def _prod_one_minus(z):
    p = 1.0
    for zj in z:
        p = p * (1.0 - zj)
    return p


def h_fie(z: Sequence):
    """``prod_j (1 - z_j) * (3 exp(sum z) + 1)``."""
    return _prod_one_minus(z) * (3.0 * np.exp(sum(z[1:], z[0])) + 1.0)


def h_dr(z: Sequence):
    """``prod_j (1 - z_j) * (exp(sum z) + 1)``."""
    return _prod_one_minus(z) * (np.exp(sum(z[1:], z[0])) + 1.0)


@dataclass(frozen=True)
class GridMinimum:
    value: float
    at: tuple[float, ...]
    lower_bound: float
    passed: bool


def h_grid_minimum(kind: str, M: int = 2, n: int = 301) -> GridMinimum:
    """Minimum of ``h_fie`` over ``[-3, 0]^M`` or ``h_dr`` over ``[-1, 0]^M``
    on a uniform grid that contains the origin."""
    if kind == "FIE":
        fn, lo, bound = h_fie, -3.0, 4.0
    elif kind == "DR":
        fn, lo, bound = h_dr, -1.0, 2.0
    else:
        raise ValueError(f"unknown proof function {kind!r}")
    axis = np.linspace(lo, 0.0, n)
    grids = np.meshgrid(*([axis] * M), indexing="ij")
    vals = fn([g for g in grids])
    flat = int(np.argmin(vals))
    at = tuple(float(g.flat[flat]) for g in grids)
    value = float(vals.flat[flat])
    if kind == "FIE":
        passed = value >= bound
    else:
        # the infimum 2 is attained only at the origin
        origin = np.all([g == 0 for g in grids], axis=0)
        passed = bool(np.all(vals[~origin] > bound)) and float(vals[origin][0]) == bound
    return GridMinimum(value, at, bound, bool(passed))


# ---------------------------------------------------------------------------
# complex-plane scans
# ---------------------------------------------------------------------------

def k_equal_terms(pair: str, z: np.ndarray, s: int, M: int = 2) -> np.ndarray:
    """K at ``z_1 = ... = z_M = z`` for an array of complex ``z``; cells with
    ``|z|/s`` beyond the double-precision safe range go through mpmath."""
    g, f = pair_schemes(pair)
    z = np.asarray(z, dtype=complex)
    zs = [z] * M
    with np.errstate(all="ignore"):
        rg = STABILITY[g](zs)
        rf = ipow(STABILITY[f]([v / s for v in zs]), s)
        den = 1.0 - np.abs(rg)
        K = np.where(den > 0, np.abs(rf - rg) / np.where(den > 0, den, 1.0), np.inf)
    hard = np.abs(z) / s > HIGH_PRECISION_RATIO
    for idx in zip(*np.nonzero(hard)):
        K[idx] = conv_factor(pair, [z[idx]] * M, s).K
    return K


@dataclass
class RegionScan:
    pair: str
    s: int
    rect: tuple[float, float, float, float]
    re: np.ndarray
    im: np.ndarray
    K: np.ndarray  # shape (len(im), len(re))
    contour: list[list[tuple[float, float]]] = field(default_factory=list)

    @property
    def convergent(self) -> np.ndarray:
        return self.K < 1.0

    def rows(self):
        for a, y in enumerate(self.im):
            for b, x in enumerate(self.re):
                yield float(x), float(y), float(self.K[a, b])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["re", "im", "K"])
            for x, y, k in self.rows():
                wr.writerow([repr(x), repr(y), "inf" if math.isinf(k) else repr(k)])


def scan_region(pair: str, rect: tuple[float, float, float, float] = SMALL_RECT,
                resolution: int | tuple[int, int] = 101, s: int = 20, M: int = 2,
                level: float = 1.0) -> RegionScan:
    """K on a cell-centred grid over ``rect`` with all splitting arguments
    equal; the ``K = level`` contour comes from marching squares."""
    nre, nim = (resolution, resolution) if np.isscalar(resolution) else resolution
    if nre < 2 or nim < 2:
        raise ValueError("resolution must be at least 2 per axis")
    r0, r1, i0, i1 = map(float, rect)
    if not (r0 < r1 and i0 < i1):
        raise ValueError(f"empty rectangle {rect}")
    re = r0 + (np.arange(nre) + 0.5) * (r1 - r0) / nre
    im = i0 + (np.arange(nim) + 0.5) * (i1 - i0) / nim
    Z = re[None, :] + 1j * im[:, None]
    rows = parallel.parallel_map(lambda row: k_equal_terms(pair, row, s, M), list(Z))
    K = np.vstack(rows)
    return RegionScan(pair, s, (r0, r1, i0, i1), re, im, K, marching_squares(re, im, K, level))


def real_axis_slice(pair: str, lo: float = 1e-6, hi: float = 1e7, n: int = 400,
                    s: int = 20, M: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """K along the negative real axis at log-spaced ``|z|``."""
    z = log_axis(n, lo, hi)
    return z, k_equal_terms(pair, z.astype(complex), s, M)


def marching_squares(x: np.ndarray, y: np.ndarray, F: np.ndarray,
                     level: float) -> list[list[tuple[float, float]]]:
    """Line segments of the ``F = level`` contour on a rectilinear grid.

    ``F[a, b]`` is the value at ``(x[b], y[a])``.  Infinite values count as
    above the level.  Saddle cells are resolved by the cell mean.
    """
    G = np.where(np.isfinite(F), F, np.finfo(float).max) - level
    segs: list[list[tuple[float, float]]] = []

    def cross(p, q, gp, gq):
        t = gp / (gp - gq) if gp != gq else 0.5
        t = min(max(t, 0.0), 1.0)
        return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))

    for a in range(len(y) - 1):
        for b in range(len(x) - 1):
            corners = [(x[b], y[a]), (x[b + 1], y[a]), (x[b + 1], y[a + 1]), (x[b], y[a + 1])]
            vals = [G[a, b], G[a, b + 1], G[a + 1, b + 1], G[a + 1, b]]
            above = [v > 0 for v in vals]
            if all(above) or not any(above):
                continue
            pts = []
            for e in range(4):
                p, q = e, (e + 1) % 4
                if above[p] != above[q]:
                    # finite interpolation only; huge sentinel values snap to the finite end
                    gp, gq = vals[p], vals[q]
                    if abs(gp) > 1e300 or abs(gq) > 1e300:
                        pts.append(corners[q] if abs(gp) > 1e300 else corners[p])
                    else:
                        pts.append(cross(corners[p], corners[q], gp, gq))
            if len(pts) == 2:
                segs.append([tuple(map(float, pts[0])), tuple(map(float, pts[1]))])
            elif len(pts) == 4:
                centre_above = np.mean([v for v in vals if abs(v) < 1e300] or [1.0]) > 0
                # pair crossings so the diagonal of the majority sign stays connected
                order = [(0, 1), (2, 3)] if centre_above == above[0] else [(0, 3), (1, 2)]
                for i, j in order:
                    segs.append([tuple(map(float, pts[i])), tuple(map(float, pts[j]))])
    return segs


# ---------------------------------------------------------------------------
# limit of R(z/s)^s
# ---------------------------------------------------------------------------

@dataclass
class ExpLimitReport:
    scheme: str
    z: tuple[float, ...]
    s_values: tuple[int, ...]
    values: tuple[float, ...]
    limit: float
    decreasing: bool
    limit_error: float
    passed: bool


def exp_limit_check(z: Sequence[float], s_values: Iterable[int] | None = None,
                    scheme: str = "FIE", tol: float = 1e-6) -> ExpLimitReport:
    """``R(z/s)^s`` along an ``s`` ladder: strictly decreasing, and within
    ``tol`` of ``exp(sum z)`` at the last rung (``10^6`` by default)."""
    z = tuple(float(v) for v in z)
    if any(v >= 0 for v in z):
        raise ValueError("z must lie in the open negative orthant")
    if s_values is None:
        s_values = [2**k for k in range(16)] + [10**6]
    s_values = tuple(sorted(int(s) for s in s_values))
    fn = STABILITY[scheme]
    vals = []
    with mpmath.workdps(40):
        zz = [mpmath.mpf(v) for v in z]
        for s in s_values:
            vals.append(ipow(fn([v / s for v in zz]), s))
        limit = mpmath.e ** sum(zz)
        decreasing = all(a > b for a, b in zip(vals, vals[1:]))
        err = float(abs(vals[-1] - limit))
    return ExpLimitReport(scheme, z, s_values, tuple(float(v) for v in vals), float(limit),
                          decreasing, err, decreasing and err <= tol)
