"""One-step splitting integrators and the propagator objects used by parareal.

Schemes, for ``U' = (A_1 + ... + A_M) U + F(t)`` with step ``tau``:

* FIE: ``(I - tau A_1) V_1 = U + tau F(t + tau)``, then
  ``(I - tau A_j) V_j = V_{j-1}``.
* DR: ``V_0 = (I + tau A) U + tau F(t + tau)``, then
  ``(I - tau A_j) V_j = V_{j-1} - tau A_j U``.
* IE: FIE with the single term ``A``.

Each stage solve runs over the decoupling blocks of its term.  Blocks that
are tridiagonal in their local ordering are handled by a batched Thomas
sweep, all others by banded LU.  Factorizations are cached per
``(term, tau)``.
"""

from __future__ import annotations

import threading
import weakref
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import backend, parallel
from .errors import SingularPivotError
from .grid import DiscreteOperator
from .splitting import SplitOperator, decoupling_blocks

Source = Callable[[float], np.ndarray] | None

FIE, DR, IE = "FIE", "DR", "IE"
SCHEMES = (FIE, DR, IE)


def _bandwidths(sub: sp.csr_matrix) -> tuple[int, int]:
    coo = sub.tocoo()
    if coo.nnz == 0:
        return 0, 0
    d = coo.col.astype(np.int64) - coo.row.astype(np.int64)
    return int(max(0, -d.min())), int(max(0, d.max()))


class StageSolver:
    """Factored ``I - tau A_j`` over the decoupling blocks of ``A_j``."""

    def __init__(self, op: DiscreteOperator, blocks, tau: float, kernels=None):
        if not tau > 0:
            raise ValueError(f"step size must be positive, got {tau}")
        self.tau = float(tau)
        self.n = op.n
        self.kernels = kernels or backend.get_kernels()
        k = self.kernels
        A = sp.csr_matrix(op.matrix)
        self.tridiag: list[tuple[np.ndarray, tuple]] = []
        self.banded: list[tuple[np.ndarray, int, int, tuple]] = []
        by_length: dict[int, list[tuple[np.ndarray, sp.csr_matrix]]] = {}
        for b in blocks:
            sub = sp.csr_matrix(-self.tau * A[b][:, b])
            sub = sub + sp.identity(len(b), format="csr")
            kl, ku = _bandwidths(sub)
            if kl <= 1 and ku <= 1:
                by_length.setdefault(len(b), []).append((b, sub))
            else:
                self.banded.append((b, kl, ku, self._band(sub, kl, ku)))
        for length, group in sorted(by_length.items()):
            idx = np.stack([b for b, _ in group])
            lower = np.zeros((len(group), length))
            upper = np.zeros((len(group), length))
            diag = np.stack([s.diagonal(0) for _, s in group])
            if length > 1:
                lower[:, 1:] = np.stack([s.diagonal(-1) for _, s in group])
                upper[:, :-1] = np.stack([s.diagonal(1) for _, s in group])
            self.tridiag.append((idx, k.tridiag_factor(lower, diag, upper)))

    def _band(self, sub: sp.csr_matrix, kl: int, ku: int):
        L = sub.shape[0]
        ab = np.zeros((L, kl + ku + 1))
        coo = sub.tocoo()
        ab[coo.row, kl + coo.col - coo.row] = coo.data
        tol = 1e-13 * float(np.abs(coo.data).max())
        try:
            return self.kernels.band_factor(ab, kl, ku, tol)
        except SingularPivotError as exc:
            raise SingularPivotError(
                f"I - tau*A_j is singular to working precision (tau={self.tau}): {exc}") from None

    @property
    def nblocks(self) -> int:
        return sum(len(idx) for idx, _ in self.tridiag) + len(self.banded)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Return ``(I - tau A_j)^{-1} rhs``; rows outside all blocks pass through."""
        x = np.array(rhs, dtype=float, copy=True)
        k = self.kernels
        threads = parallel.thread_budget()
        for idx, factor in self.tridiag:
            xb = np.ascontiguousarray(x[idx])
            parts = parallel.chunks(xb.shape[0], threads)
            if len(parts) > 1 and not parallel.in_worker():
                parallel.parallel_map(lambda ab: k.tridiag_solve(*factor, xb, ab[0], ab[1]), parts)
            else:
                k.tridiag_solve(*factor, xb, 0, xb.shape[0])
            x[idx] = xb

        def one(entry):
            b, kl, ku, factor = entry
            xb = np.ascontiguousarray(x[b])
            k.band_solve(factor, kl, ku, xb)
            return xb

        for (b, _, _, _), xb in zip(self.banded, parallel.parallel_map(one, self.banded)):
            x[b] = xb
        return x


_cache: "weakref.WeakKeyDictionary[DiscreteOperator, dict]" = weakref.WeakKeyDictionary()
_single: "weakref.WeakKeyDictionary[DiscreteOperator, SplitOperator]" = weakref.WeakKeyDictionary()
_cache_lock = threading.Lock()


def stage_solver(op: DiscreteOperator, blocks, tau: float) -> StageSolver:
    """Cached :class:`StageSolver` for ``(op, tau)`` under the active backend."""
    key = (float(tau), backend.active_backend())
    with _cache_lock:
        per_op = _cache.setdefault(op, {})
        solver = per_op.get(key)
        if solver is None:
            solver = per_op[key] = StageSolver(op, blocks, tau)
    return solver


def single_term(A: DiscreteOperator) -> SplitOperator:
    with _cache_lock:
        split = _single.get(A)
        if split is None:
            split = _single[A] = SplitOperator((A,), A, "unsplit",
                                               (tuple(decoupling_blocks(A.matrix)),))
    return split


def _forced(u: np.ndarray, t: float, tau: float, F: Source) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if F is None:
        return u.copy()
    return u + tau * F(t + tau)


def fie_step(U: np.ndarray, t: float, tau: float, split: SplitOperator, F: Source = None) -> np.ndarray:
    x = _forced(U, t, tau, F)
    for op, blocks in zip(split.terms, split.blocks):
        x = stage_solver(op, blocks, tau).solve(x)
    return x


def dr_step(U: np.ndarray, t: float, tau: float, split: SplitOperator, F: Source = None) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    x = _forced(U, t, tau, F) + tau * (split.full.matrix @ U)
    for op, blocks in zip(split.terms, split.blocks):
        x = stage_solver(op, blocks, tau).solve(x - tau * (op.matrix @ U))
    return x


def ie_step(U: np.ndarray, t: float, tau: float, A: DiscreteOperator, F: Source = None) -> np.ndarray:
    return fie_step(U, t, tau, single_term(A), F)


class Propagator:
    """A one-step method with fixed step ``tau`` over a fixed operator."""

    scheme: str = ""

    def __init__(self, operator, tau: float, source: Source = None):
        if not tau > 0:
            raise ValueError(f"step size must be positive, got {tau}")
        self.tau = float(tau)
        self.source = source
        self.split = self._as_split(operator)

    def _as_split(self, operator) -> SplitOperator:
        if isinstance(operator, SplitOperator):
            if operator.M < 2:
                raise ValueError(f"{self.scheme} needs at least two splitting terms, got {operator.M}")
            return operator
        raise TypeError(f"{self.scheme} propagator needs a SplitOperator")

    def step(self, u: np.ndarray, t: float) -> np.ndarray:
        raise NotImplementedError

    def sweep(self, u: np.ndarray, t: float, count: int) -> np.ndarray:
        return sweep(self, u, t, count)

    def prepare(self) -> None:
        """Factor every stage matrix now rather than on first use."""
        for op, blocks in zip(self.split.terms, self.split.blocks):
            stage_solver(op, blocks, self.tau)

    def block_counts(self) -> list[int]:
        return [stage_solver(op, b, self.tau).nblocks
                for op, b in zip(self.split.terms, self.split.blocks)]

    def __repr__(self):
        return f"{type(self).__name__}(tau={self.tau:g}, M={self.split.M}, kind={self.split.kind})"


class FIEPropagator(Propagator):
    scheme = FIE

    def step(self, u, t):
        return fie_step(u, t, self.tau, self.split, self.source)


class DRPropagator(Propagator):
    scheme = DR

    def step(self, u, t):
        return dr_step(u, t, self.tau, self.split, self.source)


class IEPropagator(Propagator):
    scheme = IE

    def _as_split(self, operator) -> SplitOperator:
        if isinstance(operator, SplitOperator):
            operator = operator.full
        if not isinstance(operator, DiscreteOperator):
            raise TypeError("IE propagator needs a DiscreteOperator or SplitOperator")
        return single_term(operator)

    def step(self, u, t):
        return fie_step(u, t, self.tau, self.split, self.source)


_CLASSES = {FIE: FIEPropagator, DR: DRPropagator, IE: IEPropagator}


def make_propagator(scheme: str, operator, tau: float, source: Source = None) -> Propagator:
    try:
        cls = _CLASSES[scheme.upper()]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}") from None
    return cls(operator, tau, source)


def sweep(propagator, u, t: float, count: int):
    """Apply ``count`` steps starting at ``t``; step ``k`` starts at
    ``t + k * tau``."""
    if int(count) != count or count < 1:
        raise ValueError(f"step count must be a positive integer, got {count}")
    tau = propagator.tau
    for k in range(int(count)):
        u = propagator.step(u, t + k * tau)
    return u
