"""The parareal iteration with pluggable coarse and fine propagators.

A propagator is any object with ``tau`` and ``step(u, t)``.  Vectors can be
NumPy arrays or plain scalars (including mpmath numbers), so the same driver
runs both the PDE experiments and the scalar contraction checks.

Iteration ``k -> k+1``::

    U_{n+1}^{k+1} = G(U_n^{k+1}) + F^s(U_n^k) - G(U_n^k)

All fine sweeps of an iteration are independent and run through
:func:`parasplit.parallel.parallel_map`; the correction is sequential.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import parallel
from .analysis import STABILITY
from .errors import DivergenceError

Vector = Any
Norm = Callable[[Vector], float]


@dataclass(frozen=True)
class TimeGrid:
    T: float
    Nc: int
    s: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"final time must be positive, got {self.T}")
        if int(self.Nc) != self.Nc or self.Nc < 1:
            raise ValueError(f"N_c must be a positive integer, got {self.Nc}")
        if int(self.s) != self.s or self.s < 1:
            raise ValueError(f"s must be a positive integer, got {self.s}")

    @property
    def dT(self) -> float:
        return self.T / self.Nc

    @property
    def dt(self) -> float:
        return self.dT / self.s

    def t(self, n: int) -> float:
        return n * self.dT

    @property
    def coarse_times(self) -> np.ndarray:
        return np.array([self.t(n) for n in range(self.Nc + 1)])


FIXED, INCREMENT, REFERENCE = "fixed", "increment", "reference"
RULES = (FIXED, INCREMENT, REFERENCE)


@dataclass(frozen=True)
class StoppingRule:
    """``fixed``: run ``max_iterations``; ``increment``: stop when the
    largest change between iterates is ``<= eps``; ``reference``: stop when
    the error against the sequential fine trajectory is ``<= eps``."""

    kind: str = REFERENCE
    eps: float = 1e-6
    max_iterations: int | None = None

    def __post_init__(self):
        if self.kind not in RULES:
            raise ValueError(f"unknown stopping rule {self.kind!r}; expected one of {RULES}")
        if self.kind != FIXED and not self.eps > 0:
            raise ValueError(f"tolerance must be positive, got {self.eps}")
        if self.kind == FIXED and self.max_iterations is None:
            raise ValueError("fixed-iteration rule needs max_iterations")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")


@dataclass
class IterationRecord:
    iteration: int
    error_vs_fine: float
    increment_norm: float
    wall_seconds: float
    error_vs_exact: float = math.nan


HISTORY_COLUMNS = ("iteration", "error_vs_fine", "increment_norm", "wall_seconds", "error_vs_exact")


@dataclass
class PararealState:
    grid: TimeGrid
    U: list
    k: int = 0
    coarse_values: list = field(default_factory=list)  # G(U_n^k), n = 0..Nc-1
    fine_cache: dict = field(default_factory=dict)  # n -> (input, F^s(input))
    history: list[IterationRecord] = field(default_factory=list)
    reference: list | None = None
    fine_sweeps: int = 0

    def history_csv(self, include_timing: bool = True) -> str:
        return history_to_csv(self.history, include_timing)


def history_to_csv(history: list[IterationRecord], include_timing: bool = True) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    cols = [c for c in HISTORY_COLUMNS if include_timing or c != "wall_seconds"]
    wr.writerow(cols)
    for r in history:
        wr.writerow([_fmt(getattr(r, c)) for c in cols])
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def default_norm(v: Vector) -> float:
    if isinstance(v, np.ndarray):
        return float(np.linalg.norm(v))
    return float(abs(v))


def trajectory_distance(a: list, b: list, norm: Norm = default_norm, start: int = 0) -> float:
    return max((norm(x - y) for x, y in zip(a[start:], b[start:])), default=0.0)


def _same(a: Vector, b: Vector) -> bool:
    if isinstance(a, np.ndarray):
        return a.shape == b.shape and a.tobytes() == b.tobytes()
    return a == b


def _copy(v: Vector) -> Vector:
    return v.copy() if isinstance(v, np.ndarray) else v


def _finite(v: Vector) -> bool:
    if isinstance(v, np.ndarray):
        return bool(np.all(np.isfinite(v)))
    try:
        return math.isfinite(abs(v))
    except (TypeError, OverflowError):
        return False


def fine_trajectory(fine, U0: Vector, grid: TimeGrid) -> list:
    """Sequential fine solution at the coarse points, slab by slab."""
    U = [_copy(U0)]
    for n in range(grid.Nc):
        U.append(fine_sweep(fine, U[-1], grid.t(n), grid.s))
    return U


def fine_sweep(fine, u: Vector, t: float, s: int) -> Vector:
    tau = fine.tau
    for j in range(s):
        u = fine.step(u, t + j * tau)
    return u


def initial_guess(coarse, U0: Vector, grid: TimeGrid) -> PararealState:
    """``U_{n+1}^0 = G(U_n^0)`` for all slabs."""
    U = [_copy(U0)]
    G = []
    for n in range(grid.Nc):
        g = coarse.step(U[-1], grid.t(n))
        G.append(g)
        U.append(_copy(g))
    if not all(_finite(u) for u in U):
        raise DivergenceError("non-finite values in the coarse initial guess")
    return PararealState(grid, U, 0, G)


def parareal_iterate(state: PararealState, coarse, fine, grid: TimeGrid | None = None,
                     threads: int | None = None) -> PararealState:
    """Advance ``state`` by one iteration in place and return it."""
    grid = grid or state.grid
    U_old = state.U

    def sweep(n):
        hit = state.fine_cache.get(n)
        if hit is not None and _same(hit[0], U_old[n]):
            return hit[1], False
        return fine_sweep(fine, U_old[n], grid.t(n), grid.s), True

    results = parallel.parallel_map(sweep, range(grid.Nc), threads)
    Fk = []
    for n, (val, fresh) in enumerate(results):
        if fresh:
            state.fine_cache[n] = (_copy(U_old[n]), val)
            state.fine_sweeps += 1
        Fk.append(val)

    U_new = [_copy(U_old[0])]
    G_new = []
    for n in range(grid.Nc):
        g = coarse.step(U_new[n], grid.t(n))
        G_new.append(g)
        U_new.append(g + (Fk[n] - state.coarse_values[n]))
    if not all(_finite(u) for u in U_new):
        raise DivergenceError(f"non-finite values in parareal iteration {state.k + 1}")
    state.U = U_new
    state.coarse_values = G_new
    state.k += 1
    return state


@dataclass
class PararealResult:
    trajectory: list
    iterations: int
    converged: bool
    history: list[IterationRecord]
    reference: list | None
    state: PararealState

    def history_csv(self, include_timing: bool = True) -> str:
        return history_to_csv(self.history, include_timing)


def parareal_solve(coarse, fine, U0: Vector, grid: TimeGrid,
                   rule: StoppingRule = StoppingRule(),
                   reference: list | None = None,
                   norm: Norm = default_norm,
                   exact: Callable[[float], Vector] | None = None,
                   threads: int | None = None) -> PararealResult:
    """Initial guess, then iterations until ``rule`` fires or ``k = N_c``.

    The sequential fine trajectory is computed first when the rule needs it
    (and is reused as the error reference in the history either way when
    given).  ``norm`` measures one state; trajectories use the maximum over
    coarse points.
    """
    if rule.kind == REFERENCE and reference is None:
        reference = fine_trajectory(fine, U0, grid)
    exact_traj = [exact(t) for t in grid.coarse_times] if exact is not None else None
    k_cap = grid.Nc if rule.max_iterations is None else min(rule.max_iterations, grid.Nc)
    if rule.kind == FIXED:
        k_cap = rule.max_iterations

    def record(state, prev, seconds):
        err = trajectory_distance(state.U, reference, norm) if reference is not None else math.nan
        inc = trajectory_distance(state.U, prev, norm) if prev is not None else math.nan
        ex = trajectory_distance(state.U, exact_traj, norm) if exact_traj is not None else math.nan
        rec = IterationRecord(state.k, err, inc, seconds, ex)
        state.history.append(rec)
        return rec

    def done(rec) -> bool:
        if rule.kind == REFERENCE:
            return rec.error_vs_fine <= rule.eps
        if rule.kind == INCREMENT:
            return rec.iteration > 0 and rec.increment_norm <= rule.eps
        return False

    t0 = time.perf_counter()
    state = initial_guess(coarse, U0, grid)
    state.reference = reference
    rec = record(state, None, time.perf_counter() - t0)
    converged = done(rec)
    while not converged and state.k < k_cap:
        t0 = time.perf_counter()
        prev = state.U
        parareal_iterate(state, coarse, fine, grid, threads)
        rec = record(state, prev, time.perf_counter() - t0)
        converged = done(rec)
    if rule.kind == FIXED:
        converged = state.k >= k_cap
    return PararealResult(state.U, state.k, bool(converged), state.history, reference, state)


# ---------------------------------------------------------------------------
# scalar partitioned Dahlquist problem
# ---------------------------------------------------------------------------

class ScalarPropagator:
    """One step of a splitting scheme on ``y' = (l_1 + ... + l_M) y``:
    multiplication by ``R(tau l_1, ..., tau l_M)``.  Pass mpmath numbers as
    ``lambdas`` to run in extended precision."""

    def __init__(self, scheme: str, lambdas, tau: float):
        self.scheme = scheme.upper()
        if self.scheme not in STABILITY:
            raise ValueError(f"unknown scheme {scheme!r}")
        self.tau = tau
        self.lambdas = tuple(lambdas)
        self.factor = STABILITY[self.scheme]([lam * tau for lam in self.lambdas])

    def step(self, u, t):
        return u * self.factor


def scalar_pair(pair: str, lambdas, grid: TimeGrid, mp=None):
    """``(coarse, fine)`` scalar propagators for a pair tag like ``FIE-DR``.

    With ``mp`` (an mpmath context) the step sizes are exact rationals of
    the context's precision.
    """
    g, f = pair.upper().split("-")
    if mp is not None:
        lam = [mp.mpf(v) for v in lambdas]
        dT = mp.mpf(grid.T) / grid.Nc
        dt = dT / grid.s
    else:
        lam = [float(v) for v in lambdas]
        dT, dt = grid.dT, grid.dt
    return ScalarPropagator(g, lam, dT), ScalarPropagator(f, lam, dt)
