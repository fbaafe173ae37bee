"""Experiment drivers built on :class:`ExperimentConfig`.

Every runner returns plain data (rows, records, curves); writing files is
left to the CLI.  Nothing here reads the clock except the speedup study and
the per-iteration wall time kept in the parareal history.
"""

from __future__ import annotations

import os
import statistics
import time
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .. import parallel
from ..analysis import pair_schemes
from ..grid import Mesh2D, SemidiscreteProblem, error_norm, manufactured_problem
from ..integrators import Propagator, make_propagator
from ..parareal import (FIXED, PararealResult, StoppingRule, TimeGrid, fine_trajectory,
                        parareal_solve)
from ..splitting import DIMENSIONAL, DOMAIN_DECOMPOSITION, SplitOperator, build_split
from .config import ExperimentConfig


@lru_cache(maxsize=8)
def _problem(preset: str, c: float, T: float, n: int) -> SemidiscreteProblem:
    return manufactured_problem(preset, Mesh2D(n), c, T)


@lru_cache(maxsize=32)
def _split(preset: str, c: float, T: float, n: int, kind: str, q: int, beta: float) -> SplitOperator:
    P = _problem(preset, c, T, n)
    return build_split(P.continuous, P.mesh, kind, q, beta)


@dataclass
class Case:
    config: ExperimentConfig
    problem: SemidiscreteProblem
    grid: TimeGrid
    coarse: Propagator
    fine: Propagator

    @property
    def mesh(self) -> Mesh2D:
        return self.problem.mesh

    def norm(self, v: np.ndarray) -> float:
        return self.mesh.h * float(np.linalg.norm(v))


def build_case(cfg: ExperimentConfig, pair: str | None = None, splitting: str | None = None) -> Case:
    pair = pair or cfg.pair
    kind = splitting or cfg.splitting
    P = _problem(cfg.preset, cfg.c, cfg.T, cfg.n)
    grid = TimeGrid(cfg.T, cfg.Nc, cfg.s)
    g, f = pair_schemes(pair)
    fine_split = _split(cfg.preset, cfg.c, cfg.T, cfg.n, kind, cfg.q, cfg.beta)
    if kind == DOMAIN_DECOMPOSITION:
        cq, cb = cfg.coarse_geometry
        coarse_split = _split(cfg.preset, cfg.c, cfg.T, cfg.n, kind, cq, cb)
    else:
        coarse_split = fine_split
    coarse = make_propagator(g, coarse_split, grid.dT, P.F)
    fine = make_propagator(f, fine_split, grid.dt, P.F)
    return Case(cfg, P, grid, coarse, fine)


def _rule(cfg: ExperimentConfig) -> StoppingRule:
    return StoppingRule(cfg.rule, cfg.eps, cfg.max_iterations)


def run_solve(cfg: ExperimentConfig, pair: str | None = None, splitting: str | None = None,
              reference: list | None = None) -> PararealResult:
    case = build_case(cfg, pair, splitting)
    with parallel.budget(cfg.threads):
        return parareal_solve(case.coarse, case.fine, case.problem.U0, case.grid, _rule(cfg),
                              reference=reference, norm=case.norm, exact=case.problem.exact)


def iterations_to_tolerance(result: PararealResult) -> int:
    return result.iterations


# ---------------------------------------------------------------------------
# error curves
# ---------------------------------------------------------------------------

@dataclass
class Curve:
    pair: str
    splitting: str
    errors: list[float]
    iterations: int
    converged: bool
    s: int | None = None

    @property
    def label(self) -> str:
        if self.pair == "IE-IE":
            return "IE-IE"
        short = "Dim" if self.splitting == DIMENSIONAL else "DD"
        return f"{self.pair} ({short})"


def methods_for(cfg: ExperimentConfig) -> list[tuple[str, str]]:
    kinds = [DIMENSIONAL, DOMAIN_DECOMPOSITION] if cfg.preset == "A" else [DOMAIN_DECOMPOSITION]
    out = [("IE-IE", DOMAIN_DECOMPOSITION)]
    for pair in ("FIE-FIE", "FIE-DR"):
        out.extend((pair, k) for k in kinds)
    return out


def run_error_curve(cfg: ExperimentConfig, methods: list[tuple[str, str]] | None = None) -> list[Curve]:
    """Error against the sequential fine solution per iteration for each
    method under identical grids."""
    curves = []
    for pair, kind in methods or methods_for(cfg):
        r = run_solve(cfg, pair, kind)
        curves.append(Curve(pair, kind, [h.error_vs_fine for h in r.history], r.iterations,
                            r.converged))
    return curves


def curve_rows(curves: list[Curve]) -> list[tuple]:
    return [(c.pair, c.splitting, k, e) for c in curves for k, e in enumerate(c.errors)]


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def run_s_sensitivity(cfg: ExperimentConfig, s_values=(2, 4, 10, 20),
                      pairs=("FIE-FIE", "FIE-DR")) -> list[Curve]:
    """One curve per (pair, s) with everything else fixed."""
    out = []
    for pair in pairs:
        for s in s_values:
            r = run_solve(cfg.replace(s=int(s)), pair)
            out.append(Curve(pair, cfg.splitting, [h.error_vs_fine for h in r.history],
                             r.iterations, r.converged, int(s)))
    return out


AXES = ("dT", "h", "q", "beta")


@dataclass
class RobustnessRow:
    axis: str
    value: float
    pair: str
    splitting: str
    iterations: int
    converged: bool


def _apply_axis(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "dT":
        Nc = round(cfg.T / float(value))
        if Nc < 1 or abs(Nc * float(value) - cfg.T) > 1e-9 * cfg.T:
            raise ValueError(f"coarse step {value} does not divide T = {cfg.T}")
        return cfg.replace(Nc=Nc)
    if axis == "h":
        return cfg.replace(h=float(value))
    if axis == "q":
        return cfg.replace(q=int(value))
    if axis == "beta":
        return cfg.replace(beta=float(value))
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {AXES}")


def run_robustness(cfg: ExperimentConfig, axis: str, values, pairs=None,
                   splittings=None) -> list[RobustnessRow]:
    """Iterations to tolerance as one parameter varies."""
    rows = []
    pairs = tuple(pairs or (cfg.pair,))
    splittings = tuple(splittings or (cfg.splitting,))
    for v in values:
        c = _apply_axis(cfg, axis, v)
        for kind in splittings:
            for pair in pairs:
                r = run_solve(c, pair, kind)
                rows.append(RobustnessRow(axis, float(v), pair, kind, r.iterations, r.converged))
    return rows


# ---------------------------------------------------------------------------
# fine accuracy
# ---------------------------------------------------------------------------

def run_fine_accuracy(cfg: ExperimentConfig, scheme: str | None = None) -> float:
    """Error of the sequential fine solution against the exact solution,
    measured at the coarse time points."""
    case = build_case(cfg)
    if scheme is not None:
        case.fine = make_propagator(scheme, case.fine.split, case.grid.dt, case.problem.F)
    with parallel.budget(cfg.threads):
        traj = fine_trajectory(case.fine, case.problem.U0, case.grid)
    exact = [case.problem.exact(t) for t in case.grid.coarse_times]
    return error_norm(np.array(traj), np.array(exact), case.mesh.h)


# ---------------------------------------------------------------------------
# speedup
# ---------------------------------------------------------------------------

@dataclass
class SpeedupRecord:
    threads: int
    seconds: float
    speedup: float
    coarse_q: int | None = None
    samples: list[float] = field(default_factory=list)


@dataclass
class SpeedupReport:
    records: list[SpeedupRecord]
    coarse_blocks: list[int]
    fine_blocks: list[int]
    iterations: int
    error_vs_exact: float
    cpu_count: int

    def record(self, threads: int) -> SpeedupRecord:
        return next(r for r in self.records if r.threads == threads)


SPEEDUP_PRESET = dict(h=1 / 100, Nc=32, s=100, splitting=DOMAIN_DECOMPOSITION, q=2, beta=1 / 16,
                      coarse_q=2, coarse_beta=1 / 32, pair="FIE-FIE", rule=FIXED, max_iterations=5)


def speedup_config(base: ExperimentConfig | None = None, **changes) -> ExperimentConfig:
    base = base or ExperimentConfig()
    return base.replace(**{**SPEEDUP_PRESET, **changes})


def run_speedup(cfg: ExperimentConfig, thread_counts=(1, 2, 4, 8), repeats: int = 3) -> SpeedupReport:
    """Median wall time of the whole parareal solve per thread budget with a
    fixed iteration count; ``S(p) = T(1) / T(p)``."""
    if cfg.rule != FIXED:
        raise ValueError("speedup runs need the fixed-iteration stopping rule")
    if repeats < 3:
        raise ValueError("need at least 3 repetitions for a median")
    case = build_case(cfg)
    case.coarse.prepare()
    case.fine.prepare()
    counts = sorted({1, *map(int, thread_counts)})
    timings: dict[int, list[float]] = {}
    last = None
    for p in counts:
        reps = repeats
        samples: list[float] = []
        while len(samples) < reps:
            with parallel.budget(p):
                t0 = time.perf_counter()
                last = parareal_solve(case.coarse, case.fine, case.problem.U0, case.grid,
                                      _rule(cfg), norm=case.norm)
                samples.append(time.perf_counter() - t0)
            if len(samples) == reps and statistics.median(samples) < 1e-3 and reps == repeats:
                warnings.warn("run time below timer resolution; increasing repetitions",
                              RuntimeWarning, stacklevel=2)
                reps = repeats * 10
        timings[p] = samples
    base = statistics.median(timings[1])
    records = [SpeedupRecord(p, statistics.median(t), base / statistics.median(t),
                             cfg.coarse_geometry[0], t) for p, t in timings.items()]
    exact = [case.problem.exact(t) for t in case.grid.coarse_times]
    err = error_norm(np.array(last.trajectory), np.array(exact), case.mesh.h)
    return SpeedupReport(records, case.coarse.block_counts(), case.fine.block_counts(),
                         last.iterations, err, os.cpu_count() or 1)
