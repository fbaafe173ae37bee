"""Uniform meshes on the unit square, finite-difference assembly of
``L u = div(D grad u) - c u``, manufactured test problems and error norms.

Unknowns are the interior nodes, numbered ``p = j * nx + i`` with ``x``
varying fastest.  Node ``(i, j)`` sits at ``((i + 1) h, (j + 1) h)``.

The operator is assembled edge by edge.  Every node couples to its eight
neighbours through an edge whose coefficient is sampled at the edge
midpoint:

* east/west edges carry ``d11`` at ``(x +- h/2, y)``,
* north/south edges carry ``d22`` at ``(x, y +- h/2)``,
* the SW-NE diagonal carries ``+d12/2`` and the NW-SE diagonal ``-d12/2``,
  both at the cell centre between the two nodes.

An edge with coefficient ``k`` adds ``k/h^2`` off the diagonal and
``-k/h^2`` on it, so the matrix is symmetric and annihilates constants.
Along a diagonal the pair of edges is a centred second difference, and
``(d12 u_y)_x + (d12 u_x)_y`` is exactly the sum of the two diagonal
second differences, which keeps the stencil second order with nine points.
Edges to boundary nodes move ``k g / h^2`` into the source (lifting).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import EllipticityError, UnsupportedMeshError

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]

# (dx, dy, component, scale)
EDGES = (
    (1, 0, "d11", 1.0),
    (-1, 0, "d11", 1.0),
    (0, 1, "d22", 1.0),
    (0, -1, "d22", 1.0),
    (1, 1, "d12", 0.5),
    (-1, -1, "d12", 0.5),
    (-1, 1, "d12", -0.5),
    (1, -1, "d12", -0.5),
)
X_EDGES = EDGES[:2]
Y_EDGES = EDGES[2:4]


@dataclass(frozen=True)
class Mesh2D:
    """Regular mesh of the unit square with ``nx * ny`` interior nodes."""

    nx: int
    ny: int | None = None

    def __post_init__(self):
        if self.ny is None:
            object.__setattr__(self, "ny", self.nx)
        if self.nx < 1:
            raise UnsupportedMeshError(f"need at least one interior node, got nx={self.nx}")
        if self.nx != self.ny:
            raise UnsupportedMeshError(
                f"only square meshes with equal spacing are supported (nx={self.nx}, ny={self.ny})")

    @classmethod
    def from_spacing(cls, h: float) -> "Mesh2D":
        cells = round(1.0 / h)
        if cells < 2 or abs(cells * h - 1.0) > 1e-9:
            raise UnsupportedMeshError(f"1/h must be an integer >= 2, got h={h}")
        return cls(cells - 1)

    @property
    def h(self) -> float:
        return 1.0 / (self.nx + 1)

    @property
    def n(self) -> int:
        return self.nx * self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @cached_property
    def x(self) -> np.ndarray:
        return (np.arange(self.nx) + 1) * self.h

    @cached_property
    def y(self) -> np.ndarray:
        return (np.arange(self.ny) + 1) * self.h

    @cached_property
    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened node coordinates ``(X, Y)`` in unknown order."""
        X, Y = np.meshgrid(self.x, self.y)
        return X.ravel(), Y.ravel()

    def index(self, i, j):
        return np.asarray(j) * self.nx + np.asarray(i)

    def ij(self, p):
        p = np.asarray(p)
        return p % self.nx, p // self.nx

    @cached_property
    def ghost_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates of the full ``(nx+2) x (ny+2)`` node set, boundary included."""
        g = np.arange(self.nx + 2) * self.h
        X, Y = np.meshgrid(g, np.arange(self.ny + 2) * self.h)
        return X.ravel(), Y.ravel()

    def ghost_index(self, i, j):
        return (np.asarray(j) + 1) * (self.nx + 2) + (np.asarray(i) + 1)


def _const(value: float) -> Field:
    def f(x, y):
        return np.full(np.broadcast(x, y).shape, float(value))

    f.constant = float(value)
    return f


@dataclass(frozen=True)
class DiffusionTensor:
    """Symmetric tensor ``[[d11, d12], [d12, d22]]`` plus reaction ``c >= 0``.

    Components are vectorised callables ``f(x, y)``.
    """

    d11: Field
    d12: Field
    d22: Field
    c: float = 0.0

    @classmethod
    def constant(cls, d11=1.0, d12=0.0, d22=1.0, c=0.0) -> "DiffusionTensor":
        return cls(_const(d11), _const(d12), _const(d22), float(c))

    def component(self, name: str) -> Field:
        return getattr(self, name)

    def is_diagonal_on(self, mesh: Mesh2D) -> bool:
        if getattr(self.d12, "constant", None) is not None:
            return self.d12.constant == 0.0
        xs, ys = _sample_points(mesh)
        return bool(np.all(self.d12(xs, ys) == 0.0))

    def check_elliptic(self, mesh: Mesh2D) -> None:
        if self.c < 0:
            raise EllipticityError(f"reaction coefficient must be >= 0, got {self.c}")
        xs, ys = _sample_points(mesh)
        a, b, d = self.d11(xs, ys), self.d12(xs, ys), self.d22(xs, ys)
        det = a * d - b * b
        bad = ~((a > 0) & (d > 0) & (det > 0))
        if np.any(bad):
            k = int(np.argmax(bad))
            raise EllipticityError(
                f"tensor not positive definite at ({xs[k]:.6g}, {ys[k]:.6g}): "
                f"d11={a[k]:.6g}, d12={b[k]:.6g}, d22={d[k]:.6g}")


def _sample_points(mesh: Mesh2D):
    # nodes plus every edge midpoint the stencil touches
    X, Y = mesh.nodes
    h = mesh.h
    xs = [X] + [X + dx * h / 2 for dx, dy, _, _ in EDGES]
    ys = [Y] + [Y + dy * h / 2 for dx, dy, _, _ in EDGES]
    return np.concatenate(xs), np.concatenate(ys)


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Sparse 9-band matrix on interior nodes plus its Dirichlet coupling.

    ``boundary`` maps values on the ghost node set (see
    :attr:`Mesh2D.ghost_nodes`) to the lifting contribution of the source.
    """

    matrix: sp.csr_matrix
    mesh: Mesh2D | None = None
    boundary: sp.csr_matrix | None = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def offsets(self) -> tuple[int, ...]:
        if self.mesh is None:
            return tuple(sorted({int(d) for d in _used_offsets(self.matrix)}))
        nx = self.mesh.nx
        return (0, 1, -1, nx, -nx, nx - 1, -(nx - 1), nx + 1, -(nx + 1))

    def entry(self, p: int, q: int) -> float:
        return float(self.matrix[p, q])

    def band(self, offset: int) -> np.ndarray:
        return self.matrix.diagonal(offset)

    def bands(self) -> dict[int, np.ndarray]:
        return {k: self.band(k) for k in self.offsets if abs(k) < self.n}

    def __matmul__(self, v):
        return self.matrix @ v

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def _used_offsets(m: sp.spmatrix) -> np.ndarray:
    coo = m.tocoo()
    return np.unique(coo.col.astype(np.int64) - coo.row.astype(np.int64))


def assemble(mesh: Mesh2D, tensor: DiffusionTensor, edges=EDGES, reaction_share=1.0,
             weight: Field | None = None) -> DiscreteOperator:
    """Assemble the edge-based operator.

    ``edges`` selects which couplings to include (all eight for the full
    operator, east/west or north/south for a dimensional term), the reaction
    enters the diagonal as ``-reaction_share * c``, and ``weight`` multiplies
    every edge coefficient at its midpoint and the reaction at the node.
    """
    nx, ny, n, h = mesh.nx, mesh.ny, mesh.n, mesh.h
    X, Y = mesh.nodes
    I, J = mesh.ij(np.arange(n))
    inv_h2 = 1.0 / (h * h)
    rows, cols, vals = [], [], []
    brows, bcols, bvals = [], [], []
    diag = np.zeros(n)
    for dx, dy, comp, scale in edges:
        xm, ym = X + dx * h / 2, Y + dy * h / 2
        k = scale * tensor.component(comp)(xm, ym)
        if weight is not None:
            k = k * weight(xm, ym)
        k = k * inv_h2
        diag -= k
        ni, nj = I + dx, J + dy
        inside = (ni >= 0) & (ni < nx) & (nj >= 0) & (nj < ny)
        p = np.flatnonzero(inside)
        rows.append(p)
        cols.append(mesh.index(ni[inside], nj[inside]))
        vals.append(k[inside])
        pb = np.flatnonzero(~inside)
        brows.append(pb)
        bcols.append(mesh.ghost_index(ni[~inside], nj[~inside]))
        bvals.append(k[~inside])
    if tensor.c != 0.0 and reaction_share != 0.0:
        r = tensor.c * reaction_share
        diag -= r if weight is None else r * weight(X, Y)
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    A.eliminate_zeros()
    A.sort_indices()
    nghost = (nx + 2) * (ny + 2)
    B = sp.csr_matrix((np.concatenate(bvals), (np.concatenate(brows), np.concatenate(bcols))),
                      shape=(n, nghost))
    B.eliminate_zeros()
    return DiscreteOperator(A, mesh, B)


# ---------------------------------------------------------------------------
# problems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContinuousProblem:
    """``u_t = L u + f`` on the unit square, ``u = g`` on the boundary."""

    tensor: DiffusionTensor
    f: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    u0: Field
    g: Callable[[np.ndarray, np.ndarray, float], np.ndarray] | None = None
    T: float = 1.0
    exact: Callable[[np.ndarray, np.ndarray, float], np.ndarray] | None = None
    name: str = ""
    # optional separated form f = sum_i a_i(t) b_i(x, y), used to sample
    # the spatial factors once per mesh
    f_terms: tuple[tuple[Callable[[float], float], Field], ...] | None = None


def discretize(problem: ContinuousProblem | DiffusionTensor, mesh: Mesh2D) -> DiscreteOperator:
    """Second-order finite-difference approximation of ``div(D grad u) - c u``."""
    tensor = problem.tensor if isinstance(problem, ContinuousProblem) else problem
    tensor.check_elliptic(mesh)
    return assemble(mesh, tensor)


def assemble_source(problem: ContinuousProblem, mesh: Mesh2D, t: float,
                    operator: DiscreteOperator | None = None) -> np.ndarray:
    """Node samples of ``f(., t)`` plus the Dirichlet lifting terms."""
    if not (-1e-12 * max(problem.T, 1.0) <= t <= problem.T * (1 + 1e-12)):
        raise ValueError(f"t={t} outside [0, {problem.T}]")
    X, Y = mesh.nodes
    if problem.f_terms is not None:
        F = np.zeros(mesh.n)
        for (a, _), b in zip(problem.f_terms, _separated_samples(problem, mesh)):
            F += a(t) * b
    else:
        F = np.asarray(problem.f(X, Y, t), dtype=float) * np.ones(mesh.n)
    if problem.g is not None:
        if operator is None:
            operator = assemble(mesh, problem.tensor)
        if operator.boundary is None or operator.boundary.shape[0] != mesh.n:
            raise ValueError("operator does not match the mesh")
        GX, GY = mesh.ghost_nodes
        F = F + operator.boundary @ problem.g(GX, GY, t)
    return F


_separated_cache: dict = {}


def _separated_samples(problem: ContinuousProblem, mesh: Mesh2D) -> list[np.ndarray]:
    key = (id(problem), mesh)
    hit = _separated_cache.get(key)
    if hit is None or hit[0] is not problem:
        X, Y = mesh.nodes
        hit = (problem, [np.asarray(b(X, Y), dtype=float) * np.ones(mesh.n)
                         for _, b in problem.f_terms])
        if len(_separated_cache) > 64:
            _separated_cache.clear()
        _separated_cache[key] = hit
    return hit[1]


@dataclass(frozen=True, eq=False)
class SemidiscreteProblem:
    """``U' = A U + F(t)``, ``U(0) = U0`` on ``[0, T]``."""

    A: DiscreteOperator
    source: Callable[[float], np.ndarray]
    U0: np.ndarray
    T: float
    mesh: Mesh2D | None = None
    continuous: ContinuousProblem | None = None

    def F(self, t: float) -> np.ndarray:
        return self.source(t)

    def exact(self, t: float) -> np.ndarray:
        if self.continuous is None or self.continuous.exact is None:
            raise ValueError("problem has no exact solution")
        X, Y = self.mesh.nodes
        return self.continuous.exact(X, Y, t) * np.ones(self.mesh.n)


def semidiscretize(problem: ContinuousProblem, mesh: Mesh2D) -> SemidiscreteProblem:
    A = discretize(problem, mesh)
    X, Y = mesh.nodes
    U0 = np.asarray(problem.u0(X, Y), dtype=float) * np.ones(mesh.n)
    return SemidiscreteProblem(
        A=A,
        source=lambda t: assemble_source(problem, mesh, t, A),
        U0=U0,
        T=problem.T,
        mesh=mesh,
        continuous=problem,
    )


TWO_PI = 2.0 * np.pi


def _phi(x, y):
    return np.sin(TWO_PI * x) * np.sin(TWO_PI * y)


def _exact(x, y, t):
    return np.sin(TWO_PI * t) * _phi(x, y)


def _full_tensor_d(x, y):
    return 1.0 / (2.0 + np.cos(3 * np.pi * x) * np.cos(TWO_PI * y))


def _l_phi_constant(x, y):
    return -2.0 * TWO_PI**2 * _phi(x, y)


def _l_phi_full(x, y):
    # d (phi_xx + phi_yy) + d_x phi_x + d_y phi_y + 2 d12 phi_xy, d12 = 1/4
    w = 2.0 + np.cos(3 * np.pi * x) * np.cos(TWO_PI * y)
    d = 1.0 / w
    d_x = 3 * np.pi * np.sin(3 * np.pi * x) * np.cos(TWO_PI * y) / w**2
    d_y = TWO_PI * np.cos(3 * np.pi * x) * np.sin(TWO_PI * y) / w**2
    phi_x = TWO_PI * np.cos(TWO_PI * x) * np.sin(TWO_PI * y)
    phi_y = TWO_PI * np.sin(TWO_PI * x) * np.cos(TWO_PI * y)
    phi_xy = TWO_PI**2 * np.cos(TWO_PI * x) * np.cos(TWO_PI * y)
    return d * (-2.0 * TWO_PI**2 * _phi(x, y)) + d_x * phi_x + d_y * phi_y + 0.5 * phi_xy


PRESETS = ("A", "B")


def continuous_problem(preset: str, c: float = 0.0, T: float = 1.0) -> ContinuousProblem:
    """Heat-type test problem with exact solution
    ``sin(2 pi t) sin(2 pi x) sin(2 pi y)`` and homogeneous Dirichlet data.

    ``A``: ``D = I``.  ``B``: ``d11 = d22 = 1/(2 + cos(3 pi x) cos(2 pi y))``,
    ``d12 = 1/4``.  A nonzero ``c`` adds the reaction term to both the
    operator and the manufactured source.
    """
    key = str(preset).upper()
    if key == "A":
        tensor = DiffusionTensor.constant(1.0, 0.0, 1.0, c)
        l_phi = _l_phi_constant
    elif key == "B":
        tensor = DiffusionTensor(_full_tensor_d, _const(0.25), _full_tensor_d, float(c))
        l_phi = _l_phi_full
    else:
        raise ValueError(f"unknown preset {preset!r}; expected one of {PRESETS}")

    def lu(x, y):
        return l_phi(x, y) - c * _phi(x, y)

    def f(x, y, t):
        return TWO_PI * np.cos(TWO_PI * t) * _phi(x, y) - np.sin(TWO_PI * t) * lu(x, y)

    return ContinuousProblem(
        tensor=tensor,
        f=f,
        u0=lambda x, y: np.zeros(np.broadcast(x, y).shape),
        g=None,
        T=T,
        exact=_exact,
        name=key,
        f_terms=((lambda t: TWO_PI * math.cos(TWO_PI * t), _phi),
                 (lambda t: -math.sin(TWO_PI * t), lu)),
    )


def manufactured_problem(preset: str, mesh: Mesh2D, c: float = 0.0,
                         T: float = 1.0) -> SemidiscreteProblem:
    """Semidiscrete form of :func:`continuous_problem`; ``.exact(t)`` samples
    the exact solution at the nodes."""
    return semidiscretize(continuous_problem(preset, c, T), mesh)


def error_norm(numeric, reference, h: float) -> float:
    """Maximum over time points of the discrete 2-norm ``h * ||diff||_2``.

    Inputs are ``(n,)`` vectors or ``(n_times, n)`` trajectories.
    """
    a = np.asarray(numeric, dtype=float)
    b = np.asarray(reference, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"trajectory shapes differ: {a.shape} vs {b.shape}")
    d = np.atleast_2d(a - b)
    return float(np.max(h * np.sqrt(np.einsum("ij,ij->i", d, d))))
