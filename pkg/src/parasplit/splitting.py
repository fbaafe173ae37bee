"""Additive splittings ``A = A_1 + ... + A_M`` and their decoupling structure.

Two constructions are provided.  The dimensional one keeps the x-edges in
``A_1`` and the y-edges in ``A_2``.  The domain-decomposition one scales
every edge of the full stencil by a partition-of-unity weight sampled at
the edge midpoint.  Either way, each term is assembled by the same edge
loop as the unsplit operator, so the sum reproduces ``A`` up to rounding.

For every term the index sets of the connected components of its sparsity
graph are recorded.  ``I - tau A_j`` is block diagonal over those sets and
the identity everywhere else.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import SplittingNotApplicableError, UnsupportedMeshError
from .grid import (EDGES, X_EDGES, Y_EDGES, ContinuousProblem, DiffusionTensor,
                   DiscreteOperator, Mesh2D, assemble, discretize)

DIMENSIONAL = "dimensional"
DOMAIN_DECOMPOSITION = "domain-decomposition"


# ---------------------------------------------------------------------------
# partition of unity
# ---------------------------------------------------------------------------

def _strip_weights(x: np.ndarray, M: int, q: int, beta: float) -> np.ndarray:
    """Weights ``(M, len(x))`` for ``M q`` vertical strips assigned
    cyclically to the subdomains, with a cosine ramp of width ``beta``
    centred on every interface."""
    x = np.asarray(x, dtype=float)
    nstrips = M * q
    width = 1.0 / nstrips
    out = np.zeros((M,) + x.shape)
    strip = np.clip(np.floor(x / width).astype(int), 0, nstrips - 1)
    iface = np.clip(np.rint(x / width).astype(int), 1, nstrips - 1)
    d = x - iface * width
    ramp = np.abs(d) < beta / 2
    owner = strip % M
    # plateau
    for j in range(M):
        out[j][~ramp & (owner == j)] = 1.0
    # overlap: the left strip's owner descends, the right strip's ascends
    t = (d[ramp] + beta / 2) / beta
    down = 0.5 * (1.0 + np.cos(np.pi * t))
    left = (iface[ramp] - 1) % M
    right = iface[ramp] % M
    for j in range(M):
        sel = left == j
        out[j][np.flatnonzero(ramp)[sel]] = down[sel]
    for j in range(M):
        sel = right == j
        idx = np.flatnonzero(ramp)[sel]
        out[j][idx] = 1.0 - down[sel]
    return out


@dataclass(frozen=True, eq=False)
class PartitionOfUnity:
    """Weights ``rho_1 .. rho_M`` as functions of position, plus their samples.

    The last weight is always ``1 - (rho_1 + ... + rho_{M-1})`` so that the
    weights sum to one by construction.
    """

    mesh: Mesh2D
    functions: tuple[Callable[[np.ndarray, np.ndarray], np.ndarray], ...]
    q: int | None = None
    beta: float | None = None
    _nodes: np.ndarray = field(init=False, repr=False)
    _faces: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        X, Y = self.mesh.nodes
        object.__setattr__(self, "_nodes", self._sample(X, Y))
        h = self.mesh.h
        faces = np.stack([self._sample(X + dx * h / 2, Y + dy * h / 2)
                          for dx, dy, _, _ in EDGES])
        object.__setattr__(self, "_faces", faces)

    @classmethod
    def from_functions(cls, mesh: Mesh2D, leading: Sequence[Callable], **geometry):
        """Build from ``rho_1 .. rho_{M-1}``; ``rho_M`` is the complement."""
        leading = tuple(leading)
        if not leading:
            raise ValueError("need at least one weight function")

        def last(x, y):
            acc = leading[0](x, y)
            for f in leading[1:]:
                acc = acc + f(x, y)
            return 1.0 - acc

        return cls(mesh, leading + (last,), **geometry)

    @property
    def M(self) -> int:
        return len(self.functions)

    def _sample(self, x, y) -> np.ndarray:
        return np.stack([np.broadcast_to(f(x, y), np.shape(x)).astype(float)
                         for f in self.functions])

    def rho(self, j: int) -> Callable:
        return self.functions[j]

    @property
    def node_weights(self) -> np.ndarray:
        """``(M, n)`` samples at the nodes."""
        return self._nodes

    @property
    def face_weights(self) -> np.ndarray:
        """``(8, M, n)`` samples at the stencil edge midpoints, ordered as
        :data:`parasplit.grid.EDGES`."""
        return self._faces


def build_partition_of_unity(mesh: Mesh2D, M: int = 2, q: int = 2,
                             beta: float = 1 / 16) -> PartitionOfUnity:
    """Vertical-strip partition: ``M q`` strips of width ``1/(M q)``, strip
    ``k`` belonging to subdomain ``k mod M``, each subdomain widened by
    ``beta/2`` across every interface.  Inside an overlap the weights follow
    ``(1 + cos(pi (x - a) / beta)) / 2`` and its complement, which is C^1."""
    if int(q) != q or q < 1:
        raise ValueError(f"q must be a positive integer, got {q}")
    if M < 2:
        raise ValueError(f"need M >= 2 subdomains, got {M}")
    width = 1.0 / (M * q)
    if not (0.0 < beta < width):
        raise ValueError(f"overlap beta={beta} must lie in (0, {width}) for q={q}, M={M}")
    q = int(q)

    def make(j):
        def rho(x, y):
            return _strip_weights(x, M, q, beta)[j] * np.ones(np.broadcast(x, y).shape)
        return rho

    return PartitionOfUnity.from_functions(mesh, [make(j) for j in range(M - 1)], q=q,
                                           beta=float(beta))


# ---------------------------------------------------------------------------
# split operators
# ---------------------------------------------------------------------------

def decoupling_blocks(matrix: sp.spmatrix) -> list[np.ndarray]:
    """Index sets of the connected components of the sparsity graph.

    Nodes touched by no entry (zero row and zero column) are left out;
    ``I - tau A`` is the identity there.  Each set is sorted ascending and
    the list is ordered by first index.
    """
    m = sp.csr_matrix(matrix)
    m.eliminate_zeros()
    touched = np.diff(m.indptr) > 0
    touched[m.indices] = True
    active = np.flatnonzero(touched)
    if active.size == 0:
        return []
    ncomp, labels = connected_components(m, directed=False)
    order = np.argsort(labels[active], kind="stable")
    lab = labels[active][order]
    cuts = np.flatnonzero(np.diff(lab)) + 1
    blocks = np.split(active[order], cuts)
    return sorted((np.sort(b) for b in blocks), key=lambda b: int(b[0]))


@dataclass(frozen=True, eq=False)
class SplitOperator:
    terms: tuple[DiscreteOperator, ...]
    full: DiscreteOperator
    kind: str
    blocks: tuple[tuple[np.ndarray, ...], ...]
    pou: PartitionOfUnity | None = None

    @property
    def M(self) -> int:
        return len(self.terms)

    @property
    def n(self) -> int:
        return self.full.n

    def consistency_error(self) -> float:
        """``||sum A_j - A||_max / ||A||_max``."""
        total = self.terms[0].matrix.copy()
        for t in self.terms[1:]:
            total = total + t.matrix
        diff = abs(total - self.full.matrix).max()
        scale = abs(self.full.matrix).max()
        return float(diff / scale) if scale else float(diff)

    def block_counts(self) -> list[int]:
        return [len(b) for b in self.blocks]

    @classmethod
    def from_matrices(cls, terms: Sequence, kind: str = "custom",
                      mesh: Mesh2D | None = None) -> "SplitOperator":
        """Wrap explicit term matrices; the full operator is their sum."""
        mats = [sp.csr_matrix(np.atleast_2d(t) if not sp.issparse(t) else t, dtype=float)
                for t in terms]
        ops = tuple(DiscreteOperator(m, mesh) for m in mats)
        full = mats[0].copy()
        for m in mats[1:]:
            full = full + m
        return cls(ops, DiscreteOperator(sp.csr_matrix(full), mesh), kind,
                   tuple(tuple(decoupling_blocks(m)) for m in mats))


def _tensor_of(problem) -> DiffusionTensor:
    return problem.tensor if isinstance(problem, ContinuousProblem) else problem


def build_dimensional(problem: ContinuousProblem | DiffusionTensor, mesh: Mesh2D) -> SplitOperator:
    """x-diffusion plus half the reaction, and the y-direction analogue."""
    tensor = _tensor_of(problem)
    full = discretize(tensor, mesh)
    if not tensor.is_diagonal_on(mesh):
        raise SplittingNotApplicableError(
            "dimensional splitting needs d12 = 0; use domain decomposition for full tensors")
    A1 = assemble(mesh, tensor, X_EDGES, reaction_share=0.5)
    A2 = assemble(mesh, tensor, Y_EDGES, reaction_share=0.5)
    return SplitOperator((A1, A2), full, DIMENSIONAL,
                         (tuple(decoupling_blocks(A1.matrix)),
                          tuple(decoupling_blocks(A2.matrix))))


def build_domain_decomposition(problem: ContinuousProblem | DiffusionTensor,
                               pou: PartitionOfUnity, mesh: Mesh2D | None = None) -> SplitOperator:
    """``A_j``: the full stencil with every edge scaled by ``rho_j`` at its
    midpoint and the reaction scaled by ``rho_j`` at the node."""
    tensor = _tensor_of(problem)
    if mesh is not None and mesh != pou.mesh:
        raise UnsupportedMeshError("partition of unity was built on a different mesh")
    mesh = pou.mesh
    full = discretize(tensor, mesh)
    terms = tuple(assemble(mesh, tensor, EDGES, 1.0, weight=pou.rho(j)) for j in range(pou.M))
    return SplitOperator(terms, full, DOMAIN_DECOMPOSITION,
                         tuple(tuple(decoupling_blocks(t.matrix)) for t in terms), pou)


def build_split(problem, mesh: Mesh2D, kind: str, q: int = 2, beta: float = 1 / 16,
                pou: PartitionOfUnity | None = None) -> SplitOperator:
    if kind == DIMENSIONAL:
        return build_dimensional(problem, mesh)
    if kind == DOMAIN_DECOMPOSITION:
        if pou is None:
            pou = build_partition_of_unity(mesh, 2, q, beta)
        return build_domain_decomposition(problem, pou, mesh)
    raise ValueError(f"unknown splitting kind {kind!r}")
