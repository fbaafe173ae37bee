import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parasplit.errors import EllipticityError, UnsupportedMeshError
from parasplit.grid import (ContinuousProblem, DiffusionTensor, Mesh2D, assemble_source,
                            continuous_problem, discretize, error_norm, manufactured_problem,
                            semidiscretize)

from _oracles import lambdified_lu, lambdified_source, naive_error_norm, observed_order


# -- mesh -------------------------------------------------------------------

@given(st.integers(1, 40))
def test_index_mapping_is_bijection(n):
    mesh = Mesh2D(n)
    p = np.arange(mesh.n)
    i, j = mesh.ij(p)
    assert np.array_equal(mesh.index(i, j), p)
    assert set(zip(i.tolist(), j.tolist())) == {(a, b) for a in range(n) for b in range(n)}


def test_spacing_matches_node_count():
    mesh = Mesh2D(63)
    assert mesh.h == 1 / 64
    assert Mesh2D.from_spacing(1 / 64) == mesh
    X, Y = mesh.nodes
    assert X.min() == pytest.approx(1 / 64) and Y.max() == pytest.approx(63 / 64)
    # x runs fastest
    assert X[1] > X[0] and Y[1] == Y[0]


@pytest.mark.parametrize("args", [(4, 5), (0,)])
def test_invalid_mesh_rejected(args):
    with pytest.raises(UnsupportedMeshError):
        Mesh2D(*args)


def test_non_integer_spacing_rejected():
    with pytest.raises(UnsupportedMeshError):
        Mesh2D.from_spacing(0.3)


# -- stencil ----------------------------------------------------------------

def _row(A, mesh, i, j):
    p = int(mesh.index(i, j))
    row = A.matrix.getrow(p).toarray().ravel()
    return {(int(a) - i, int(b) - j): row[q]
            for q, (a, b) in zip(np.flatnonzero(row), zip(*mesh.ij(np.flatnonzero(row))))}


def test_identity_tensor_gives_five_point_laplacian():
    mesh = Mesh2D(15)
    A = discretize(DiffusionTensor.constant(), mesh)
    h2 = mesh.h ** 2
    row = _row(A, mesh, 7, 7)
    assert row == pytest.approx({(0, 0): -4 / h2, (1, 0): 1 / h2, (-1, 0): 1 / h2,
                                 (0, 1): 1 / h2, (0, -1): 1 / h2}, rel=1e-14)


def test_reaction_shifts_diagonal():
    mesh = Mesh2D(15)
    A0 = discretize(DiffusionTensor.constant(c=0.0), mesh)
    A1 = discretize(DiffusionTensor.constant(c=1.0), mesh)
    diff = (A1.matrix - A0.matrix).toarray()
    assert np.allclose(np.diag(diff), -1.0, rtol=0, atol=1e-9)
    np.fill_diagonal(diff, 0.0)
    assert not diff.any()


def test_only_declared_bands_hold_entries():
    mesh = Mesh2D(12)
    A = discretize(continuous_problem("B").tensor, mesh)
    coo = A.matrix.tocoo()
    used = set((coo.col - coo.row).tolist())
    assert used <= set(A.offsets)
    assert len(A.offsets) == 9
    for k, band in A.bands().items():
        assert band.shape == (mesh.n - abs(k),)


@pytest.mark.parametrize("preset", ["A", "B"])
def test_operator_is_symmetric(preset):
    A = discretize(continuous_problem(preset, c=0.7).tensor, Mesh2D(20))
    assert abs(A.matrix - A.matrix.T).max() <= 1e-12 * abs(A.matrix).max()


def test_gershgorin_discs_in_left_half_plane():
    A = discretize(continuous_problem("A", c=0.5).tensor, Mesh2D(31)).toarray()
    d = np.diag(A)
    off = np.abs(A).sum(axis=1) - np.abs(d)
    assert np.all(d < 0)
    assert np.all(d + off < 0)  # strictly diagonally dominant, disc right edge < 0


@pytest.mark.slow
def test_full_tensor_second_order_consistency():
    lu = lambdified_lu("B")
    errs, hs = [], []
    for n in (31, 63, 127):
        mesh = Mesh2D(n)
        A = discretize(continuous_problem("B").tensor, mesh)
        X, Y = mesh.nodes
        phi = np.sin(2 * np.pi * X) * np.sin(2 * np.pi * Y)
        exact = lu(X, Y, 0.25)  # u = phi at t = 1/4
        errs.append(np.max(np.abs(A @ phi - exact)))
        hs.append(mesh.h)
    assert 1.8 <= observed_order(errs, hs) <= 2.2


def test_mixed_stencil_exact_on_quadratics():
    # constant tensor: the 9-point stencil reproduces L u exactly for any
    # quadratic u, including the boundary lifting through g
    mesh = Mesh2D(9)
    d11, d12, d22 = 1.3, 0.4, 0.8
    tensor = DiffusionTensor.constant(d11, d12, d22)
    u = lambda X, Y: 1 + X - 2 * Y + X * X + 3 * X * Y - Y * Y
    lu = 2 * d11 + 2 * d12 * 3 - 2 * d22
    problem = ContinuousProblem(tensor, f=lambda X, Y, t: 0 * X, u0=lambda X, Y: u(X, Y),
                                g=lambda X, Y, t: u(X, Y))
    A = discretize(tensor, mesh)
    X, Y = mesh.nodes
    F = assemble_source(problem, mesh, 0.0, A)
    assert np.allclose(A @ u(X, Y) + F, lu, rtol=0, atol=1e-9)


def test_non_elliptic_tensor_rejected():
    bad = DiffusionTensor.constant(1.0, 1.5, 1.0)
    with pytest.raises(EllipticityError, match="positive definite"):
        discretize(bad, Mesh2D(8))
    with pytest.raises(EllipticityError):
        discretize(DiffusionTensor.constant(c=-1.0), Mesh2D(8))


# -- sources and presets ----------------------------------------------------

def test_zero_data_gives_zero_source():
    p = ContinuousProblem(DiffusionTensor.constant(), f=lambda X, Y, t: 0 * X,
                          u0=lambda X, Y: 0 * X)
    assert not assemble_source(p, Mesh2D(7), 0.5).any()


@pytest.mark.parametrize("preset,c", [("A", 0.0), ("A", 2.0), ("B", 0.0), ("B", 1.5)])
def test_manufactured_source_matches_symbolic(preset, c):
    mesh = Mesh2D(17)
    f = lambdified_source(preset, c)
    X, Y = mesh.nodes
    for tt in (0.0, 0.25, 0.8):
        F = assemble_source(continuous_problem(preset, c), mesh, tt)
        assert np.allclose(F, f(X, Y, tt) * np.ones_like(X), rtol=1e-12, atol=1e-10)


def test_source_outside_time_interval_rejected():
    with pytest.raises(ValueError):
        assemble_source(continuous_problem("A"), Mesh2D(5), 1.5)
    with pytest.raises(ValueError):
        assemble_source(continuous_problem("A"), Mesh2D(5), -0.1)


def test_preset_values():
    pa = continuous_problem("A")
    assert pa.exact(0.25, 0.25, 0.25) == pytest.approx(1.0, abs=1e-15)
    pb = continuous_problem("B")
    assert pb.tensor.d11(0.0, 0.0) == pytest.approx(1 / 3, abs=1e-15)
    assert pb.tensor.d12(0.3, 0.7) == 0.25
    P = manufactured_problem("B", Mesh2D(9))
    assert not P.exact(0.0).any()
    assert not P.U0.any()
    assert P.T == 1.0


def test_unknown_preset_rejected():
    with pytest.raises(ValueError, match="unknown preset"):
        continuous_problem("C")


def test_semidiscrete_problem_shapes():
    P = semidiscretize(continuous_problem("A"), Mesh2D(11))
    assert P.U0.shape == (121,)
    assert np.all(np.isfinite(P.F(0.5)))
    assert P.A.n == 121


def test_sympy_oracle_agrees_with_closed_form():
    # guard the oracle itself: preset A gives L phi = -8 pi^2 phi
    lu = lambdified_lu("A")
    assert lu(0.25, 0.25, 0.25) == pytest.approx(-8 * math.pi ** 2)


# -- error norm -------------------------------------------------------------

def test_error_norm_of_identical_trajectories_is_zero():
    a = np.random.default_rng(0).standard_normal((4, 9))
    assert error_norm(a, a.copy(), 0.1) == 0.0


def test_error_norm_constant_difference():
    mesh = Mesh2D(15)
    ref = np.zeros((3, mesh.n))
    num = ref.copy()
    num[1] = 1.0
    assert error_norm(num, ref, mesh.h) == pytest.approx(mesh.h * math.sqrt(mesh.n), rel=1e-15)


@settings(max_examples=30)
@given(st.integers(1, 5), st.integers(1, 30), st.integers(0, 2**31))
def test_error_norm_matches_naive_loop(nt, n, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2, nt, n))
    h = 1.0 / (n + 1)
    assert error_norm(a, b, h) == pytest.approx(naive_error_norm(a, b, h), rel=1e-14)


def test_error_norm_shape_mismatch():
    with pytest.raises(ValueError):
        error_norm(np.zeros((2, 4)), np.zeros((3, 4)), 0.1)
