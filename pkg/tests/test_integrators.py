import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from parasplit import backend, parallel
from parasplit.analysis import r_dr, r_fie
from parasplit.errors import SingularPivotError
from parasplit.grid import DiscreteOperator, Mesh2D, manufactured_problem
from parasplit.integrators import (DR, FIE, IE, StageSolver, dr_step, fie_step, ie_step,
                                   make_propagator, single_term, stage_solver, sweep)
from parasplit.splitting import (DIMENSIONAL, DOMAIN_DECOMPOSITION, SplitOperator, build_split,
                                 decoupling_blocks)

from _oracles import observed_order


def scalar_split(*lams):
    return SplitOperator.from_matrices([[[lam]] for lam in lams])


def one(v):
    return np.array([float(v)])


@pytest.fixture(scope="module")
def preset_a():
    return manufactured_problem("A", Mesh2D(31))


@pytest.fixture(scope="module")
def splits(preset_a):
    P = preset_a
    return {k: build_split(P.continuous, P.mesh, k, 2, 1 / 16)
            for k in (DIMENSIONAL, DOMAIN_DECOMPOSITION)}


# -- closed-form scalar cases -----------------------------------------------

def test_zero_operator_is_identity():
    S = SplitOperator.from_matrices([np.zeros((5, 5)), np.zeros((5, 5))])
    u = np.arange(5.0)
    for step in (fie_step, dr_step):
        assert np.array_equal(step(u, 0.0, 0.1, S), u)
    assert np.array_equal(ie_step(u, 0.0, 0.1, S.full), u)


def test_fie_scalar_factor():
    assert fie_step(one(1), 0.0, 1.0, scalar_split(-1, -1))[0] == 0.25


def test_dr_scalar_factor():
    assert dr_step(one(1), 0.0, 1.0, scalar_split(-1, -1))[0] == 0.5


@given(st.floats(-100, -0.01), st.floats(0.01, 2.0))
def test_dr_with_zero_term_is_backward_euler(lam, tau):
    got = dr_step(one(1), 0.0, tau, scalar_split(lam, 0.0))[0]
    assert got == pytest.approx(1 / (1 - tau * lam), rel=1e-13)


def test_ie_scalar_factor():
    A = DiscreteOperator(sp.csr_matrix([[-1.0]]))
    assert ie_step(one(1), 0.0, 1.0, A)[0] == 0.5


def test_sweep_is_power_of_factor():
    prop = make_propagator(FIE, scalar_split(-1, -1), 0.25)
    # R_FIE(-1/4, -1/4) = 16/25
    assert sweep(prop, one(1), 0.0, 4)[0] == pytest.approx((16 / 25) ** 4, rel=1e-15)
    assert sweep(prop, one(1), 0.0, 2)[0] == pytest.approx(0.4096, rel=1e-15)
    assert np.array_equal(sweep(prop, one(1), 0.0, 1), prop.step(one(1), 0.0))


def test_ie_equals_fie_with_single_term(preset_a):
    A = preset_a.A
    u = preset_a.exact(0.3)
    a = ie_step(u, 0.3, 1e-2, A, preset_a.F)
    b = fie_step(u, 0.3, 1e-2, single_term(A), preset_a.F)
    assert np.array_equal(a, b)


def test_source_sampled_at_step_end():
    seen = []
    F = lambda t: seen.append(t) or np.zeros(1)
    fie_step(one(1), 0.5, 0.1, scalar_split(-1, -1), F)
    dr_step(one(1), 0.5, 0.1, scalar_split(-1, -1), F)
    assert seen == pytest.approx([0.6, 0.6])


# -- stage solvers ----------------------------------------------------------

@pytest.mark.parametrize("kind", [DIMENSIONAL, DOMAIN_DECOMPOSITION])
@pytest.mark.parametrize("name", ["compiled", "python"])
def test_stage_residual(kind, name, splits):
    if name == "compiled" and not backend.compiled_available():
        pytest.skip("extension not built")
    S = splits[kind]
    rng = np.random.default_rng(3)
    tau = 1e-2
    for op, blocks in zip(S.terms, S.blocks):
        solver = StageSolver(op, blocks, tau, backend.get_kernels(name))
        b = rng.standard_normal(S.n)
        x = solver.solve(b)
        res = x - tau * (op.matrix @ x) - b
        assert np.linalg.norm(res) <= 1e-10 * np.linalg.norm(b)


def test_nonsymmetric_block_with_identity_row():
    # row 1 is zero but column 1 couples into row 0
    A = sp.csr_matrix(np.array([[-2.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, -1.0]]))
    op = DiscreteOperator(A)
    solver = StageSolver(op, decoupling_blocks(A), 0.5)
    b = np.array([1.0, 2.0, 3.0])
    x = solver.solve(b)
    assert np.allclose(x - 0.5 * (A @ x), b, rtol=0, atol=1e-14)


def test_block_order_does_not_matter(splits):
    S = splits[DOMAIN_DECOMPOSITION]
    op, blocks = S.terms[0], S.blocks[0]
    b = np.random.default_rng(4).standard_normal(S.n)
    a = StageSolver(op, blocks, 1e-3).solve(b)
    r = StageSolver(op, blocks[::-1], 1e-3).solve(b)
    assert np.array_equal(a, r)


@pytest.mark.parametrize("kind", [DIMENSIONAL, DOMAIN_DECOMPOSITION])
def test_threaded_step_is_bitwise_serial(kind, splits, preset_a):
    S = splits[kind]
    u = preset_a.exact(0.2)
    with parallel.budget(1):
        a = dr_step(u, 0.2, 1e-2, S, preset_a.F)
    with parallel.budget(4):
        b = dr_step(u, 0.2, 1e-2, S, preset_a.F)
    assert np.array_equal(a, b)


def test_backends_agree_on_a_step(splits, preset_a):
    if not backend.compiled_available():
        pytest.skip("extension not built")
    S = splits[DOMAIN_DECOMPOSITION]
    u = preset_a.exact(0.4)
    out = {}
    for name in ("compiled", "python"):
        backend.set_backend(name)
        try:
            out[name] = fie_step(u, 0.4, 1e-2, S, preset_a.F)
        finally:
            backend.set_backend("compiled")
    assert np.allclose(out["compiled"], out["python"], rtol=1e-13, atol=1e-13)


def test_factorizations_are_cached(splits):
    S = splits[DIMENSIONAL]
    a = stage_solver(S.terms[0], S.blocks[0], 0.05)
    assert stage_solver(S.terms[0], S.blocks[0], 0.05) is a
    assert stage_solver(S.terms[0], S.blocks[0], 0.025) is not a


def test_singular_stage_fails_loudly():
    with pytest.raises(SingularPivotError):
        fie_step(one(1), 0.0, 1.0, scalar_split(1.0, -1.0))
    # banded path: a 3x3 block with zero pivot
    A = sp.csr_matrix(np.array([[2.0, 0, 1.0], [0, 1.0, 0], [1.0, 0, 1.0]]))
    with pytest.raises(SingularPivotError):
        StageSolver(DiscreteOperator(A), [np.arange(3)], 0.5)


# -- accuracy ---------------------------------------------------------------

@pytest.mark.parametrize("scheme,kind", [(FIE, DIMENSIONAL), (DR, DIMENSIONAL),
                                         (DR, DOMAIN_DECOMPOSITION)])
def test_local_defect_is_second_order(scheme, kind, splits, preset_a):
    P = preset_a
    S = splits[kind]
    defects, taus = [], (1e-3, 5e-4, 2.5e-4)
    for tau in taus:
        u = P.exact(0.3)
        step = make_propagator(scheme, S, tau, P.F).step(u, 0.3)
        ref = sweep(make_propagator(scheme, S, tau / 100, P.F), u, 0.3, 100)
        defects.append(P.mesh.h * np.linalg.norm(step - ref))
    assert 1.8 <= observed_order(defects, taus) <= 2.2


@pytest.mark.slow
@pytest.mark.parametrize("scheme", [FIE, DR])
def test_global_self_convergence_first_order(scheme):
    # successive differences on a halving ladder; the ladder starts where
    # both schemes are in their asymptotic regime
    P = manufactured_problem("A", Mesh2D(15))
    S = build_split(P.continuous, P.mesh, DIMENSIONAL)

    def run(N):
        prop = make_propagator(scheme, S, 1.0 / N, P.F)
        u, out = P.U0, [P.U0]
        for j in range(N):
            u = prop.step(u, j / N)
            if (j + 1) % (N // 40) == 0:
                out.append(u)
        return np.array(out)

    ladder = [2560, 5120, 10240, 20480]
    runs = [run(N) for N in ladder]
    diffs = [P.mesh.h * np.max(np.linalg.norm(a - b, axis=1)) for a, b in zip(runs, runs[1:])]
    assert 0.85 <= observed_order(diffs, [1 / N for N in ladder[:-1]]) <= 1.15


def test_dr_beats_fie_at_equal_step(splits, preset_a):
    P = preset_a
    S = splits[DIMENSIONAL]
    err = {}
    for scheme in (FIE, DR):
        prop = make_propagator(scheme, S, 1 / 80, P.F)
        u = P.U0
        worst = 0.0
        for j in range(80):
            u = prop.step(u, j / 80)
            worst = max(worst, P.mesh.h * np.linalg.norm(u - P.exact((j + 1) / 80)))
        err[scheme] = worst
    assert err[DR] < err[FIE]


# -- contracts --------------------------------------------------------------

def test_splitting_schemes_need_two_terms(preset_a):
    one_term = SplitOperator.from_matrices([np.eye(2) * -1.0])
    for scheme in (FIE, DR):
        with pytest.raises(ValueError):
            make_propagator(scheme, one_term, 0.1)
        with pytest.raises(TypeError):
            make_propagator(scheme, preset_a.A, 0.1)
    assert make_propagator(IE, preset_a.A, 0.1).split.M == 1


@pytest.mark.parametrize("tau", [0.0, -1.0])
def test_nonpositive_step_rejected(tau):
    with pytest.raises(ValueError):
        make_propagator(FIE, scalar_split(-1, -1), tau)


def test_unknown_scheme_and_bad_count():
    with pytest.raises(ValueError):
        make_propagator("RK4", scalar_split(-1, -1), 0.1)
    prop = make_propagator(FIE, scalar_split(-1, -1), 0.1)
    for count in (0, 1.5):
        with pytest.raises(ValueError):
            sweep(prop, one(1), 0.0, count)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-20, 0), min_size=2, max_size=4), st.floats(0.01, 1.0))
def test_scalar_steps_match_stability_functions(lams, tau):
    S = scalar_split(*lams)
    z = [tau * lam for lam in lams]
    assert fie_step(one(1), 0.0, tau, S)[0] == pytest.approx(r_fie(z), rel=1e-12, abs=1e-300)
    assert dr_step(one(1), 0.0, tau, S)[0] == pytest.approx(r_dr(z), rel=1e-11, abs=1e-13)
