import numpy as np
import pytest

from hgraph.checks import random_smooth_field, random_test_field
from hgraph.geometry import GridDomain, ScalarField, apply_field
from hgraph.oracle import fd_second_variation
from hgraph.stability import (
    STABILITY_RTOL,
    assemble_stability,
    check_maximum_principle,
    first_eigenvalue,
    index_form,
    linear_solve,
    shift_invert_smallest,
    solve_linear_dirichlet,
)

# dense eigensolve at u = 0, n = 2, unit box, 7^4; an FD Hessian of the area
# (no stability code involved) reproduces it to 5e-10 relative
LAMBDA1_ZERO_7 = 25.321364906894846


@pytest.fixture(scope="module")
def zero7():
    return ScalarField.constant(GridDomain.box(2, 7), 0.0)


def test_zero_operator_has_no_lower_order_blocks(zero7):
    op = assemble_stability(zero7)
    assert op.blocks["drift"].nnz == 0
    assert op.blocks["potential"].nnz == 0


def test_zero_operator_is_sum_of_squares():
    d = GridDomain.box(2, 9)
    zero = ScalarField.constant(d, 0.0)
    v = random_smooth_field(d, 1)
    Lv = assemble_stability(zero).apply(v).values
    ref = sum(apply_field(i, apply_field(i, v, zero), zero).values for i in (1, 2, 3))
    deep = np.zeros(d.shape, bool)
    deep[(slice(2, -2),) * 4] = True
    np.testing.assert_allclose(Lv[deep], ref[deep], atol=1e-9)


def test_operator_annihilates_zero(small_base):
    op = assemble_stability(small_base)
    assert np.all(op.apply(ScalarField.constant(small_base.domain, 0.0)).values == 0.0)


def test_apply_rejects_foreign_field(small_base):
    op = assemble_stability(small_base)
    with pytest.raises(ValueError):
        op.apply(ScalarField.constant(GridDomain.box(2, 4), 1.0))


@pytest.mark.parametrize("seed", range(3))
def test_index_form_matches_fd(seed):
    d = GridDomain.box(2, 9)
    u = random_smooth_field(d, seed, 0.5)
    v = random_test_field(d, seed + 50)
    fd = fd_second_variation(u, v).extrapolated
    assert index_form(u, v) == pytest.approx(fd, rel=1e-5)


def test_index_form_at_zero_is_energy():
    d = GridDomain.box(2, 7)
    zero = ScalarField.constant(d, 0.0)
    v = random_test_field(d, 5)
    energy = sum(float(np.sum(d.weights * apply_field(i, v, zero).values ** 2)) for i in (1, 2, 3))
    assert index_form(zero, v) == pytest.approx(energy, rel=1e-12)
    assert energy > 0
    assert index_form(zero, ScalarField.constant(d, 0.0)) == 0.0


def test_index_form_rejects_boundary_support(zero7):
    with pytest.raises(ValueError):
        index_form(zero7, ScalarField.constant(zero7.domain, 1.0))


@pytest.mark.parametrize("seed", range(5))
def test_index_form_positive_for_small_u(seed):
    d = GridDomain.box(2, 7)
    u = random_smooth_field(d, seed, 0.05)
    v = random_test_field(d, seed + 9)
    assert index_form(u, v) > 0


def test_operator_symmetric_in_weighted_product(small_base):
    op = assemble_stability(small_base)
    w = small_base.domain.weights.ravel()[small_base.domain.interior_index]
    WL = (op.matrix.T.multiply(w)).T.toarray()
    np.testing.assert_allclose(WL, WL.T, atol=1e-12 * np.abs(WL).max())


def test_golden_first_eigenvalue(zero7):
    res = first_eigenvalue(zero7, method="dense")
    assert res.lambda_sym == pytest.approx(LAMBDA1_ZERO_7, rel=1e-12)
    assert res.strictly_stable
    assert res.lambda_op == pytest.approx(res.lambda_sym, rel=1e-10)


def test_shift_invert_matches_dense(zero7, small_base):
    for u in (zero7, small_base):
        a = first_eigenvalue(u, method="dense")
        b = first_eigenvalue(u, method="shift-invert")
        assert abs(a.lambda_sym - b.lambda_sym) <= 1e-8
        assert abs(a.lambda_op - b.lambda_op) <= 1e-8


def test_eigenfunction_normalized_and_rayleigh(small_base):
    res = first_eigenvalue(small_base)
    v = res.eigenfunction
    d = v.domain
    assert float(np.sum(d.weights * v.values**2)) == pytest.approx(1.0, rel=1e-10)
    assert np.all(v.boundary == 0.0)
    assert index_form(small_base, v) == pytest.approx(res.lambda_sym, rel=1e-9)
    assert res.residual < 1e-8 * res.scale


def test_shift_invert_on_diagonal():
    import scipy.sparse as sp
    vals = np.array([5.0, 3.0, 3.0, 7.0, 1.5, 9.0, 2.0, 4.0, 8.0, 6.0] * 3)
    lam, vec, *_ = shift_invert_smallest(sp.diags(vals).tocsr())
    assert lam == pytest.approx(1.5, rel=1e-12)


def test_smaller_box_has_larger_eigenvalue():
    big = first_eigenvalue(ScalarField.constant(GridDomain.box(2, 7, 0.0, 1.0), 0.0))
    half = first_eigenvalue(ScalarField.constant(GridDomain.box(2, 7, 0.0, 0.5), 0.0))
    assert half.lambda_sym > big.lambda_sym


def test_stability_persists_along_scaling_sweep():
    d = GridDomain.box(2, 7)
    u = random_smooth_field(d, 3, 0.2)
    lams = [first_eigenvalue(t * u).lambda_sym for t in (0.0, 0.25, 0.5, 1.0)]
    assert all(l > STABILITY_RTOL * 100 for l in lams)


def test_unknown_method(zero7):
    with pytest.raises(ValueError):
        first_eigenvalue(zero7, method="lanczos")


@pytest.mark.parametrize("method", ["direct", "gmres", "dense"])
def test_linear_solve_methods(method, small_base):
    op = assemble_stability(small_base)
    rhs = np.random.default_rng(0).normal(size=op.shape[0])
    x, rel = linear_solve(op.matrix, rhs, method=method)
    assert rel < 1e-10


def test_linear_solve_permutation(small_base):
    op = assemble_stability(small_base)
    rhs = np.random.default_rng(1).normal(size=op.shape[0])
    x0, _ = linear_solve(op.matrix, rhs)
    p = np.random.default_rng(2).permutation(op.shape[0])
    x1, _ = linear_solve(op.matrix, rhs, permutation=p)
    np.testing.assert_allclose(x0, x1, atol=1e-12)


def test_maximum_principle_constants(zero7):
    r = check_maximum_principle(zero7, 0.0, 1.0)
    assert r.verdict == "pass"
    np.testing.assert_allclose(r.field.values, 1.0, atol=1e-12)
    r2 = check_maximum_principle(zero7, -1.0, 1.0)
    assert r2.verdict == "pass" and r2.inf_value >= 1.0 - 1e-12


def test_maximum_principle_on_solver_output(stable_base):
    r = check_maximum_principle(stable_base, 0.0, 1.0)
    assert r.verdict == "pass" and r.inf_value > 0


def test_maximum_principle_preconditions(zero7):
    with pytest.raises(ValueError):
        check_maximum_principle(zero7, 1.0, 1.0)
    with pytest.raises(ValueError):
        check_maximum_principle(zero7, 0.0, 0.0)


def test_maximum_principle_inapplicable_when_unstable(zero7):
    class Fake:
        lambda_op = -1.0
        scale = 1.0
    r = check_maximum_principle(zero7, 0.0, 1.0, spectral=Fake())
    assert r.verdict == "inapplicable" and r.field is None


def test_dirichlet_solution_satisfies_equation(small_base):
    d = small_base.domain
    g = ScalarField.from_function(d, lambda *x: -np.cos(x[0]))
    b = ScalarField.from_function(d, lambda *x: 1 + x[1])
    v = solve_linear_dirichlet(small_base, g, b)
    Lv = assemble_stability(small_base).apply(v)
    np.testing.assert_allclose(Lv.interior, g.interior, atol=1e-9)
    np.testing.assert_array_equal(v.boundary, b.boundary)
