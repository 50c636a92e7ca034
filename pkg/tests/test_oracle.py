import numpy as np
import pytest

from hgraph.checks import random_smooth_field, random_test_field
from hgraph.geometry import GridDomain, ScalarField, apply_field, linear_function
from hgraph.oracle import fd_first_variation, fd_second_variation, richardson, symbolic_check
from hgraph.stability import index_form

# H for u = x1 x3 (n = 2), checked against -2 x1 x3 / (1 + x1^2 + x3^2)^(3/2) by hand
X1X3_POINTS = np.array([
    [1.0, 0.0, 1.0, 0.0],
    [0.5, 0.3, 0.5, -0.2],
    [1.0, 2.0, 0.5, 4.0],
    [2.0, 0.0, 1.0, 1.0],
    [0.25, 0.5, -1.0, 0.75],
])
X1X3_GOLDEN = np.array([
    -0.3849001794597505,
    -0.2721655269759087,
    -0.2962962962962963,
    -0.2721655269759087,
    0.16880257547219185,
])


def test_richardson_removes_quadratic_term():
    f = lambda s: 2.0 + 3.0 * s**2
    assert richardson(f(0.1), f(0.05), 2.0) == pytest.approx(2.0, abs=1e-14)


def test_fd_first_variation_trivial():
    d = GridDomain.box(2, 5)
    v = random_test_field(d, 1)
    assert abs(fd_first_variation(ScalarField.constant(d, 0.0), v).extrapolated) <= 1e-10
    u = ScalarField.from_function(d, linear_function([0.4, -0.2, 0.6, 0.0]))
    assert abs(fd_first_variation(u, v).extrapolated) <= 1e-8


def test_fd_rejects_boundary_support():
    d = GridDomain.box(1, 5)
    with pytest.raises(ValueError):
        fd_first_variation(ScalarField.constant(d, 0.0), ScalarField.constant(d, 1.0))


def test_fd_second_variation_trivial():
    d = GridDomain.box(2, 5)
    u = random_smooth_field(d, 2, 0.3)
    assert fd_second_variation(u, ScalarField.constant(d, 0.0)).extrapolated == 0.0


def test_second_variation_at_zero_is_dirichlet_energy():
    d = GridDomain.box(2, 7)
    v = random_test_field(d, 3)
    zero = ScalarField.constant(d, 0.0)
    energy = sum(float(np.sum(d.weights * apply_field(i, v, zero).values ** 2)) for i in (1, 2, 3))
    fd = fd_second_variation(zero, v).extrapolated
    assert fd == pytest.approx(energy, rel=1e-5)


def test_fd_second_matches_index_form_n2():
    d = GridDomain.box(2, 9)
    u = random_smooth_field(d, 11, 0.5)
    v = random_test_field(d, 12)
    rep = fd_second_variation(u, v, analytic=index_form(u, v))
    assert not rep.contaminated
    assert rep.discrepancy <= 1e-5 * abs(rep.extrapolated)


def test_report_flags_noise():
    d = GridDomain.box(1, 9)
    u = random_smooth_field(d, 0, 0.5)
    v = random_test_field(d, 1)
    rep = fd_second_variation(u, v, steps=(1e-6, 1e-7, 1e-8))
    assert rep.contaminated
    assert set(rep.as_dict()) >= {"extrapolated", "noise_floor", "contaminated"}


def test_symbolic_gradient_of_x4():
    pts = np.random.default_rng(0).normal(size=(6, 4))
    s = symbolic_check("x4", 2, points=pts)
    np.testing.assert_array_equal(s.gradient[0], 0.0)
    np.testing.assert_array_equal(s.gradient[1], -pts[:, 0])
    np.testing.assert_array_equal(s.gradient[2], pts[:, 3])


def test_symbolic_constant():
    s = symbolic_check("3", 2, points=np.ones((2, 4)))
    assert np.all(s.gradient == 0) and np.all(s.mean_curvature == 0) and np.all(s.nondiv_curvature == 0)


def test_symbolic_x1x3_golden():
    s = symbolic_check("x1*x3", 2, points=X1X3_POINTS)
    np.testing.assert_allclose(s.mean_curvature, X1X3_GOLDEN, rtol=1e-14)
    x1, x3 = X1X3_POINTS[:, 0], X1X3_POINTS[:, 2]
    np.testing.assert_allclose(X1X3_GOLDEN, -2 * x1 * x3 / (1 + x1**2 + x3**2) ** 1.5, rtol=1e-14)


def test_symbolic_identity_holds_exactly():
    pts = np.random.default_rng(1).uniform(-1, 1, size=(8, 4))
    s = symbolic_check("x1*x3 + 0.5*x4 - x2**2", 2, points=pts)
    W = np.sqrt(1 + np.sum(s.gradient**2, axis=0))
    np.testing.assert_allclose(s.nondiv_curvature, W * s.mean_curvature, rtol=1e-10, atol=1e-12)


def test_symbolic_rejects_high_degree():
    with pytest.raises(ValueError):
        symbolic_check("x1**5", 1, points=np.zeros((1, 2)))


def test_symbolic_field_of_w():
    pts = np.array([[0.5, 1.0, 2.0, 3.0]])
    s = symbolic_check("x1", 2, points=pts, w_expr="x4")
    # X1 x4 = 0, X2 x4 = -x1, X3^u x4 = u = x1
    np.testing.assert_allclose(s.field_of_w[:, 0], [0.0, -0.5, 0.5])
