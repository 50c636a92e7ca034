import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgraph.checks import random_smooth_field, random_test_field
from hgraph.geometry import GridDomain, ScalarField, linear_function
from hgraph.oracle import fd_first_variation, symbolic_check
from hgraph.variational import (
    area,
    area_density,
    flux,
    interior_sup,
    mean_curvature,
    mean_curvature_nondiv,
    prescribed_functional,
    weak_residual,
)


@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("c", [0.0, 3.5])
def test_area_of_constant(n, c):
    d = GridDomain.box(n, 7 if n == 2 else 17)
    assert area(ScalarField.constant(d, c)).value == pytest.approx(1.0, abs=1e-13)


def test_area_of_tilted_plane_n1():
    d = GridDomain.box(1, 17)
    u = ScalarField.from_function(d, lambda x1, x2: x1)
    assert area(u).value == pytest.approx(np.sqrt(2.0), abs=1e-12)


@given(st.integers(0, 10_000))
@settings(max_examples=10, deadline=None)
def test_area_at_least_measure(seed):
    d = GridDomain.box(2, 5)
    u = random_smooth_field(d, seed, amplitude=1.0)
    assert area(u).value >= d.measure - 1e-12


def test_flux_strictly_below_one():
    d = GridDomain.box(2, 5)
    u = random_smooth_field(d, 3, amplitude=20.0)
    assert np.all(flux(u).magnitude() < 1.0)


def test_prescribed_functional_examples():
    d = GridDomain.box(2, 5)
    u = random_smooth_field(d, 1, amplitude=0.3)
    assert prescribed_functional(u, 0.0).value == pytest.approx(area(u).value)
    zero = ScalarField.constant(d, 0.0)
    assert prescribed_functional(zero, 2.5).value == pytest.approx(1.0)
    d1 = GridDomain.box(1, 9)
    assert prescribed_functional(ScalarField.constant(d1, 1.0), 1.0).value == pytest.approx(0.0, abs=1e-13)


@pytest.mark.parametrize("scheme", ["conservative", "collocated"])
def test_curvature_of_constant_and_linear(scheme):
    d = GridDomain.box(2, 7, -1.0, 1.0)
    assert interior_sup(mean_curvature(ScalarField.constant(d, 2.0), scheme)) == 0.0
    u = ScalarField.from_function(d, linear_function([0.7, -1.2, 0.4, 0.0]))
    assert interior_sup(mean_curvature(u, scheme)) < 1e-12
    assert interior_sup(mean_curvature_nondiv(u)) < 1e-12


def test_curvature_boundary_sentinel():
    d = GridDomain.box(2, 5)
    u = random_smooth_field(d, 2, 0.5)
    H = mean_curvature(u)
    assert np.all(H.boundary == 0.0)


def _x4_error(m):
    d = GridDomain.box(2, m, 0.0, 1.0)
    u = ScalarField.from_function(d, lambda x1, x2, x3, x4: x4)
    ref = symbolic_check("x4", 2, domain=d).mean_curvature.reshape(d.shape)
    gap = np.abs(mean_curvature(u).values - ref)[d.interior_mask]
    return gap.max()


def test_curvature_of_x4_second_order():
    e1, e2 = _x4_error(5), _x4_error(9)
    assert e2 < 0.1
    assert np.log(e1 / e2) / np.log(2) > 1.8


def test_curvature_of_x4_closed_form():
    # for u = x4 the gradient is (0, -x1, x4) and H = x4 / (1 + x1^2 + x4^2)^(3/2)
    pts = np.array([[0.3, 0.1, 0.2, 0.5], [1.0, 2.0, 3.0, 4.0]])
    sym = symbolic_check("x4", 2, points=pts)
    W = np.sqrt(1 + pts[:, 0] ** 2 + pts[:, 3] ** 2)
    np.testing.assert_allclose(sym.mean_curvature, pts[:, 3] / W**3, rtol=1e-14)


def test_weak_residual_trivial():
    d = GridDomain.box(2, 5)
    phi = random_test_field(d, 4)
    assert abs(weak_residual(ScalarField.constant(d, 0.0), phi)) <= 1e-12
    u = random_smooth_field(d, 5, 0.4)
    assert weak_residual(u, ScalarField.constant(d, 0.0)) == 0.0


def test_weak_residual_rejects_boundary_support():
    d = GridDomain.box(1, 9)
    with pytest.raises(ValueError):
        weak_residual(ScalarField.constant(d, 0.0), ScalarField.constant(d, 1.0))


@pytest.mark.parametrize("seed", range(4))
def test_weak_residual_matches_fd_n1(seed):
    d = GridDomain.box(1, 33)
    u = random_smooth_field(d, seed, 0.5)
    phi = random_test_field(d, seed + 100)
    a = weak_residual(u, phi)
    fd = fd_first_variation(u, phi).extrapolated
    assert abs(a - fd) <= 1e-6 * (1 + abs(fd))


def test_weak_residual_is_dual_to_curvature():
    d = GridDomain.box(2, 7)
    u = random_smooth_field(d, 7, 0.4)
    phi = random_test_field(d, 8)
    H = mean_curvature(u)
    assert weak_residual(u, phi) == pytest.approx(-float(np.sum(d.weights * H.values * phi.values)),
                                                  rel=1e-12)


def test_weak_residual_with_f_sign():
    # critical points of area - int f u are the zeros of H + f
    d = GridDomain.box(1, 17)
    u = random_smooth_field(d, 9, 0.3)
    phi = random_test_field(d, 10)
    f = ScalarField.constant(d, 0.7)
    assert weak_residual(u, phi, f) == pytest.approx(
        weak_residual(u, phi) - float(np.sum(d.weights * f.values * phi.values)), rel=1e-12)


def test_schemes_agree_to_second_order():
    gaps = []
    for m in (9, 17):
        d = GridDomain.box(1, m)
        u = ScalarField.from_function(d, lambda x1, x2: 0.3 * np.sin(x1 + 2 * x2))
        gaps.append(interior_sup(mean_curvature(u) - mean_curvature(u, "collocated")))
    assert np.log(gaps[0] / gaps[1]) / np.log(2) > 1.8


def test_unknown_scheme():
    with pytest.raises(ValueError):
        mean_curvature(ScalarField.constant(GridDomain.box(1, 4), 0.0), "upwind")


def test_identity_on_linear():
    d = GridDomain.box(2, 5)
    u = ScalarField.from_function(d, linear_function([0.5, 0.2, -0.3, 0.0]))
    M = mean_curvature_nondiv(u)
    Hc = mean_curvature(u, "collocated")
    gap = np.abs(M.values - area_density(u) * Hc.values)[d.interior_mask]
    assert gap.max() < 1e-12
