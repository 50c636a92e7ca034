import numpy as np
import pytest

from hgraph.checks import random_smooth_field
from hgraph.geometry import GridDomain, ScalarField, linear_function
from hgraph.solver import SolverConfig, measure_basin, solve_dirichlet, solve_perturbed
from hgraph.stability import first_eigenvalue, solve_linear_dirichlet
from hgraph.variational import interior_sup, mean_curvature


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(tol=0)
    with pytest.raises(ValueError):
        SolverConfig(backtrack=1.0)
    with pytest.raises(ValueError):
        SolverConfig(initial_guess="magic")
    with pytest.raises(ValueError):
        SolverConfig(ordering="sideways")
    with pytest.raises(TypeError):
        SolverConfig.from_dict({"tolerance": 1e-3})
    cfg = SolverConfig.from_dict({"tol": 1e-9, "continuation_steps": 2})
    assert SolverConfig.from_dict(cfg.as_dict()) == cfg


def test_trivial_data():
    d = GridDomain.box(2, 7)
    u, rep = solve_dirichlet(ScalarField.constant(d, 0.0))
    assert rep.converged and rep.iterations <= 1
    assert np.all(u.values == 0.0)


@pytest.mark.parametrize("policy", ["harmonic", "zero"])
def test_linear_recovery(policy):
    d = GridDomain.box(2, 7, -1.0, 1.0)
    ell = ScalarField.from_function(d, linear_function([0.3, -0.2, 0.5, 0.0], 0.1))
    u, rep = solve_dirichlet(ell, cfg=SolverConfig(initial_guess=policy))
    assert rep.converged and rep.iterations <= 6
    assert np.max(np.abs(u.values - ell.values)) <= float(np.max(d.h)) ** 2


def test_random_small_data_is_stable():
    d = GridDomain.box(2, 9)
    phi = random_smooth_field(d, 7, amplitude=0.05)
    u, rep = solve_dirichlet(phi)
    assert rep.converged
    assert rep.final_residual <= 1e-10
    assert rep.strictly_stable and rep.lambda_sym > 0
    np.testing.assert_array_equal(u.boundary, phi.boundary)
    assert interior_sup(mean_curvature(u)) <= 1e-10


def test_quadratic_convergence():
    d = GridDomain.box(2, 7)
    phi = random_smooth_field(d, 3, amplitude=0.3)
    u, rep = solve_dirichlet(phi, cfg=SolverConfig(initial_guess="zero", tol=1e-13))
    assert rep.converged
    ratios = rep.quadratic_ratios()
    assert all(r <= 1e3 for r in ratios)


def test_prescribed_curvature():
    d = GridDomain.box(1, 17)
    f = ScalarField.constant(d, 0.2)
    u, rep = solve_dirichlet(ScalarField.constant(d, 0.0), f)
    assert rep.converged
    H = mean_curvature(u)
    np.testing.assert_allclose(H.interior, 0.2, atol=1e-10)


def test_perturbed_identity(stable_base):
    u, rep = solve_perturbed(stable_base, stable_base)
    assert rep.iterations == 0
    np.testing.assert_array_equal(u.values, stable_base.values)


def test_perturbed_shift_of_zero():
    d = GridDomain.box(2, 7)
    zero = ScalarField.constant(d, 0.0)
    eps = 0.01
    ue, rep = solve_perturbed(zero, zero + eps)
    assert rep.converged
    v = solve_linear_dirichlet(zero, 0.0, 1.0)
    np.testing.assert_allclose((ue.values - zero.values) / eps, v.values, atol=1e-8)


@pytest.mark.parametrize("ordering", ["reverse", "random"])
def test_ordering_invariance(ordering):
    d = GridDomain.box(2, 7)
    phi = random_smooth_field(d, 5, amplitude=0.1)
    a, _ = solve_dirichlet(phi)
    b, _ = solve_dirichlet(phi, cfg=SolverConfig(ordering=ordering, ordering_seed=3))
    assert np.max(np.abs(a.values - b.values)) <= 1e-10


def test_uniqueness_probe():
    d = GridDomain.box(2, 7)
    phi = random_smooth_field(d, 9, amplitude=0.05)
    a, _ = solve_dirichlet(phi, cfg=SolverConfig(initial_guess="harmonic"))
    other = random_smooth_field(d, 99, amplitude=0.02).with_boundary(phi)
    b, rep = solve_dirichlet(phi, initial=other)
    assert rep.converged
    assert np.max(np.abs(a.values - b.values)) <= 1e-8


def test_continuation_levels():
    d = GridDomain.box(2, 7)
    phi = random_smooth_field(d, 2, amplitude=0.2)
    u, rep = solve_dirichlet(phi, cfg=SolverConfig(continuation_steps=3))
    assert rep.converged
    assert rep.levels == pytest.approx([1 / 3, 2 / 3, 1.0])


def test_failure_is_reported_not_returned():
    d = GridDomain.box(2, 7)
    phi = random_smooth_field(d, 4, amplitude=50.0)
    cfg = SolverConfig(max_iter=2, initial_guess="zero", compute_stability=False)
    u, rep = solve_dirichlet(phi, cfg=cfg)
    assert u is None and not rep.converged
    assert rep.message and rep.last_iterate is not None
    assert set(rep.as_dict()) >= {"converged", "message", "residuals", "final_residual"}


def test_nonfinite_boundary_rejected():
    d = GridDomain.box(1, 5)
    phi = ScalarField.constant(d, 0.0)
    phi.values[0, 0] = np.inf  # bypasses the constructor check on purpose
    with pytest.raises(ValueError):
        solve_dirichlet(phi)


def test_basin_bisection():
    d = GridDomain.box(1, 17)
    shape = random_smooth_field(d, 1, amplitude=1.0)
    cfg = SolverConfig(max_iter=4, initial_guess="zero")
    out = measure_basin(shape, cfg, hi=50.0, bisections=4)
    lo, hi = out["bracket"]
    assert out["solvable_amplitude"] == lo
    assert hi is None or lo < hi
    assert all(isinstance(v, bool) for v in out["trials"].values())
