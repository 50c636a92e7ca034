import numpy as np
import pytest

from hgraph.geometry import GridDomain, ScalarField
from hgraph.solver import SolverConfig, solve_dirichlet


def nontrivial_boundary(x1, x2, x3, x4):
    return 0.05 * np.sin(2 * x1 + x3) * np.cos(x2 - x4) + 0.03 * x1 * x4


@pytest.fixture(scope="session")
def stable_base():
    """A converged, strictly stable, non-affine minimal graph on the 9^4 unit grid."""
    domain = GridDomain.box(2, 9)
    phi = ScalarField.from_function(domain, nontrivial_boundary)
    u, rep = solve_dirichlet(phi, cfg=SolverConfig())
    assert u is not None and rep.strictly_stable
    return u


@pytest.fixture(scope="session")
def small_base():
    """Same boundary shape on the 5^4 grid, for the cheaper checks."""
    domain = GridDomain.box(2, 5)
    phi = ScalarField.from_function(domain, nontrivial_boundary)
    u, rep = solve_dirichlet(phi)
    assert u is not None
    return u
