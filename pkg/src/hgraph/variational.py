"""Area functional, first variation and mean curvature of intrinsic graphs.

The discrete area is the trapezoidal sum of ``sqrt(1 + |grad^u u|^2)``.
Everything else in this module is derived from it so that discrete duality
holds exactly:

* the linearized gradient in a direction ``phi`` is
  ``X_i phi`` for ``i <= 2n-2`` and ``X_{2n-1}^u phi + phi * d_{2n} u`` for the
  last component (the product ``u d_{2n} u`` differentiated at the node);
* ``weak_residual(u, phi, 0)`` is the exact derivative of
  ``s -> area(u + s phi)`` at ``s = 0``;
* the conservative mean curvature is minus the weighted adjoint of that
  linearization applied to the flux, i.e. ``-(grad area) / weight`` at
  interior nodes.  In the interior it is a second order approximation of
  ``sum_i X_i^u A_i``; the collocated form is available as well.

Orientation: ``d/ds area(u + s phi) = -<H_u, phi>`` for ``phi`` vanishing on
the boundary, so minimal graphs are the zeros of ``H_u``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    GridDomain,
    HorizontalGradient,
    ScalarField,
    _check_same,
    apply_field,
    as_field,
    coefficients,
    drift_coefficient,
    horizontal_gradient,
)


@dataclass(frozen=True)
class FunctionalValue:
    value: float
    quadrature: str
    domain: GridDomain

    def __float__(self):
        return self.value


@dataclass
class FluxVector:
    """Normalized flux ``A_i = p_i / sqrt(1 + |p|^2)``, ``components[i-1]``."""

    domain: GridDomain
    components: np.ndarray

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.components**2, axis=0))


def area_density(u: ScalarField) -> np.ndarray:
    g = horizontal_gradient(u)
    return np.sqrt(1.0 + g.norm_squared())


def area(u: ScalarField) -> FunctionalValue:
    """Trapezoidal approximation of the intrinsic area of the graph of ``u``."""
    dens = area_density(u)
    return FunctionalValue(float(np.sum(u.domain.weights * dens)), "trapezoid", u.domain)


def prescribed_functional(u: ScalarField, f) -> FunctionalValue:
    """``area(u) - int f u`` for a height-independent curvature profile ``f``.

    The subgraph term is measured from the reference level ``z = 0``.
    """
    f = as_field(u.domain, f)
    vol = float(np.sum(u.domain.weights * f.values * u.values))
    return FunctionalValue(area(u).value - vol, "trapezoid", u.domain)


def flux(u: ScalarField, grad: HorizontalGradient | None = None) -> FluxVector:
    g = grad if grad is not None else horizontal_gradient(u)
    w = np.sqrt(1.0 + g.norm_squared())
    return FluxVector(u.domain, g.components / w)


def linearized_gradient(u: ScalarField, phi: ScalarField) -> np.ndarray:
    """Derivative of ``grad^{u+s phi}(u + s phi)`` at ``s = 0``, stacked by field."""
    _check_same(u, phi)
    domain = u.domain
    k = 2 * domain.n - 1
    comps = [apply_field(i, phi, u).values for i in range(1, k + 1)]
    du = domain.diff(domain.dim - 1) @ u.flat
    comps[-1] = comps[-1] + phi.values * du.reshape(domain.shape)
    return np.stack(comps)


def _adjoint_field(domain: GridDomain, i: int, y: np.ndarray, u: ScalarField) -> np.ndarray:
    """Transpose of the discrete ``X_i^u`` applied to flat ``y``."""
    out = domain.diff(i - 1).T @ y
    coef = drift_coefficient(domain, i, u)
    if coef is not None:
        out = out + domain.diff(domain.dim - 1).T @ (coef.ravel() * y)
    return out


def area_gradient(u: ScalarField) -> np.ndarray:
    """Euclidean gradient of the discrete area w.r.t. all nodal values (flat)."""
    domain = u.domain
    a = flux(u).components
    wts = domain.weights.ravel()
    k = 2 * domain.n - 1
    grad = np.zeros(domain.size)
    for i in range(1, k + 1):
        grad += _adjoint_field(domain, i, wts * a[i - 1].ravel(), u)
    du = domain.diff(domain.dim - 1) @ u.flat
    grad += wts * a[-1].ravel() * du
    return grad


def mean_curvature(u: ScalarField, scheme: str = "conservative") -> ScalarField:
    """Mean curvature ``H_u`` at interior nodes; boundary nodes hold 0.

    ``scheme="conservative"`` (default) is the discrete divergence dual to
    :func:`area`, and is what the Newton solver drives to zero.
    ``scheme="collocated"`` evaluates ``sum_i X_i^u(A_i)`` nodewise with the
    same stencils.  The two agree to O(h^2) in the interior.
    """
    domain = u.domain
    if scheme == "conservative":
        vals = -area_gradient(u).reshape(domain.shape) / domain.weights
    elif scheme == "collocated":
        a = flux(u).components
        vals = sum(apply_field(i, ScalarField(domain, a[i - 1]), u).values
                   for i in range(1, 2 * domain.n))
    else:
        raise ValueError(f"unknown curvature scheme {scheme!r}")
    vals = np.where(domain.interior_mask, vals, 0.0)
    return ScalarField(domain, vals)


def mean_curvature_nondiv(u: ScalarField) -> ScalarField:
    """Non-divergence form ``M_u = sum_ij a_ij(grad^u u) X_i^u X_j^u u``."""
    domain = u.domain
    g = horizontal_gradient(u)
    a = coefficients(g.components)
    k = 2 * domain.n - 1
    total = np.zeros(domain.shape)
    for j in range(1, k + 1):
        gj = g[j]
        for i in range(1, k + 1):
            total += a[i - 1, j - 1] * apply_field(i, gj, u).values
    return ScalarField(domain, np.where(domain.interior_mask, total, 0.0))


def weak_residual(u: ScalarField, phi: ScalarField, f=None) -> float:
    """Discrete weak first variation tested against ``phi``.

    Equals ``d/ds [area(u + s phi) - int f (u + s phi)]`` at ``s = 0``.
    ``phi`` must vanish at boundary nodes.
    """
    _check_same(u, phi)
    if np.any(phi.boundary != 0.0):
        raise ValueError("test function must vanish on the boundary")
    f = as_field(u.domain, f)
    a = flux(u).components
    dg = linearized_gradient(u, phi)
    integrand = np.sum(a * dg, axis=0) - f.values * phi.values
    return float(np.sum(u.domain.weights * integrand))


def interior_sup(field: ScalarField) -> float:
    """Max-norm over interior nodes only."""
    vals = field.interior
    return float(np.max(np.abs(vals))) if vals.size else 0.0
