"""Brute-force verifiers that do not share code paths with the analytic routes.

* :func:`fd_first_variation` / :func:`fd_second_variation` only ever call
  :func:`hgraph.variational.area`; they never touch fluxes, curvatures or
  assembled operators.
* :func:`symbolic_check` differentiates polynomial inputs exactly with
  ``sympy`` and evaluates the closed forms at requested points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import sympy

from .geometry import GridDomain, ScalarField, _check_same
from .variational import area

DEFAULT_STEPS = (1e-3, 1e-4, 1e-5)
# round-off in a second difference grows like 1/s^2, so it needs larger steps
DEFAULT_STEPS_SECOND = (1e-2, 1e-3, 1e-4)
NOISE_FACTOR = 1e3
# a step is trusted while its round-off bound stays below this fraction of the estimate
CLEAN_RTOL = 1e-4


@dataclass
class FDReport:
    """Step sweep of a central difference with Richardson extrapolation."""

    order: int
    steps: tuple[float, ...]
    estimates: tuple[float, ...]
    noise: tuple[float, ...]
    clean: tuple[bool, ...]
    extrapolated: float
    noise_floor: float
    monotone: bool
    analytic: float | None = None

    @property
    def contaminated(self) -> bool:
        return (not self.monotone) or sum(self.clean) < 2

    @property
    def discrepancy(self) -> float | None:
        if self.analytic is None:
            return None
        return abs(self.extrapolated - self.analytic)

    def relative_discrepancy(self) -> float | None:
        if self.analytic is None:
            return None
        return self.discrepancy / (1.0 + abs(self.extrapolated))

    def as_dict(self) -> dict:
        return {
            "order": self.order,
            "steps": list(self.steps),
            "estimates": list(self.estimates),
            "extrapolated": self.extrapolated,
            "noise_floor": self.noise_floor,
            "contaminated": self.contaminated,
            "analytic": self.analytic,
            "discrepancy": self.discrepancy,
        }


def _check_test_field(u: ScalarField, v: ScalarField):
    _check_same(u, v)
    if np.any(v.boundary != 0.0):
        raise ValueError("variation field must vanish on the boundary")


def richardson(coarse: float, fine: float, ratio: float, power: int = 2) -> float:
    """Eliminate the leading ``s**power`` error term between two step sizes."""
    r = ratio**power
    return (r * fine - coarse) / (r - 1.0)


def _sweep(order: int, estimates, steps, floor, analytic) -> FDReport:
    steps = tuple(float(s) for s in steps)
    est = tuple(float(e) for e in estimates)
    # round-off bounds: |f(u+sv) - f(u-sv)| / 2s and the 4-term bound for the second difference
    noise = tuple((1.0 if order == 1 else 4.0) * floor / s**order for s in steps)
    clean = tuple(nz <= CLEAN_RTOL * abs(e) or nz <= 1e-12 for nz, e in zip(noise, est))
    good = [j for j, c in enumerate(clean) if c]
    if len(good) >= 2:
        j0, j1 = good[-2], good[-1]
        value = richardson(est[j0], est[j1], steps[j0] / steps[j1])
    elif good:
        value = est[good[0]]
    else:
        # no step clears the noise bound (derivative ~ 0): take the step with the
        # smallest truncation-plus-round-off estimate
        trunc = [abs(est[j] - est[j + 1]) for j in range(len(est) - 1)]
        trunc.append(trunc[-1] * (steps[-1] / steps[-2]) ** order if trunc else 0.0)
        value = est[int(np.argmin(np.add(trunc, noise)))]
    diffs = [abs(est[good[k + 1]] - est[good[k]]) for k in range(len(good) - 1)]
    monotone = all(b <= a + nz for a, b, nz in
                   zip(diffs, diffs[1:], [noise[j] for j in good[2:]]))
    return FDReport(order, steps, est, noise, clean, float(value), floor, monotone,
                    None if analytic is None else float(analytic))


def fd_first_variation(u: ScalarField, v: ScalarField, steps: Sequence[float] = DEFAULT_STEPS,
                       analytic: float | None = None) -> FDReport:
    """Central differences of ``s -> area(u + s v)`` at ``s = 0``."""
    _check_test_field(u, v)
    est = [(area(u + s * v).value - area(u - s * v).value) / (2 * s) for s in steps]
    floor = NOISE_FACTOR * np.finfo(float).eps * abs(area(u).value)
    return _sweep(1, est, steps, floor, analytic)


def fd_second_variation(u: ScalarField, v: ScalarField, steps: Sequence[float] = DEFAULT_STEPS_SECOND,
                        analytic: float | None = None) -> FDReport:
    """Central second differences of ``s -> area(u + s v)`` at ``s = 0``."""
    _check_test_field(u, v)
    a0 = area(u).value
    est = [(area(u + s * v).value - 2 * a0 + area(u - s * v).value) / s**2 for s in steps]
    floor = NOISE_FACTOR * np.finfo(float).eps * abs(a0)
    return _sweep(2, est, steps, floor, analytic)


# --------------------------------------------------------------------------
# exact differentiation of polynomial graphs


@dataclass
class SymbolicFields:
    """Closed-form fields evaluated at ``points`` (shape ``(npts, 2n)``)."""

    n: int
    points: np.ndarray
    gradient: np.ndarray
    mean_curvature: np.ndarray
    nondiv_curvature: np.ndarray
    field_of_w: np.ndarray | None = None
    expressions: dict = field(default_factory=dict)


def _symbols(n: int):
    return sympy.symbols(" ".join(f"x{k}" for k in range(1, 2 * n + 1)))


def _parse(expr, xs, max_degree: int):
    e = sympy.sympify(expr, locals={str(x): x for x in xs})
    free = e.free_symbols - set(xs)
    if free:
        raise ValueError(f"unknown symbols in expression: {sorted(map(str, free))}")
    if not e.is_polynomial(*xs):
        raise ValueError(f"expression {expr!r} is not a polynomial in {xs}")
    deg = sympy.Poly(e, *xs).total_degree() if e.free_symbols else 0
    if deg > max_degree:
        raise ValueError(f"polynomial degree {deg} exceeds the supported degree {max_degree}")
    return e


def symbolic_fields(u_expr, n: int):
    """Sympy expressions for the fields, gradient, ``H_u`` and ``M_u``."""
    xs = _symbols(n)
    u = _parse(u_expr, xs, 4)
    last = xs[-1]

    def X(i, w):
        if i <= n - 1:
            return sympy.diff(w, xs[i - 1])
        if i <= 2 * n - 2:
            return sympy.diff(w, xs[i - 1]) - xs[i - n] * sympy.diff(w, last)
        return sympy.diff(w, xs[2 * n - 2]) + u * sympy.diff(w, last)

    k = 2 * n - 1
    grad = [sympy.expand(X(i, u)) for i in range(1, k + 1)]
    W = sympy.sqrt(1 + sum(g**2 for g in grad))
    H = sum(X(i, grad[i - 1] / W) for i in range(1, k + 1))
    M = sum((sympy.KroneckerDelta(i, j) - grad[i - 1] * grad[j - 1] / W**2) * X(i, grad[j - 1])
            for i in range(1, k + 1) for j in range(1, k + 1))
    return xs, u, X, grad, W, H, M


def symbolic_check(u_expr, n: int, points=None, w_expr=None,
                   domain: GridDomain | None = None) -> SymbolicFields:
    """Exact ``grad^u u``, ``H_u``, ``M_u`` (and ``X_i^u w``) of a polynomial ``u``.

    Either ``points`` (``(npts, 2n)``) or a ``domain`` whose nodes are used
    (C order) must be given.  Degrees above 4 are rejected.
    """
    xs, u, X, grad, W, H, M = symbolic_fields(u_expr, n)
    if points is None:
        if domain is None:
            raise ValueError("give evaluation points or a domain")
        points = np.stack([c.ravel() for c in domain.coords], axis=1)
    points = np.atleast_2d(np.asarray(points, float))
    cols = [points[:, k] for k in range(2 * n)]

    def ev(expr):
        return np.broadcast_to(sympy.lambdify(xs, expr, "numpy")(*cols), (len(points),)).astype(float)

    xw = None
    if w_expr is not None:
        w = _parse(w_expr, xs, 4)
        xw = np.stack([ev(X(i, w)) for i in range(1, 2 * n)])
    return SymbolicFields(
        n=n,
        points=points,
        gradient=np.stack([ev(g) for g in grad]),
        mean_curvature=ev(H),
        nondiv_curvature=ev(M),
        field_of_w=xw,
        expressions={"u": u, "gradient": grad, "H": H, "M": M},
    )


