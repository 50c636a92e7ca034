"""Grid domains, scalar fields and the projected horizontal vector fields.

The parameter domain of an intrinsic graph is a box in R^{2n} with
coordinates ``x_1, ..., x_{2n}``.  On it act the ``2n - 1`` fields

    X_i       = d/dx_i                          i = 1, ..., n-1
    X_i       = d/dx_i - x_{i-n+1} d/dx_{2n}    i = n, ..., 2n-2
    X_{2n-1}^u = d/dx_{2n-1} + u(x) d/dx_{2n}

Field indices are 1-based throughout the public API (they name vector
fields, not array axes).  Arrays are stored with shape ``domain.shape`` and
flattened in C order for the sparse machinery; the export order of
:mod:`hgraph.io` is a separate contract.

All derivatives are finite differences: centered in the interior of each
axis, first-order one-sided at the two ends of that axis.  Sparse matvecs and
``numpy`` pairwise summation are the only reductions, so results are bitwise
deterministic for a fixed BLAS thread count.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, reduce
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp


class DomainMismatchError(ValueError):
    """Raised when fields living on different grids are combined."""


@dataclass(frozen=True)
class GridDomain:
    """Axis-aligned box in R^{2n} carrying a uniform lattice.

    A node is *boundary* when any of its indices sits at the end of its
    axis, otherwise *interior*.
    """

    n: int
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    m: tuple[int, ...]

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"Heisenberg index n must be a positive integer, got {self.n}")
        d = 2 * self.n
        lo = tuple(float(v) for v in np.broadcast_to(np.asarray(self.lo, float), (d,)))
        hi = tuple(float(v) for v in np.broadcast_to(np.asarray(self.hi, float), (d,)))
        m = tuple(int(v) for v in np.broadcast_to(np.asarray(self.m), (d,)))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "m", m)
        if any(k < 3 for k in m):
            raise ValueError(f"need at least 3 points per axis, got {m}")
        if any(b <= a for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate box: lo={lo}, hi={hi}")

    @classmethod
    def box(cls, n: int, m, lo=0.0, hi=1.0) -> "GridDomain":
        return cls(n=n, lo=lo, hi=hi, m=m)

    # -- geometry --------------------------------------------------------
    @property
    def dim(self) -> int:
        return 2 * self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return self.m

    @property
    def size(self) -> int:
        return int(np.prod(self.m))

    @property
    def degenerate(self) -> bool:
        """True for n = 1, where a single field cannot generate the tangent space."""
        return self.n == 1

    @cached_property
    def h(self) -> np.ndarray:
        return np.array([(b - a) / (k - 1) for a, b, k in zip(self.lo, self.hi, self.m)])

    @property
    def measure(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @cached_property
    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, k) for a, b, k in zip(self.lo, self.hi, self.m)]

    @cached_property
    def coords(self) -> list[np.ndarray]:
        """Full coordinate arrays ``x_1, ..., x_{2n}`` (``ij`` indexing)."""
        return list(np.meshgrid(*self.axes, indexing="ij"))

    def coordinate(self, k: int) -> np.ndarray:
        """Coordinate array of ``x_k`` (1-based)."""
        return self.coords[k - 1]

    # -- boundary classification ----------------------------------------
    @cached_property
    def interior_mask(self) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        for axis, k in enumerate(self.m):
            edge = [slice(None)] * self.dim
            edge[axis] = [0, k - 1]
            mask[tuple(edge)] = False
        return mask

    @property
    def boundary_mask(self) -> np.ndarray:
        return ~self.interior_mask

    @cached_property
    def interior_index(self) -> np.ndarray:
        return np.flatnonzero(self.interior_mask.ravel())

    @cached_property
    def boundary_index(self) -> np.ndarray:
        return np.flatnonzero(~self.interior_mask.ravel())

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights (boundary weights halved per axis)."""
        w1d = []
        for h, k in zip(self.h, self.m):
            w = np.full(k, h)
            w[[0, -1]] = h / 2
            w1d.append(w)
        return reduce(np.multiply.outer, w1d)

    # -- difference operators -------------------------------------------
    def diff(self, axis: int) -> sp.csr_matrix:
        """Sparse first-derivative matrix along 0-based ``axis``."""
        return self._diff_cache("c", axis)

    def diff_upwind(self, axis: int, direction: int) -> sp.csr_matrix:
        """Backward (``direction=-1``) or forward (``+1``) difference matrix."""
        return self._diff_cache("b" if direction < 0 else "f", axis)

    @cached_property
    def _diffs(self) -> dict:
        return {}

    def _diff_cache(self, kind: str, axis: int) -> sp.csr_matrix:
        key = (kind, axis)
        if key not in self._diffs:
            d1 = _diff_1d(self.m[axis], self.h[axis], kind)
            left = sp.identity(int(np.prod(self.m[:axis], dtype=int)), format="csr")
            right = sp.identity(int(np.prod(self.m[axis + 1:], dtype=int)), format="csr")
            self._diffs[key] = sp.kron(sp.kron(left, d1), right, format="csr")
        return self._diffs[key]

    def spec(self) -> dict:
        return {"n": self.n, "lo": list(self.lo), "hi": list(self.hi), "m": list(self.m)}

    @classmethod
    def from_spec(cls, spec: dict) -> "GridDomain":
        return cls(n=spec["n"], lo=tuple(spec["lo"]), hi=tuple(spec["hi"]), m=tuple(spec["m"]))


def _diff_1d(m: int, h: float, kind: str) -> sp.csr_matrix:
    rows, cols, vals = [], [], []

    def put(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    for k in range(m):
        if kind == "c" and 0 < k < m - 1:
            put(k, k - 1, -0.5 / h)
            put(k, k + 1, 0.5 / h)
        elif (kind == "b" and k > 0) or (kind != "b" and k == m - 1):
            put(k, k - 1, -1.0 / h)
            put(k, k, 1.0 / h)
        else:
            put(k, k, -1.0 / h)
            put(k, k + 1, 1.0 / h)
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, m))


class ScalarField:
    """Real values sampled at every lattice node of a :class:`GridDomain`."""

    __array_priority__ = 100

    def __init__(self, domain: GridDomain, values):
        values = np.array(values, dtype=float)
        if values.size == domain.size and values.shape != domain.shape:
            values = values.reshape(domain.shape)
        if values.shape != domain.shape:
            raise ValueError(f"values of shape {values.shape} do not fit grid {domain.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self.domain = domain
        self.values = values

    @classmethod
    def constant(cls, domain: GridDomain, c: float = 0.0) -> "ScalarField":
        return cls(domain, np.full(domain.shape, float(c)))

    @classmethod
    def from_function(cls, domain: GridDomain, func: Callable[..., np.ndarray]) -> "ScalarField":
        """Sample ``func(x_1, ..., x_2n)`` on the lattice."""
        values = np.broadcast_to(func(*domain.coords), domain.shape)
        return cls(domain, values)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    @property
    def interior(self) -> np.ndarray:
        return self.values[self.domain.interior_mask]

    @property
    def boundary(self) -> np.ndarray:
        return self.values[self.domain.boundary_mask]

    def copy(self) -> "ScalarField":
        return ScalarField(self.domain, self.values.copy())

    def with_boundary(self, other: "ScalarField") -> "ScalarField":
        """Copy of ``self`` whose boundary values are taken from ``other``."""
        _check_same(self, other)
        vals = self.values.copy()
        mask = self.domain.boundary_mask
        vals[mask] = other.values[mask]
        return ScalarField(self.domain, vals)

    def zero_boundary(self) -> "ScalarField":
        """Copy with boundary nodes set to 0 (a compactly supported test field)."""
        return ScalarField(self.domain, np.where(self.domain.interior_mask, self.values, 0.0))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def integral(self) -> float:
        return float(np.sum(self.domain.weights * self.values))

    def _coerce(self, other):
        if isinstance(other, ScalarField):
            _check_same(self, other)
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.domain, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.domain, self.values - self._coerce(other))

    def __rsub__(self, other):
        return ScalarField(self.domain, self._coerce(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.domain, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.domain, self.values / self._coerce(other))

    def __neg__(self):
        return ScalarField(self.domain, -self.values)

    def __repr__(self):
        return f"ScalarField(shape={self.domain.shape}, sup={self.sup():.3g})"


def _check_same(a: ScalarField, b: ScalarField):
    if a.domain != b.domain:
        raise DomainMismatchError("fields live on different grid domains")


@dataclass
class HorizontalGradient:
    """The intrinsic gradient, ``components[i - 1]`` holding ``X_i^u u``."""

    domain: GridDomain
    components: np.ndarray

    def __post_init__(self):
        k = 2 * self.domain.n - 1
        if self.components.shape != (k,) + self.domain.shape:
            raise ValueError(f"expected {k} components on grid {self.domain.shape}")

    def __getitem__(self, i: int) -> ScalarField:
        return ScalarField(self.domain, self.components[i - 1])

    def norm_squared(self) -> np.ndarray:
        return np.sum(self.components**2, axis=0)


def _check_index(domain: GridDomain, i: int):
    if not 1 <= i <= 2 * domain.n - 1:
        raise IndexError(f"field index must lie in 1..{2 * domain.n - 1}, got {i}")


def drift_coefficient(domain: GridDomain, i: int, u: ScalarField | None = None) -> np.ndarray | None:
    """Coefficient of ``d/dx_{2n}`` in field ``X_i^u`` (``None`` when absent)."""
    n = domain.n
    if i <= n - 1:
        return None
    if i <= 2 * n - 2:
        return -domain.coordinate(i - n + 1)
    if u is None:
        raise ValueError(f"field X_{i}^u needs the graph function u")
    return u.values


def field_matrix(domain: GridDomain, i: int, u: ScalarField | None = None,
                 upwind: bool = False) -> sp.csr_matrix:
    """Sparse matrix of the discrete field ``X_i^u`` acting on flattened values."""
    _check_index(domain, i)
    if u is not None and u.domain != domain:
        raise DomainMismatchError("u lives on a different grid domain")
    base = domain.diff(i - 1)
    coef = drift_coefficient(domain, i, u)
    if coef is None:
        return base
    c = coef.ravel()
    last = domain.dim - 1
    if upwind:
        drift = (sp.diags(np.maximum(c, 0.0)) @ domain.diff_upwind(last, -1)
                 + sp.diags(np.minimum(c, 0.0)) @ domain.diff_upwind(last, +1))
    else:
        drift = sp.diags(c) @ domain.diff(last)
    return (base + drift).tocsr()


def apply_field(i: int, w: ScalarField, u: ScalarField | None = None,
                upwind: bool = False) -> ScalarField:
    """Discrete directional derivative ``X_i^u w``.

    ``u`` is only consulted for ``i = 2n - 1`` and is frozen at the evaluation
    node.  ``upwind`` switches the ``d/dx_{2n}`` drift to a one-sided
    difference chosen by the sign of its coefficient.
    """
    domain = w.domain
    _check_index(domain, i)
    if u is not None and u.domain != domain:
        raise DomainMismatchError("w and u live on different grid domains")
    if upwind:
        return ScalarField(domain, field_matrix(domain, i, u, upwind=True) @ w.flat)
    out = domain.diff(i - 1) @ w.flat
    coef = drift_coefficient(domain, i, u)
    if coef is not None:
        out = out + coef.ravel() * (domain.diff(domain.dim - 1) @ w.flat)
    return ScalarField(domain, out)


def horizontal_gradient(u: ScalarField, upwind: bool = False) -> HorizontalGradient:
    domain = u.domain
    comps = np.stack([apply_field(i, u, u, upwind=upwind).values
                      for i in range(1, 2 * domain.n)])
    return HorizontalGradient(domain, comps)


def coefficients(p) -> np.ndarray:
    """``a_ij(p) = delta_ij - p_i p_j / (1 + |p|^2)``.

    ``p`` has the gradient index first: shape ``(k,)`` gives a ``(k, k)``
    matrix, shape ``(k, ...)`` gives ``(k, k, ...)`` nodewise blocks.
    """
    p = np.asarray(p, dtype=float)
    k = p.shape[0]
    eye = np.eye(k).reshape((k, k) + (1,) * (p.ndim - 1))
    denom = 1.0 + np.sum(p**2, axis=0)
    return eye - p[:, None] * p[None, :] / denom


def as_field(domain: GridDomain, value) -> ScalarField:
    """Promote a scalar, array or field to a :class:`ScalarField` on ``domain``."""
    if isinstance(value, ScalarField):
        if value.domain != domain:
            raise DomainMismatchError("field lives on a different grid domain")
        return value
    if value is None:
        return ScalarField.constant(domain, 0.0)
    if callable(value):
        return ScalarField.from_function(domain, value)
    return ScalarField(domain, np.broadcast_to(np.asarray(value, float), domain.shape))


def linear_function(coeffs: Sequence[float], offset: float = 0.0) -> Callable[..., np.ndarray]:
    """``x -> offset + sum_k coeffs[k] x_{k+1}`` as a coordinate function."""
    def fn(*x):
        out = np.full(np.shape(x[0]), float(offset))
        for c, xk in zip(coeffs, x):
            out = out + c * xk
        return out
    return fn
