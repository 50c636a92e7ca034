"""Lattice approximation of the control distance of the fields ``X_i^u``.

Each node is joined to the nodes reached by a short flow of ``+X_i^u`` or
``-X_i^u``: a step of ``hops`` cells along the field's own axis, with the
induced ``x_{2n}`` displacement snapped to the nearest node.  Shortest paths
(scipy's Dijkstra) give the approximate distance.  Edges leaving the box are
dropped, so distances are those of paths staying in the domain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .geometry import GridDomain, ScalarField, apply_field

DEFAULT_PAIR_BUDGET = 10_000
CHUNK = 256


class DegenerateFieldsError(ValueError):
    """The horizontal fields do not generate the missing direction."""


@dataclass
class LatticeGraph:
    domain: GridDomain
    matrix: sp.csr_matrix
    hops: int
    snap_error: float

    @property
    def step(self) -> float:
        """Largest edge weight (``sigma``)."""
        return float(self.matrix.data.max()) if self.matrix.nnz else 0.0


@dataclass
class DistanceField:
    domain: GridDomain
    source: int
    values: np.ndarray
    sigma: float
    snap_error: float

    def __getitem__(self, node) -> float:
        return float(self.values.reshape(self.domain.shape)[node] if isinstance(node, tuple)
                     else self.values[node])

    def as_field(self) -> ScalarField:
        """Distances as a field; unreachable nodes are not allowed here."""
        return ScalarField(self.domain, self.values.reshape(self.domain.shape))


def _field_axis(n: int, i: int) -> int:
    return i - 1 if i <= 2 * n - 2 else 2 * n - 2


def _vertical_rate(domain: GridDomain, i: int, u: ScalarField | None) -> np.ndarray | None:
    n = domain.n
    if i <= n - 1:
        return None
    if i <= 2 * n - 2:
        return -domain.coordinate(i - n + 1)
    return np.zeros(domain.shape) if u is None else u.values


def lattice_graph(u: ScalarField, hops: int = 1, symmetric: bool = True) -> LatticeGraph:
    """Graph of snapped ``+-X_i^u`` flows of lengths ``1..hops`` cells.

    With ``symmetric`` every flow step is also usable backwards (the
    continuous flows are reversible).  Without it the graph is directed and
    snapping with a non-constant ``u`` makes distances slightly asymmetric.
    """
    domain = u.domain
    n = domain.n
    if n < 2:
        raise DegenerateFieldsError(
            "for n = 1 a single horizontal field cannot reach the vertical direction; use n >= 2")
    shape = np.array(domain.shape)
    idx = np.indices(domain.shape).reshape(domain.dim, -1)
    flat = np.arange(domain.size)
    h = domain.h
    last = domain.dim - 1
    rows, cols, wts = [], [], []
    snap = 0.0
    for i in range(1, 2 * n):
        a = _field_axis(n, i)
        rate = _vertical_rate(domain, i, u)
        for k in range(1, hops + 1):
            sigma = k * h[a]
            for s in (1, -1):
                tgt = idx.copy()
                tgt[a] += s * k
                ok = (tgt[a] >= 0) & (tgt[a] < shape[a])
                if rate is not None:
                    dz = s * sigma * rate.ravel()
                    steps = np.rint(dz / h[last]).astype(np.int64)
                    tgt[last] += steps
                    ok &= (tgt[last] >= 0) & (tgt[last] < shape[last])
                    if np.any(ok):
                        snap = max(snap, float(np.max(np.abs(dz - steps * h[last])[ok])))
                dst = np.ravel_multi_index(tuple(np.where(ok, tgt, 0)), domain.shape)
                rows.append(flat[ok])
                cols.append(dst[ok])
                wts.append(np.full(int(ok.sum()), sigma))
    rows, cols, wts = map(np.concatenate, (rows, cols, wts))
    if symmetric:
        rows, cols, wts = np.concatenate([rows, cols]), np.concatenate([cols, rows]), np.tile(wts, 2)
    # parallel edges keep the shortest weight
    order = np.lexsort((wts, cols, rows))
    rows, cols, wts = rows[order], cols[order], wts[order]
    keep = np.ones(rows.size, bool)
    keep[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
    keep &= rows != cols
    mat = sp.csr_matrix((wts[keep], (rows[keep], cols[keep])), shape=(domain.size, domain.size))
    return LatticeGraph(domain, mat, hops, snap)


def _graph(u_or_graph, hops: int) -> LatticeGraph:
    if isinstance(u_or_graph, LatticeGraph):
        return u_or_graph
    return lattice_graph(u_or_graph, hops)


def node_index(domain: GridDomain, node) -> int:
    if isinstance(node, (tuple, list, np.ndarray)):
        return int(np.ravel_multi_index(tuple(int(c) for c in node), domain.shape))
    node = int(node)
    if not 0 <= node < domain.size:
        raise IndexError(f"node {node} outside the grid of {domain.size} nodes")
    return node


def center_node(domain: GridDomain) -> int:
    return node_index(domain, tuple(m // 2 for m in domain.shape))


def cc_distance(u, source, hops: int = 1) -> DistanceField:
    """Approximate ``d_u(source, .)`` at every node (``inf`` if unreachable)."""
    g = _graph(u, hops)
    src = node_index(g.domain, source)
    d = csgraph.dijkstra(g.matrix, directed=True, indices=src)
    return DistanceField(g.domain, src, d, g.step, g.snap_error)


def distance_matrix(u, sources, hops: int = 1) -> np.ndarray:
    g = _graph(u, hops)
    return csgraph.dijkstra(g.matrix, directed=True, indices=np.asarray(sources))


def boundary_distance(u, hops: int = 1) -> np.ndarray:
    """``min_b d_u(x, b)`` over boundary nodes ``b`` (0 on the boundary)."""
    g = _graph(u, hops)
    B = g.domain.boundary_index
    return csgraph.dijkstra(g.matrix.T.tocsr(), directed=True, indices=B, min_only=True)


def ball_volumes(u, source, radii, hops: int = 1) -> np.ndarray:
    """Cell volume times the number of nodes with ``d_u(source, .) <= r``."""
    df = cc_distance(u, source, hops)
    vol = df.domain.cell_volume
    # path lengths are sums of steps, so allow for round-off at r = k * sigma
    return np.array([np.count_nonzero(df.values <= r * (1 + 1e-9)) * vol for r in radii])


@dataclass
class VolumeFit:
    radii: np.ndarray
    volumes: np.ndarray
    slope: float
    raw_slope: float
    residual: float
    offset: float


def ball_volume_fit(u, source, radii, hops: int = 1, cell_correction: bool = True) -> VolumeFit:
    """Fit ``log V`` against ``log r`` for lattice balls around ``source``.

    Counting nodes overestimates the ball by the cells straddling its edge:
    ``2k + 1`` nodes lie within ``k`` steps on a line, which is the length of
    a segment of radius ``(k + 1/2) sigma``.  With ``cell_correction`` the fit
    uses ``r + sigma/2``; ``raw_slope`` is the uncorrected fit.
    """
    radii = np.asarray(radii, float)
    if radii.size < 4:
        raise ValueError("need at least 4 radii to fit a growth exponent")
    if np.any(radii <= 0):
        raise ValueError("radii must be positive")
    g = _graph(u, hops)
    vols = ball_volumes(g, source, radii)
    if np.any(vols <= 0):
        raise ValueError("a ball contains no nodes; increase the radii")
    sigma = float(np.min(g.domain.h[:-1]))
    offset = 0.5 * sigma if cell_correction else 0.0
    x = np.log(radii + offset)
    coef, res, *_ = np.polyfit(x, np.log(vols), 1, full=True)
    raw = float(np.polyfit(np.log(radii), np.log(vols), 1)[0])
    resid = float(np.sqrt(res[0] / radii.size)) if res.size else 0.0
    return VolumeFit(radii, vols, float(coef[0]), raw, resid, offset)


def ball_volume_exponent(u, source, radii, hops: int = 1, cell_correction: bool = True) -> float:
    """Least-squares growth exponent of lattice ball volumes (see :func:`ball_volume_fit`)."""
    return ball_volume_fit(u, source, radii, hops, cell_correction).slope


# --------------------------------------------------------------------------
# weighted Hoelder norms


def _check_alpha(alpha: float):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"Hoelder exponent must lie in (0, 1), got {alpha}")


def _pair_sources(domain: GridDomain, budget: int, seed: int) -> np.ndarray:
    if domain.size <= budget:
        return np.arange(domain.size)
    # stratified: one random node per block of consecutive node indices
    edges = np.linspace(0, domain.size, budget + 1).astype(int)
    rng = np.random.default_rng(seed)
    return np.array([rng.integers(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a])


def holder_seminorms(values: np.ndarray, alpha: float, u, hops: int = 1,
                     budget: int = DEFAULT_PAIR_BUDGET, seed: int = 0,
                     dist_to_boundary: np.ndarray | None = None) -> np.ndarray:
    """Weighted seminorms ``sup d_xy^a |f(x)-f(y)| / d(x,y)^a`` for stacked ``values``.

    ``values`` has shape ``(k, size)``; all ``k`` functions share one pass
    over the distance rows.  The supremum runs over all ordered pairs when
    the grid has at most ``budget`` nodes, otherwise over pairs whose first
    node is in a stratified random sample of ``budget`` nodes.
    """
    _check_alpha(alpha)
    g = _graph(u, hops)
    dom = g.domain
    vals = np.atleast_2d(np.asarray(values, float)).reshape(-1, dom.size)
    db = boundary_distance(g) if dist_to_boundary is None else dist_to_boundary
    sources = _pair_sources(dom, budget, seed)
    best = np.zeros(vals.shape[0])
    for start in range(0, sources.size, CHUNK):
        src = sources[start:start + CHUNK]
        D = csgraph.dijkstra(g.matrix, directed=True, indices=src)
        w = np.minimum(db[src][:, None], db[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            weight = np.where(np.isfinite(D) & (D > 0), (w / D) ** alpha, 0.0)
        for k in range(vals.shape[0]):
            diff = np.abs(vals[k][src][:, None] - vals[k][None, :])
            best[k] = max(best[k], float(np.max(weight * diff)))
    return best


def holder_norm(f: ScalarField, alpha: float, u, hops: int = 1,
                budget: int = DEFAULT_PAIR_BUDGET, seed: int = 0) -> float:
    """``sup |f| + [f]_{alpha, d}`` on the lattice."""
    _check_alpha(alpha)
    semi = holder_seminorms(f.flat, alpha, u, hops, budget, seed)[0]
    return float(np.max(np.abs(f.values)) + semi)


def _second_order_terms(f: ScalarField, u: ScalarField, db: np.ndarray):
    """Sup part of the C^{2,alpha} norm and the stacked fields ``d^2 X_i X_j f``."""
    k = 2 * f.domain.n - 1
    first = [apply_field(i, f, u) for i in range(1, k + 1)]
    total = float(np.max(np.abs(f.values)))
    total += sum(float(np.max(np.abs(db * Xf.flat))) for Xf in first)
    second = np.stack([db**2 * apply_field(i, first[j - 1], u).flat
                       for i in range(1, k + 1) for j in range(1, k + 1)])
    return total + float(np.sum(np.max(np.abs(second), axis=1))), second


def c2alpha_norm(f: ScalarField, alpha: float, u: ScalarField, hops: int = 1,
                 budget: int = DEFAULT_PAIR_BUDGET, seed: int = 0) -> float:
    """``sup |f| + sum_i sup d |X_i f| + sum_ij |d^2 X_i X_j f|_{alpha, d}``.

    ``d`` is the lattice distance to the boundary and the fields are the
    ``X_i^u`` of the graph ``u``.
    """
    _check_alpha(alpha)
    g = lattice_graph(u, hops)
    db = boundary_distance(g)
    sup_part, second = _second_order_terms(f, u, db)
    semi = holder_seminorms(second, alpha, g, budget=budget, seed=seed, dist_to_boundary=db)
    return float(sup_part + np.sum(semi))


def schauder_ratio(v: ScalarField, f: ScalarField, alpha: float, u: ScalarField, hops: int = 1,
                   budget: int = DEFAULT_PAIR_BUDGET, seed: int = 0) -> dict:
    """``|v|_{C^{2,a}_d} / (sup |v| + |d^2 f|_{a,d})`` for a solution of ``L_u v = f``."""
    _check_alpha(alpha)
    g = lattice_graph(u, hops)
    db = boundary_distance(g)
    sup_part, second = _second_order_terms(v, u, db)
    rhs = db**2 * f.flat
    semi = holder_seminorms(np.vstack([second, rhs[None]]), alpha, g, budget=budget,
                            seed=seed, dist_to_boundary=db)
    top = float(sup_part + np.sum(semi[:-1]))
    bottom = float(np.max(np.abs(v.values)) + np.max(np.abs(rhs)) + semi[-1])
    return {"numerator": top, "denominator": bottom, "ratio": top / bottom}
