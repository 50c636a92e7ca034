"""Reusable cross-checks and random test corpora.

These are the comparisons run by ``hgraph verify`` and by the acceptance
suite: analytic derivatives against finite differences of the area,
divergence against non-divergence curvature, sparse against dense spectra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import GridDomain, ScalarField
from .oracle import fd_first_variation, fd_second_variation
from .stability import first_eigenvalue, index_form
from .variational import mean_curvature, mean_curvature_nondiv, area_density, weak_residual

# grids of the variation corpus, by n
CORPUS_GRIDS = {1: 33, 2: 9}


def random_smooth_field(domain: GridDomain, seed: int, amplitude: float = 1.0,
                        modes: int = 2, terms: int = 5) -> ScalarField:
    """Seeded sum of low-frequency cosine products with sup-norm ``amplitude``."""
    rng = np.random.default_rng(seed)
    ts = [(c - domain.lo[k]) / (domain.hi[k] - domain.lo[k]) for k, c in enumerate(domain.coords)]
    out = np.full(domain.shape, rng.normal())
    for _ in range(terms):
        term = rng.normal()
        for t in ts:
            term = term * np.cos(np.pi * rng.integers(0, modes + 1) * t + rng.uniform(0, 2 * np.pi))
        out = out + term
    peak = np.max(np.abs(out))
    return ScalarField(domain, amplitude * out / peak)


def random_test_field(domain: GridDomain, seed: int, modes: int = 2) -> ScalarField:
    """Seeded smooth field vanishing on the boundary, sup-norm 1."""
    rng = np.random.default_rng(seed)
    ts = [(c - domain.lo[k]) / (domain.hi[k] - domain.lo[k]) for k, c in enumerate(domain.coords)]
    out = np.zeros(domain.shape)
    for _ in range(3):
        term = rng.normal()
        for t in ts:
            term = term * np.sin(np.pi * rng.integers(1, modes + 1) * t)
        out = out + term
    out[domain.boundary_mask] = 0.0
    peak = np.max(np.abs(out))
    return ScalarField(domain, out / peak if peak > 0 else out)


def variation_corpus(count: int = 20, seed: int = 0, amplitude: float = 0.5):
    """``count`` random ``(u, v)`` pairs alternating between ``n = 1`` and ``n = 2``."""
    pairs = []
    for j in range(count):
        n = 1 + j % 2
        domain = GridDomain.box(n, CORPUS_GRIDS[n])
        u = random_smooth_field(domain, seed + 1000 * j, amplitude)
        v = random_test_field(domain, seed + 1000 * j + 1)
        pairs.append((u, v))
    return pairs


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


@dataclass
class VariationCheck:
    n: int
    analytic: float
    fd: float
    relative_error: float
    contaminated: bool


def first_variation_check(u: ScalarField, v: ScalarField) -> VariationCheck:
    analytic = weak_residual(u, v, 0.0)
    rep = fd_first_variation(u, v, analytic=analytic)
    return VariationCheck(u.domain.n, analytic, rep.extrapolated,
                          _rel(analytic, rep.extrapolated), rep.contaminated)


def second_variation_check(u: ScalarField, v: ScalarField) -> VariationCheck:
    analytic = index_form(u, v)
    rep = fd_second_variation(u, v, analytic=analytic)
    return VariationCheck(u.domain.n, analytic, rep.extrapolated,
                          _rel(analytic, rep.extrapolated), rep.contaminated)


def identity_defect(u: ScalarField) -> float:
    """Max interior ``|M_u - sqrt(1 + |grad u|^2) H_u|`` (collocated ``H``)."""
    H = mean_curvature(u, scheme="collocated").values
    M = mean_curvature_nondiv(u).values
    gap = np.abs(M - area_density(u) * H)
    return float(np.max(gap[u.domain.interior_mask]))


def observed_orders(hs, errors) -> list[float]:
    hs, errors = np.asarray(hs, float), np.asarray(errors, float)
    return [float(np.log(errors[k] / errors[k + 1]) / np.log(hs[k] / hs[k + 1]))
            for k in range(len(hs) - 1)]


def identity_refinement(func, n: int, ms, lo=0.0, hi=1.0) -> dict:
    """Identity defect of a fixed smooth ``u`` on a refinement sequence."""
    hs, errs = [], []
    for m in ms:
        domain = GridDomain.box(n, m, lo, hi)
        errs.append(identity_defect(ScalarField.from_function(domain, func)))
        hs.append(float(np.max(domain.h)))
    return {"m": list(ms), "h": hs, "defect": errs, "orders": observed_orders(hs, errs)}


def eigen_crosscheck(u: ScalarField) -> dict:
    """First index-form eigenvalue by the dense and by the sparse route."""
    dense = first_eigenvalue(u, method="dense")
    sparse = first_eigenvalue(u, method="shift-invert")
    return {"dense": dense.lambda_sym, "shift_invert": sparse.lambda_sym,
            "difference": abs(dense.lambda_sym - sparse.lambda_sym),
            "lambda_op_dense": dense.lambda_op, "lambda_op_sparse": sparse.lambda_op}
