"""Foliations by vertically shifted minimal graphs and area comparison.

Around a strictly stable minimal graph ``u`` the solutions ``u_eps`` with
boundary data ``u + eps`` are ordered in ``eps`` and fill a neighborhood of
the graph.  Competitor graphs inside that neighborhood with the same trace
are compared with ``u`` by discrete area.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import ScalarField
from .solver import SolverConfig, solve_perturbed
from .stability import first_eigenvalue, solve_linear_dirichlet
from .variational import area, interior_sup, mean_curvature

log = logging.getLogger(__name__)


class NotStrictlyStableError(ValueError):
    pass


class LeafSolveError(RuntimeError):
    pass


@dataclass
class Foliation:
    base: ScalarField
    eps: np.ndarray
    leaves: list
    derivative: ScalarField
    residuals: list
    requested_eps_max: float
    shrink_log: list = field(default_factory=list)
    lambda_sym: float | None = None

    @property
    def eps_max(self) -> float:
        return float(np.max(np.abs(self.eps)))

    @property
    def lower(self) -> np.ndarray:
        return np.min([l.values for l in self.leaves], axis=0)

    @property
    def upper(self) -> np.ndarray:
        return np.max([l.values for l in self.leaves], axis=0)

    def gaps(self) -> np.ndarray:
        """Smallest interior gap between each pair of adjacent leaves."""
        mask = self.base.domain.interior_mask
        return np.array([np.min((b.values - a.values)[mask])
                         for a, b in zip(self.leaves, self.leaves[1:])])

    @property
    def ordered(self) -> bool:
        return bool(np.all(self.gaps() > 0))

    @property
    def derivative_positive(self) -> bool:
        return float(np.min(self.derivative.values)) > 0

    def containment_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Band used for competitors: the leaves one step inside the extreme ones."""
        if len(self.leaves) >= 4:
            return self.leaves[1].values, self.leaves[-2].values
        return self.lower, self.upper

    def summary(self) -> dict:
        return {
            "eps": self.eps.tolist(),
            "requested_eps_max": self.requested_eps_max,
            "shrink_log": list(self.shrink_log),
            "ordered": self.ordered,
            "min_gap": float(np.min(self.gaps())),
            "max_residual": float(max(self.residuals)),
            "inf_derivative": float(np.min(self.derivative.values)),
            "lambda_sym": self.lambda_sym,
        }


def _leaves(u: ScalarField, eps: np.ndarray, cfg: SolverConfig):
    leaves, residuals = [], []
    for e in eps:
        if e == 0.0:
            leaves.append(u)
            residuals.append(interior_sup(mean_curvature(u)))
            continue
        ue, rep = solve_perturbed(u, u + float(e), cfg)
        if ue is None:
            raise LeafSolveError(f"leaf eps={e:g}: {rep.message}")
        leaves.append(ue)
        residuals.append(rep.final_residual)
    return leaves, residuals


def build_foliation(u: ScalarField, eps_max: float = 0.05, k: int = 5,
                    cfg: SolverConfig | None = None, max_shrinks: int = 4,
                    eps: np.ndarray | None = None) -> Foliation:
    """Solve for the leaves ``u_eps`` with boundary data ``u + eps``.

    ``eps`` defaults to ``linspace(-eps_max, eps_max, k)``.  If a leaf solve
    fails or adjacent leaves are not strictly ordered, the grid is halved (at
    most ``max_shrinks`` times) and the event is kept in ``shrink_log``.
    """
    cfg = cfg or SolverConfig()
    cfg = SolverConfig(**{**cfg.as_dict(), "compute_stability": False})
    spectral = first_eigenvalue(u)
    if not spectral.strictly_stable:
        raise NotStrictlyStableError(
            f"base graph is not strictly stable (lambda_sym={spectral.lambda_sym:.3e})")
    grid = np.sort(np.asarray(eps, float)) if eps is not None else np.linspace(-eps_max, eps_max, k)
    requested = float(np.max(np.abs(grid)))
    shrink_log = []
    v = solve_linear_dirichlet(u, 0.0, 1.0)
    for attempt in range(max_shrinks + 1):
        try:
            leaves, residuals = _leaves(u, grid, cfg)
        except LeafSolveError as exc:
            reason = str(exc)
        else:
            fol = Foliation(u, grid, leaves, v, residuals, requested, shrink_log, spectral.lambda_sym)
            if fol.ordered:
                return fol
            reason = f"leaves not strictly ordered (min gap {np.min(fol.gaps()):.3e})"
        if attempt == max_shrinks:
            raise LeafSolveError(f"no valid foliation after {max_shrinks} shrinks: {reason}")
        shrink_log.append({"eps_max": float(np.max(np.abs(grid))), "reason": reason})
        log.info("shrinking foliation amplitude: %s", reason)
        grid = grid / 2
    raise AssertionError("unreachable")


def difference_quotient_errors(u: ScalarField, eps_values, cfg: SolverConfig | None = None) -> dict:
    """Max-norm distance between ``(u_eps - u)/eps`` and the ``L_u``-harmonic ``v``."""
    cfg = cfg or SolverConfig(compute_stability=False)
    v = solve_linear_dirichlet(u, 0.0, 1.0)
    errors = []
    for e in eps_values:
        ue, rep = solve_perturbed(u, u + float(e), cfg)
        if ue is None:
            raise LeafSolveError(f"leaf eps={e:g}: {rep.message}")
        errors.append(float(np.max(np.abs((ue.values - u.values) / e - v.values))))
    eps_values = np.asarray(eps_values, float)
    errors = np.asarray(errors)
    rate = float(np.polyfit(np.log(eps_values), np.log(errors), 1)[0]) if np.all(errors > 0) else float("inf")
    return {"eps": eps_values.tolist(), "errors": errors.tolist(), "rate": rate,
            "inf_v": float(np.min(v.values))}


# --------------------------------------------------------------------------
# competitors


@dataclass
class Competitor:
    field: ScalarField
    seed: int | None
    amplitude: float
    profile: str
    contained: bool | None = None


def bump_profile(domain) -> np.ndarray:
    """Product of per-axis ``(1 - cos(2 pi t)) / 2`` bumps, 1 at the centre."""
    out = np.ones(domain.shape)
    for k, c in enumerate(domain.coords):
        t = (c - domain.lo[k]) / (domain.hi[k] - domain.lo[k])
        out = out * 0.5 * (1.0 - np.cos(2 * np.pi * t))
    return out


def random_profile(domain, seed: int, modes: int = 3, terms: int = 6) -> np.ndarray:
    """Seeded sum of low-frequency sine products, scaled to sup-norm 1."""
    rng = np.random.default_rng(seed)
    out = np.zeros(domain.shape)
    ts = [(c - domain.lo[k]) / (domain.hi[k] - domain.lo[k]) for k, c in enumerate(domain.coords)]
    for _ in range(terms):
        freqs = rng.integers(1, modes + 1, size=domain.dim)
        term = rng.normal()
        for t, q in zip(ts, freqs):
            term = term * np.sin(np.pi * q * t)
        out += term
    out[domain.boundary_mask] = 0.0
    peak = np.max(np.abs(out))
    return out / peak if peak > 0 else out


def generate_competitor(u: ScalarField, seed: int | None = None, amplitude: float = 0.01,
                        profile: str = "random", foliation: Foliation | None = None) -> Competitor:
    """``w = u + amplitude * eta`` with ``eta`` vanishing on the boundary."""
    domain = u.domain
    if profile == "bump":
        eta = bump_profile(domain)
    elif profile == "random":
        eta = random_profile(domain, 0 if seed is None else seed)
    else:
        raise ValueError(f"unknown competitor profile {profile!r}")
    eta[domain.boundary_mask] = 0.0
    w = ScalarField(domain, u.values + amplitude * eta)
    comp = Competitor(w, seed, amplitude, profile)
    if foliation is not None:
        comp.contained = is_contained(comp, foliation)
    return comp


def is_contained(comp: Competitor, foliation: Foliation) -> bool:
    lo, hi = foliation.containment_bounds()
    mask = foliation.base.domain.interior_mask
    w = comp.field.values
    return bool(np.all(w[mask] >= lo[mask]) and np.all(w[mask] <= hi[mask]))


def quadrature_tolerance(domain) -> float:
    return 10.0 * float(np.max(domain.h)) ** 2 * domain.measure


@dataclass
class CalibrationResult:
    delta_area: float
    verdict: str
    tol_quadrature: float
    sup_difference: float
    strict: bool | None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def calibration_compare(u: ScalarField, foliation: Foliation | None, competitor: Competitor
                        ) -> CalibrationResult:
    """Compare ``area(w)`` with ``area(u)``.

    ``verdict`` is ``"pass"`` when ``delta_area >= -tol_quadrature`` and the
    strict inequality holds whenever ``|w - u|_inf`` exceeds the grid
    tolerance ``10 h^2``; ``"inapplicable"`` when ``w`` leaves the foliated band.
    """
    domain = u.domain
    tol = quadrature_tolerance(domain)
    if np.any(competitor.field.boundary != u.boundary):
        raise ValueError("competitor must share the boundary trace of u")
    d_area = area(competitor.field).value - area(u).value
    sup = float(np.max(np.abs(competitor.field.values - u.values)))
    if foliation is not None:
        contained = is_contained(competitor, foliation)
        competitor.contained = contained
        if not contained:
            return CalibrationResult(d_area, "inapplicable", tol, sup, None)
    grid_tol = 10.0 * float(np.max(domain.h)) ** 2
    strict = d_area > 0 if sup > grid_tol else None
    ok = d_area >= -tol and strict is not False
    return CalibrationResult(d_area, "pass" if ok else "fail", tol, sup, strict)


def amplitude_halving_ratio(u: ScalarField, amplitude: float, profile: str = "bump",
                            seed: int | None = None) -> float:
    """``dA(a) / dA(a/2)`` for competitors ``u + a * eta``; about 4 near a strict minimum."""
    a1 = calibration_compare(u, None, generate_competitor(u, seed, amplitude, profile)).delta_area
    a2 = calibration_compare(u, None, generate_competitor(u, seed, amplitude / 2, profile)).delta_area
    return a1 / a2
