"""Damped Newton solver for the minimal-graph Dirichlet problem.

Solves ``H_v = f`` at interior nodes with ``v = phi`` on the boundary, where
``H`` is the conservative curvature of :mod:`hgraph.variational`.  The Newton
matrix is the assembled stability operator ``L_u``, which is the exact
Jacobian of that curvature, so convergence is quadratic near a nondegenerate
solution.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import ScalarField, as_field
from .stability import (
    LinearSolveError,
    assemble_stability,
    first_eigenvalue,
    linear_solve,
    solve_linear_dirichlet,
)
from .variational import mean_curvature

log = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 30
    backtrack: float = 0.5
    min_step: float = 1e-4
    continuation_steps: int = 1
    linear_tol: float = 1e-10
    linear_solver: str = "auto"
    initial_guess: str = "harmonic"
    ordering: str = "natural"
    ordering_seed: int = 0
    compute_stability: bool = True

    def __post_init__(self):
        if not (self.tol > 0 and self.linear_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1 or self.continuation_steps < 1:
            raise ValueError("max_iter and continuation_steps must be at least 1")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtracking factor must lie in (0, 1)")
        if self.initial_guess not in ("harmonic", "zero"):
            raise ValueError(f"unknown initial guess policy {self.initial_guess!r}")
        if self.ordering not in ("natural", "reverse", "random"):
            raise ValueError(f"unknown ordering {self.ordering!r}")

    @classmethod
    def from_dict(cls, d: dict | None) -> "SolverConfig":
        return cls(**(d or {}))

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolveReport:
    converged: bool = False
    iterations: int = 0
    residuals: list = field(default_factory=list)
    damping: list = field(default_factory=list)
    linear_residuals: list = field(default_factory=list)
    levels: list = field(default_factory=list)
    lambda_sym: float | None = None
    strictly_stable: bool | None = None
    wall_time: float = 0.0
    message: str = ""
    last_iterate: ScalarField | None = field(default=None, repr=False)

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("nan")

    def quadratic_ratios(self, start_fraction: float = 1e-2) -> list:
        """``r_{k+1} / r_k^2`` once the residual is below ``start_fraction * r_0``."""
        r = self.residuals
        if not r:
            return []
        out = []
        for a, b in zip(r, r[1:]):
            if a < start_fraction * r[0] and a > 0:
                out.append(b / a**2)
        return out

    def as_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "last_iterate"}
        d["final_residual"] = self.final_residual
        return d


def _ordering(cfg: SolverConfig, size: int):
    if cfg.ordering == "natural":
        return None
    if cfg.ordering == "reverse":
        return np.arange(size)[::-1]
    return np.random.default_rng(cfg.ordering_seed).permutation(size)


def _residual(u: ScalarField, f: ScalarField) -> np.ndarray:
    return (mean_curvature(u).values - f.values)[u.domain.interior_mask]


def _newton(u: ScalarField, f: ScalarField, cfg: SolverConfig, report: SolveReport) -> ScalarField | None:
    """Newton iterations with fixed boundary values; mutates ``report``."""
    domain = u.domain
    I = domain.interior_index
    r = _residual(u, f)
    rn = float(np.max(np.abs(r))) if r.size else 0.0
    report.residuals.append(rn)
    perm = _ordering(cfg, I.size)
    for _ in range(cfg.max_iter):
        if rn <= cfg.tol:
            return u
        op = assemble_stability(u)
        try:
            delta, rel = linear_solve(op.matrix, -r, method=cfg.linear_solver,
                                      tol=cfg.linear_tol, permutation=perm)
        except LinearSolveError as exc:
            report.message = f"linear solve breakdown: {exc}"
            return None
        report.linear_residuals.append(rel)
        if rel > max(cfg.linear_tol, 1e-8) * 10:
            report.message = f"linear solve breakdown: relative residual {rel:.2e}"
            return None
        step = np.zeros(domain.size)
        step[I] = delta
        t = 1.0
        while True:
            trial = ScalarField(domain, u.flat + t * step)
            r_try = _residual(trial, f)
            rn_try = float(np.max(np.abs(r_try)))
            if np.isfinite(rn_try) and rn_try <= (1.0 - 1e-4 * t) * rn:
                break
            t *= cfg.backtrack
            if t < cfg.min_step:
                report.message = (f"damping underflow: no decrease of residual {rn:.3e} "
                                  f"for steps down to {cfg.min_step:g}")
                report.last_iterate = u
                return None
        u, r, rn = trial, r_try, rn_try
        report.iterations += 1
        report.damping.append(t)
        report.residuals.append(rn)
        log.debug("newton step %d: residual %.3e, damping %.3g", report.iterations, rn, t)
    if rn <= cfg.tol:
        return u
    report.message = f"no convergence in {cfg.max_iter} Newton steps (residual {rn:.3e})"
    report.last_iterate = u
    return None


def _continuation(u_start: ScalarField, target: ScalarField, f: ScalarField,
                  cfg: SolverConfig) -> tuple[ScalarField | None, SolveReport]:
    t0 = time.perf_counter()
    report = SolveReport()
    domain = u_start.domain
    u = u_start
    base = u_start.copy()
    K = cfg.continuation_steps
    for level in range(1, K + 1):
        frac = level / K
        bdry = base + frac * (target - base)
        jump = (bdry - u).values * domain.boundary_mask
        if cfg.initial_guess == "harmonic" and np.any(jump):
            # tangent predictor: L_u w = 0 inside, w = jump of the boundary data
            w = solve_linear_dirichlet(assemble_stability(u), 0.0, ScalarField(domain, jump))
            u = u + w
        u = u.with_boundary(bdry)
        report.levels.append(frac)
        u_new = _newton(u, f, cfg, report)
        if u_new is None:
            report.message = f"continuation level {level}/{K}: {report.message}"
            if report.last_iterate is None:
                report.last_iterate = u
            report.wall_time = time.perf_counter() - t0
            return None, report
        u = u_new
    report.converged = True
    report.message = "converged"
    if cfg.compute_stability:
        spec = first_eigenvalue(u)
        report.lambda_sym = spec.lambda_sym
        report.strictly_stable = spec.strictly_stable
    report.wall_time = time.perf_counter() - t0
    return u, report


def solve_dirichlet(phi: ScalarField, f=None, cfg: SolverConfig | None = None,
                    initial: ScalarField | None = None) -> tuple[ScalarField | None, SolveReport]:
    """Minimal (``f = 0``) or prescribed-curvature graph with boundary trace ``phi``.

    Only the boundary values of ``phi`` are read.  They are ramped from the
    trace of ``initial`` (default 0) in ``cfg.continuation_steps`` levels.
    With ``initial_guess="harmonic"`` each level is predicted by the
    ``L_u``-harmonic extension of the boundary increment, which at the first
    level from ``u = 0`` is the ``L_0``-harmonic extension of ``phi``.

    Returns ``(u, report)``; ``u`` is ``None`` whenever the report is not
    converged, the last iterate is then kept in ``report.last_iterate``.
    """
    cfg = cfg or SolverConfig()
    if not np.all(np.isfinite(phi.boundary)):
        raise ValueError("boundary data must be finite")
    f = as_field(phi.domain, f)
    start = initial if initial is not None else ScalarField.constant(phi.domain, 0.0)
    return _continuation(start, phi, f, cfg)


def solve_perturbed(u0: ScalarField, phi: ScalarField, cfg: SolverConfig | None = None, f=None
                    ) -> tuple[ScalarField | None, SolveReport]:
    """Newton continuation from a solution ``u0`` towards new boundary data ``phi``."""
    return solve_dirichlet(phi, f=f, cfg=cfg, initial=u0)


def measure_basin(shape: ScalarField, cfg: SolverConfig | None = None, hi: float = 1.0,
                  bisections: int = 8) -> dict:
    """Bisect the largest amplitude ``a`` for which ``a * shape`` is solvable.

    ``shape`` is rescaled to unit sup-norm on the boundary.  Returns the
    bracket and the per-amplitude outcomes.
    """
    cfg = cfg or SolverConfig()
    cfg = SolverConfig(**{**cfg.as_dict(), "compute_stability": False})
    norm = float(np.max(np.abs(shape.boundary)))
    if norm == 0.0:
        raise ValueError("boundary shape must be nonzero")
    unit = shape / norm
    trials = {}

    def ok(a):
        u, rep = solve_dirichlet(a * unit, cfg=cfg)
        trials[a] = rep.converged
        return rep.converged

    lo = 0.0
    if ok(hi):
        return {"solvable_amplitude": hi, "bracket": [hi, None], "trials": trials}
    for _ in range(bisections):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return {"solvable_amplitude": lo, "bracket": [lo, hi], "trials": trials}
