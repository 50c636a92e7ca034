"""Command-line front end: ``hgraph <command> [--config case.json] [flags]``.

Every run appends one line to ``<out>/manifest.jsonl`` and writes its fields
next to it.  Exit codes: 0 success, 1 a verdict failed, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
import sympy

from . import __version__
from .checks import (
    eigen_crosscheck,
    first_variation_check,
    identity_refinement,
    random_smooth_field,
    second_variation_check,
    variation_corpus,
)
from .foliation import (
    LeafSolveError,
    NotStrictlyStableError,
    build_foliation,
    calibration_compare,
    generate_competitor,
    quadrature_tolerance,
)
from .geometry import GridDomain, ScalarField
from .io import NODE_ORDER, RunManifest, append_manifest, export_field, import_field, to_jsonable
from .metric import DegenerateFieldsError, ball_volume_fit, center_node, holder_norm, node_index
from .solver import SolverConfig, measure_basin, solve_dirichlet
from .stability import check_maximum_principle, first_eigenvalue
from .variational import area, interior_sup, mean_curvature, mean_curvature_nondiv, prescribed_functional

log = logging.getLogger("hgraph")

COMMANDS = {
    "area": "intrinsic area (and prescribed-curvature functional) of u",
    "curvature": "conservative, collocated and non-divergence mean curvature of u",
    "solve": "Dirichlet problem H = f, u = phi by damped Newton",
    "stability": "first eigenvalue of the index form and maximum principle check",
    "foliate": "foliation by solutions with shifted boundary data",
    "calibrate": "area comparison against random competitors",
    "metric": "ball-volume growth exponent of the control distance",
    "verify": "oracle cross-checks (variation, identity, stability)",
}

CONVENTIONS = {
    "curvature": "H = -(d area / d u) / weight at interior nodes; minimal graphs solve H = 0",
    "solver_equation": "H_u = f in the interior, u = phi on the boundary",
    "index_form": "I(v, v) = -<v, L_u v> = second derivative of the discrete area",
    "node_order": NODE_ORDER,
}


class ConfigError(ValueError):
    """Invalid or unreadable run configuration."""


# --------------------------------------------------------------------------
# configuration


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    cfg["_base"] = str(Path(path).resolve().parent)
    return cfg


def _parse_grid(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be comma-separated integers, got {text!r}")


def _domain(cfg: dict) -> GridDomain:
    n = cfg.get("n", 2)
    grid = cfg.get("grid", 9)
    if isinstance(grid, list) and len(grid) not in (1, 2 * n):
        raise ConfigError(f"grid has {len(grid)} entries but n={n} needs {2 * n}")
    try:
        return GridDomain(n, cfg.get("lo", 0.0), cfg.get("hi", 1.0), grid)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid grid specification: {exc}") from exc


def _field(spec, domain: GridDomain, cfg: dict, seed: int, what: str) -> ScalarField:
    """Build a field from a number, an expression in x1..x2n, a file or a random recipe."""
    if spec is None:
        return ScalarField.constant(domain, 0.0)
    if isinstance(spec, (int, float)):
        return ScalarField.constant(domain, float(spec))
    if isinstance(spec, str):
        xs = sympy.symbols(" ".join(f"x{k}" for k in range(1, domain.dim + 1)))
        try:
            expr = sympy.sympify(spec, locals={str(x): x for x in xs})
        except (sympy.SympifyError, SyntaxError, TypeError) as exc:
            raise ConfigError(f"{what}: cannot parse expression {spec!r}") from exc
        extra = expr.free_symbols - set(xs)
        if extra:
            raise ConfigError(f"{what}: unknown symbols {sorted(map(str, extra))} in {spec!r}")
        fn = sympy.lambdify(xs, expr, "numpy")
        vals = np.broadcast_to(np.asarray(fn(*domain.coords), float), domain.shape)
        if not np.all(np.isfinite(vals)):
            raise ConfigError(f"{what}: expression {spec!r} is not finite on the grid")
        return ScalarField(domain, np.array(vals))
    if isinstance(spec, dict) and "file" in spec:
        path = Path(cfg.get("_base", ".")) / spec["file"]
        try:
            f = import_field(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"{what}: cannot import field from {path}: {exc}") from exc
        if f.domain != domain:
            raise ConfigError(f"{what}: field file {path} lives on a different grid")
        return f
    if isinstance(spec, dict) and "random" in spec:
        r = spec["random"] or {}
        return random_smooth_field(domain, seed, r.get("amplitude", 0.05), r.get("modes", 2))
    raise ConfigError(f"{what}: unsupported field specification {spec!r}")


def _solver_config(cfg: dict, tol: float | None) -> SolverConfig:
    d = dict(cfg.get("solver", {}))
    if tol is not None:
        d["tol"] = tol
    try:
        return SolverConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid solver settings: {exc}") from exc


# --------------------------------------------------------------------------
# commands; each returns (verdicts, extra manifest fields)


class Run:
    def __init__(self, args, cfg: dict):
        self.args = args
        self.cfg = cfg
        self.out = Path(args.out)
        self.seed = cfg.get("seed", 0)
        self.fmt = cfg.get("format", "json")
        self.outputs: list[str] = []
        self.extra: dict = {}
        self.tolerances: dict = {}
        self._domain = None

    @property
    def domain(self) -> GridDomain:
        if self._domain is None:
            self._domain = _domain(self.cfg)
        return self._domain

    def field(self, key: str) -> ScalarField:
        return _field(self.cfg.get(key), self.domain, self.cfg, self.seed, key)

    def export(self, f: ScalarField, name: str):
        self.out.mkdir(parents=True, exist_ok=True)
        fmts = ("csv", "json") if self.fmt == "both" else (self.fmt,)
        for fmt in fmts:
            p = export_field(f, self.out / f"{name}.{fmt}", fmt, name)
            self.outputs.append(p.name)

    def solver_cfg(self) -> SolverConfig:
        cfg = _solver_config(self.cfg, self.args.tol)
        self.tolerances["solver_residual"] = cfg.tol
        return cfg

    def base_solution(self) -> ScalarField:
        """The graph ``u`` from the config, or the solution for ``phi``."""
        if "u" in self.cfg:
            return self.field("u")
        u, rep = solve_dirichlet(self.field("phi"), self.field("f"), self.solver_cfg())
        self.extra["base_solve"] = rep.as_dict()
        if u is None:
            raise SolveFailed(rep.message)
        return u


class SolveFailed(RuntimeError):
    pass


def cmd_area(run: Run):
    u = run.field("u")
    res = {"area": area(u).value}
    if "f" in run.cfg:
        res["prescribed_functional"] = prescribed_functional(u, run.field("f")).value
    print(json.dumps(res, sort_keys=True))
    return {}, res


def cmd_curvature(run: Run):
    u = run.field("u")
    H = mean_curvature(u)
    Hc = mean_curvature(u, scheme="collocated")
    M = mean_curvature_nondiv(u)
    run.export(H, "curvature")
    res = {"sup_H": interior_sup(H), "sup_H_collocated": interior_sup(Hc),
           "sup_M": interior_sup(M), "scheme_gap": interior_sup(H - Hc)}
    print(json.dumps(res, sort_keys=True))
    return {}, res


def cmd_solve(run: Run):
    cfg = run.solver_cfg()
    u, rep = solve_dirichlet(run.field("phi"), run.field("f"), cfg)
    res = {"report": rep.as_dict()}
    verdicts = {"converged": rep.converged, "final_residual": rep.final_residual}
    if u is not None:
        run.export(u, "solution")
        verdicts["strictly_stable"] = rep.strictly_stable
        verdicts["lambda_sym"] = rep.lambda_sym
    elif rep.last_iterate is not None:
        run.export(rep.last_iterate, "last_iterate")
    if run.args.basin:
        run.extra["basin"] = measure_basin(run.field("phi"), cfg)
    print(f"converged={rep.converged} iterations={rep.iterations} residual={rep.final_residual:.3e}"
          + ("" if rep.lambda_sym is None else f" lambda_sym={rep.lambda_sym:.6g}")
          + ("" if rep.converged else f" ({rep.message})"))
    return verdicts, res


def cmd_stability(run: Run):
    u = run.base_solution()
    spec = first_eigenvalue(u, method=run.cfg.get("stability", {}).get("method", "auto"))
    mp = check_maximum_principle(u, spectral=spec)
    run.export(spec.eigenfunction, "eigenfunction")
    verdicts = {"strictly_stable": spec.strictly_stable, "lambda_sym": spec.lambda_sym,
                "lambda_op": spec.lambda_op, "maximum_principle": mp.verdict}
    run.tolerances["stability_threshold"] = spec.threshold
    print(f"lambda_sym={spec.lambda_sym:.10g} lambda_op={spec.lambda_op:.10g} "
          f"method={spec.method} strictly_stable={spec.strictly_stable}")
    return verdicts, {"method": spec.method, "residual": spec.residual}


def _foliation(run: Run, u: ScalarField):
    fc = run.cfg.get("foliation", {})
    return build_foliation(u, fc.get("eps_max", 0.05), fc.get("k", 5), run.solver_cfg())


def cmd_foliate(run: Run):
    u = run.base_solution()
    fol = _foliation(run, u)
    run.export(fol.derivative, "derivative")
    s = fol.summary()
    verdicts = {"ordered": s["ordered"], "derivative_positive": fol.derivative_positive,
                "eps_max": s["eps"][-1]}
    print(f"ordered={s['ordered']} eps_max={fol.eps_max:g} min_gap={s['min_gap']:.3e} "
          f"inf_v={s['inf_derivative']:.6f}")
    return verdicts, s


def cmd_calibrate(run: Run):
    u = run.base_solution()
    fol = _foliation(run, u)
    cc = run.cfg.get("calibration", {})
    seeds = run.args.seeds if run.args.seeds is not None else cc.get("seeds", 100)
    amplitude = cc.get("amplitude", 0.2 * fol.eps_max)
    profile = cc.get("profile", "random")
    counts = {"pass": 0, "fail": 0, "inapplicable": 0}
    min_delta = np.inf
    for s in range(seeds):
        comp = generate_competitor(u, run.seed + s, amplitude, profile, fol)
        r = calibration_compare(u, fol, comp)
        counts[r.verdict] += 1
        if r.verdict != "inapplicable":
            min_delta = min(min_delta, r.delta_area)
    run.tolerances["quadrature"] = quadrature_tolerance(u.domain)
    verdicts = {"seeds": seeds, **counts, "all_pass": counts["pass"] == seeds,
                "min_delta_area": min_delta}
    print(f"{counts['pass']}/{seeds} PASS ({counts['inapplicable']} inapplicable, "
          f"{counts['fail']} fail), min dA={min_delta:.3e}")
    return verdicts, {"foliation": fol.summary(), "amplitude": amplitude}


def cmd_metric(run: Run):
    mc = run.cfg.get("metric", {})
    u = run.field("u")
    src = mc.get("source", "center")
    source = center_node(u.domain) if src == "center" else node_index(u.domain, src)
    hmin = float(np.min(u.domain.h[:-1]))
    radii = mc.get("radii") or list(hmin * np.arange(4, 11))
    fit = ball_volume_fit(u, source, radii, mc.get("hops", 1))
    target = 2 * u.domain.n + 1
    verdicts = {"slope": fit.slope, "homogeneous_dimension": target,
                "slope_ok": abs(fit.slope - target) <= 0.5}
    res = {"raw_slope": fit.raw_slope, "fit_residual": fit.residual,
           "volumes": fit.volumes.tolist(), "radii": list(map(float, radii))}
    if "holder" in mc:
        res["holder_norm"] = holder_norm(u, mc["holder"].get("alpha", 0.5), u)
    print(f"ball volume slope={fit.slope:.4f} (raw {fit.raw_slope:.4f}), target {target}")
    return verdicts, res


def cmd_verify(run: Run):
    suite = run.args.suite or run.cfg.get("suite", "variation")
    vc = run.cfg.get("verify", {})
    verdicts, res = {}, {}
    if suite in ("variation", "all"):
        pairs = variation_corpus(vc.get("pairs", 20), run.seed)
        first = [first_variation_check(u, v) for u, v in pairs]
        second = [second_variation_check(u, v) for u, v in pairs]
        e1 = max(c.relative_error for c in first)
        e2 = max(c.relative_error for c in second)
        verdicts.update(first_variation=e1 <= 1e-6, second_variation=e2 <= 1e-5)
        res.update(first_variation_max_rel=e1, second_variation_max_rel=e2)
        run.tolerances.update(first_variation=1e-6, second_variation=1e-5)
        print(f"first variation: max rel {e1:.2e}; second variation: max rel {e2:.2e}")
    if suite in ("identity", "all"):
        ref = identity_refinement(lambda x1, x2: 0.4 * np.sin(x1 + 2 * x2) + 0.3 * x1 * x2**2,
                                  1, (17, 33, 65))
        verdicts["identity_order"] = min(ref["orders"]) >= 0.9
        res["identity"] = ref
        print(f"divergence identity orders: {ref['orders']}")
    if suite in ("stability", "all"):
        ec = eigen_crosscheck(ScalarField.constant(GridDomain.box(2, 7), 0.0))
        verdicts["eigen_crosscheck"] = ec["difference"] <= 1e-8
        res["eigen"] = ec
        print(f"lambda dense={ec['dense']:.12g} shift-invert={ec['shift_invert']:.12g}")
    if not verdicts:
        raise ConfigError(f"unknown verification suite {suite!r} (variation, identity, stability, all)")
    verdicts["suite"] = suite
    return verdicts, res


HANDLERS = {
    "area": cmd_area, "curvature": cmd_curvature, "solve": cmd_solve,
    "stability": cmd_stability, "foliate": cmd_foliate, "calibrate": cmd_calibrate,
    "metric": cmd_metric, "verify": cmd_verify,
}


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", default="hgraph-out", help="run directory (manifest + fields)")
    common.add_argument("--grid", type=_parse_grid, help="nodes per axis, m1,...,m2n")
    common.add_argument("--n", type=int, help="Heisenberg index n")
    common.add_argument("--seed", type=int, help="seed for random fields and samples")
    common.add_argument("--tol", type=float, help="Newton residual tolerance")
    common.add_argument("--format", choices=("json", "csv", "both"), help="field export format")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="hgraph", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"hgraph {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    for name, text in COMMANDS.items():
        sp_ = sub.add_parser(name, parents=[common], help=text)
        if name == "solve":
            sp_.add_argument("--basin", action="store_true", help="bisect the solvable amplitude")
        if name == "calibrate":
            sp_.add_argument("--seeds", type=int, help="number of random competitors")
        if name == "verify":
            sp_.add_argument("--suite", choices=("variation", "identity", "stability", "all"))
    return p


def _merge_flags(cfg: dict, args) -> dict:
    for key in ("n", "grid", "seed"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    if args.format is not None:
        cfg["format"] = args.format
    return cfg


def _thread_limit():
    raw = os.environ.get("HGRAPH_THREADS")
    if not raw:
        return contextlib.nullcontext()
    try:
        k = int(raw)
        if k < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"HGRAPH_THREADS must be a positive integer, got {raw!r}")
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=k)


def _failed(verdicts: dict) -> list[str]:
    bad = [k for k, v in verdicts.items() if v is False]
    for key in ("maximum_principle",):
        if verdicts.get(key) == "fail":
            bad.append(key)
    return bad


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        cfg = _merge_flags(_load_config(args.config), args)
        run = Run(args, cfg)
        with _thread_limit():
            verdicts, res = HANDLERS[args.command](run)
    except ConfigError as exc:
        print(f"hgraph {args.command}: configuration error: {exc}", file=sys.stderr)
        return 2
    except (NotStrictlyStableError, DegenerateFieldsError, ValueError) as exc:
        print(f"hgraph {args.command}: precondition violated: {exc}", file=sys.stderr)
        return 2
    except (SolveFailed, LeafSolveError) as exc:
        print(f"hgraph {args.command}: solve failed: {exc}", file=sys.stderr)
        verdicts, res = {"converged": False}, {"error": str(exc)}
    grid = run._domain.spec() if run._domain is not None else None
    manifest = RunManifest(
        command=args.command,
        config={k: v for k, v in cfg.items() if not k.startswith("_")},
        code_version=__version__,
        grid=grid,
        conventions=CONVENTIONS,
        tolerances=run.tolerances,
        timing={"wall_seconds": time.perf_counter() - t0},
        verdicts=verdicts,
        basin=run.extra.get("basin"),
        outputs=run.outputs,
    )
    manifest_extra = {"results": res, **{k: v for k, v in run.extra.items() if k != "basin"}}
    run.out.mkdir(parents=True, exist_ok=True)
    (run.out / f"{args.command}-results.json").write_text(
        json.dumps(to_jsonable(manifest_extra), sort_keys=True, indent=1) + "\n", encoding="utf-8")
    append_manifest(run.out, manifest)
    bad = _failed(verdicts)
    if bad:
        print(f"hgraph {args.command}: failed checks: {', '.join(bad)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
