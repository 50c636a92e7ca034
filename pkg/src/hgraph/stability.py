"""Stability operator, index form, first eigenvalues and the maximum principle.

The operator is the exact Jacobian of the conservative mean curvature of
:mod:`hgraph.variational`.  Writing ``p = grad^u u``, ``W = sqrt(1+|p|^2)``,
``c = d_{2n} u`` and ``k = 2n - 1``, the discrete second variation of the area
splits into

* ``principal``: ``sum_ij X_i^T diag(w a_ij / W) X_j``
* ``drift``:     ``sum_i X_i^T diag(w c a_ik / W) + diag(w c a_ik / W) X_i``
* ``potential``: ``diag(w c^2 a_kk / W) + diag(w A_k) D_{2n} + D_{2n}^T diag(w A_k)``

and ``L_u = -diag(1/w) (principal + drift + potential)`` restricted to
interior rows.  Hence ``-<v, L_u v>`` in the quadrature inner product is
exactly ``d^2/ds^2 area(u + s v)`` for ``v`` vanishing on the boundary, and at
``u = 0`` only the principal (sum of squares) block survives.

Eigenvalues are those of ``-L_u``, so strict stability means ``lambda_1 > 0``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import GridDomain, ScalarField, _check_same, as_field, field_matrix, horizontal_gradient, coefficients

STABILITY_RTOL = 1e-8


class EigenSolverError(RuntimeError):
    pass


class LinearSolveError(RuntimeError):
    pass


def state_hash(u: ScalarField) -> str:
    return hashlib.sha256(np.ascontiguousarray(u.values).tobytes()).hexdigest()[:16]


@dataclass
class LinearOperator:
    """Discrete ``L_u`` on interior unknowns with its boundary companion map."""

    domain: GridDomain
    matrix: sp.csr_matrix
    boundary_coupling: sp.csr_matrix
    blocks: dict
    state: str

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def scale(self) -> float:
        return float(np.max(np.abs(self.matrix.diagonal())))

    def apply(self, v: ScalarField) -> ScalarField:
        """``L_u v`` at interior nodes (boundary values of ``v`` enter via the companion)."""
        if v.domain != self.domain:
            raise ValueError("field lives on a different grid domain")
        flat = v.flat
        vals = np.zeros(self.domain.size)
        vals[self.domain.interior_index] = (self.matrix @ flat[self.domain.interior_index]
                                            + self.boundary_coupling @ flat[self.domain.boundary_index])
        return ScalarField(self.domain, vals)


def hessian_blocks(u: ScalarField) -> dict:
    """Full-grid (N x N) blocks of the discrete second variation of the area."""
    domain = u.domain
    k = 2 * domain.n - 1
    g = horizontal_gradient(u)
    wsq = np.sqrt(1.0 + g.norm_squared()).ravel()
    a = coefficients(g.components).reshape(k, k, -1)
    wts = domain.weights.ravel()
    dlast = domain.diff(domain.dim - 1)
    c = dlast @ u.flat
    X = [field_matrix(domain, i, u) for i in range(1, k + 1)]

    principal = sp.csr_matrix((domain.size, domain.size))
    for i in range(k):
        for j in range(k):
            coef = wts * a[i, j] / wsq
            if np.any(coef):
                principal = principal + X[i].T @ sp.diags(coef) @ X[j]

    drift = sp.csr_matrix((domain.size, domain.size))
    for i in range(k):
        coef = wts * c * a[i, k - 1] / wsq
        if np.any(coef):
            b = sp.diags(coef)
            drift = drift + X[i].T @ b + b @ X[i]

    potential = sp.csr_matrix((domain.size, domain.size))
    zero = wts * c**2 * a[k - 1, k - 1] / wsq
    if np.any(zero):
        potential = potential + sp.diags(zero)
    ak = wts * g.components[k - 1].ravel() / wsq
    if np.any(ak):
        b = sp.diags(ak)
        potential = potential + b @ dlast + dlast.T @ b
    return {"principal": principal.tocsr(), "drift": drift.tocsr(), "potential": potential.tocsr()}


def assemble_stability(u: ScalarField) -> LinearOperator:
    """Assemble ``L_u`` with Dirichlet elimination of the boundary nodes."""
    domain = u.domain
    blocks = hessian_blocks(u)
    hess = (blocks["principal"] + blocks["drift"] + blocks["potential"]).tocsr()
    I, B = domain.interior_index, domain.boundary_index
    inv_w = sp.diags(-1.0 / domain.weights.ravel()[I])
    rows = hess[I]
    matrix = (inv_w @ rows[:, I]).tocsr()
    coupling = (inv_w @ rows[:, B]).tocsr()
    interior_blocks = {}
    for name, blk in blocks.items():
        sub = (inv_w @ blk[I][:, I]).tocsr()
        sub.eliminate_zeros()
        interior_blocks[name] = sub
    matrix.eliminate_zeros()
    coupling.eliminate_zeros()
    return LinearOperator(domain, matrix, coupling, interior_blocks, state_hash(u))


def _operator(u_or_op) -> LinearOperator:
    if isinstance(u_or_op, LinearOperator):
        return u_or_op
    return assemble_stability(u_or_op)


def index_form(u, v: ScalarField) -> float:
    """``I(v, v) = -int v L_u v`` for ``v`` vanishing on the boundary.

    ``u`` may be a field or an already assembled operator.
    """
    op = _operator(u)
    if v.domain != op.domain:
        raise ValueError("field lives on a different grid domain")
    if np.any(v.boundary != 0.0):
        raise ValueError("index form needs a test field vanishing on the boundary")
    Lv = op.apply(v)
    return float(-np.sum(op.domain.weights * v.values * Lv.values))


# --------------------------------------------------------------------------
# eigenvalues


@dataclass
class SpectralResult:
    """First eigenvalues of ``-L_u``.

    ``lambda_sym`` minimizes the index form over the discrete L^2 sphere (the
    stability certificate); ``lambda_op`` is the eigenvalue of ``-L_u`` with
    smallest real part (the maximum principle hypothesis).
    """

    lambda_sym: float
    lambda_op: float
    eigenfunction: ScalarField
    method: str
    residual: float
    scale: float
    iterations: int = 0

    @property
    def threshold(self) -> float:
        return STABILITY_RTOL * self.scale

    @property
    def strictly_stable(self) -> bool:
        return self.lambda_sym > self.threshold


def _factor_with_inertia(C: sp.csc_matrix, sigma: float):
    """LU of ``C - sigma I`` with symmetric pivoting; returns (lu, #negative pivots or None)."""
    N = C.shape[0]
    A = (C - sigma * sp.identity(N, format="csc")).tocsc()
    try:
        lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError:
        return None, None
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return lu, None
    return lu, int(np.sum(lu.U.diagonal() < 0))


def shift_invert_smallest(C, tol: float = 1e-11, maxiter: int = 200, block: int = 6,
                          depth: int = 6, seed: int = 0):
    """Smallest eigenpair of a sparse symmetric matrix by shift-invert block Krylov.

    Each sweep builds ``[X, T X, ..., T^depth X]`` with ``T = (C - sigma)^{-1}``,
    performs a Rayleigh-Ritz projection with ``C`` and restarts from the lowest
    Ritz vectors.  The shift is moved until the inertia of the shifted
    factorization shows no eigenvalue below it, so the pair found is the
    global minimum and not merely the one closest to zero.

    Returns ``(value, vector, residual, sweeps)``.
    """
    C = sp.csc_matrix(C)
    N = C.shape[0]
    scale = float(np.max(np.abs(C.diagonal()))) or 1.0
    gersh = float(np.min(C.diagonal() - (abs(C).sum(axis=1).A1 - np.abs(C.diagonal()))))
    shifts = [0.0, -1e-8 * scale] + [-scale * 10.0**p for p in range(-6, 1)] + [min(gersh, 0) - 1e-3 * scale]
    lu = None
    for sigma in shifts:
        lu, neg = _factor_with_inertia(C, sigma)
        if lu is not None and neg == 0:
            break
    else:
        raise EigenSolverError("could not find a shift below the spectrum")

    b = min(block, N)
    rng = np.random.default_rng(seed)
    X = np.linalg.qr(rng.standard_normal((N, b)))[0]
    lam, vec, res = np.nan, None, np.inf
    for it in range(1, maxiter + 1):
        blocks, Z = [X], X
        for _ in range(depth):
            Z = lu.solve(Z)
            Z = Z / np.linalg.norm(Z, axis=0)
            blocks.append(Z)
        K = np.hstack(blocks)
        if K.shape[1] > N:
            K = K[:, :N]
        Q = np.linalg.qr(np.linalg.qr(K)[0])[0]
        CQ = C @ Q
        theta, V = np.linalg.eigh(Q.T @ CQ)
        X = Q @ V[:, :b]
        lam, vec = theta[0], X[:, 0]
        res = float(np.linalg.norm(CQ @ V[:, 0] - lam * vec))
        if res <= tol * scale:
            return float(lam), vec, res, it
    raise EigenSolverError(f"shift-invert iteration stalled: residual {res:.3e} after {maxiter} sweeps")


def _symmetrized(op: LinearOperator):
    """``W^{1/2} sym(-L) W^{-1/2}`` form whose spectrum is the index-form spectrum."""
    w = op.domain.weights.ravel()[op.domain.interior_index]
    Wm = sp.diags(w)
    S = -(Wm @ op.matrix + (Wm @ op.matrix).T) / 2.0
    s = sp.diags(1.0 / np.sqrt(w))
    return (s @ S @ s).tocsr(), w


def first_eigenvalue(u, method: str = "auto", dense_limit: int = 1000,
                     tol: float = 1e-11, seed: int = 0) -> SpectralResult:
    """First eigenvalues of ``-L_u`` with Dirichlet conditions.

    ``method`` is ``"dense"``, ``"shift-invert"`` or ``"auto"`` (dense up to
    ``dense_limit`` unknowns).
    """
    op = _operator(u)
    C, w = _symmetrized(op)
    N = C.shape[0]
    if method == "auto":
        method = "dense" if N <= dense_limit else "shift-invert"
    negL = -op.matrix
    iters = 0
    if method == "dense":
        theta, V = sla.eigh(C.toarray())
        lam_sym, y = float(theta[0]), V[:, 0]
        lam_op = float(np.min(np.linalg.eigvals(negL.toarray()).real))
    elif method == "shift-invert":
        lam_sym, y, _, iters = shift_invert_smallest(C, tol=tol, seed=seed)
        k = min(6, N - 2)
        sigma = lam_sym - 1e-6 * max(abs(lam_sym), 1.0)
        try:
            vals = spla.eigs(negL.tocsc(), k=k, sigma=sigma, which="LM",
                             return_eigenvectors=False, tol=tol)
        except spla.ArpackNoConvergence as exc:
            raise EigenSolverError(f"eigs failed to converge for lambda_op: {exc}") from exc
        lam_op = float(np.min(vals.real))
    else:
        raise ValueError(f"unknown eigen method {method!r}")
    res = float(np.linalg.norm(C @ y - lam_sym * y))
    v = np.zeros(op.domain.size)
    v[op.domain.interior_index] = y / np.sqrt(w)
    # L^2-normalized with a deterministic sign
    v_field = ScalarField(op.domain, v)
    if np.sum(v) < 0:
        v_field = -v_field
    return SpectralResult(lam_sym, lam_op, v_field, method, res, op.scale, iters)


# --------------------------------------------------------------------------
# linear Dirichlet problems


DIRECT_LIMIT = 20000


def linear_solve(A: sp.spmatrix, rhs: np.ndarray, method: str = "auto", tol: float = 1e-12,
                 permutation: np.ndarray | None = None):
    """Solve ``A x = rhs``; returns ``(x, relative residual)``.

    ``method="auto"`` uses sparse LU up to ``DIRECT_LIMIT`` unknowns and
    ILU-preconditioned GMRES above.  ``permutation`` reorders the unknowns
    (symmetrically) before the solve.
    """
    A = sp.csr_matrix(A)
    if method == "auto":
        method = "direct" if A.shape[0] <= DIRECT_LIMIT else "gmres"
    if permutation is not None:
        p = np.asarray(permutation)
        x_p, rel = linear_solve(A[p][:, p], rhs[p], method, tol)
        x = np.empty_like(x_p)
        x[p] = x_p
        return x, rel
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return np.zeros_like(rhs), 0.0
    if method == "direct":
        try:
            x = spla.splu(A.tocsc()).solve(rhs)
        except RuntimeError as exc:
            raise LinearSolveError(f"sparse LU failed: {exc}") from exc
    elif method == "gmres":
        try:
            ilu = spla.spilu(A.tocsc(), drop_tol=1e-5, fill_factor=20)
            M = spla.LinearOperator(A.shape, ilu.solve)
        except RuntimeError:
            M = None
        x, info = spla.gmres(A, rhs, M=M, rtol=tol, atol=0.0, restart=100, maxiter=200)
        if info != 0:
            raise LinearSolveError(f"GMRES did not converge (info={info})")
    elif method == "dense":
        x = np.linalg.solve(A.toarray(), rhs)
    else:
        raise ValueError(f"unknown linear solver {method!r}")
    if not np.all(np.isfinite(x)):
        raise LinearSolveError("linear solve produced non-finite values")
    rel = float(np.linalg.norm(A @ x - rhs) / bnorm)
    return x, rel


def solve_linear_dirichlet(u, g=0.0, b=0.0, method: str = "auto") -> ScalarField:
    """Solve ``L_u v = g`` in the interior with ``v = b`` on the boundary."""
    op = _operator(u)
    domain = op.domain
    g = as_field(domain, g)
    b = as_field(domain, b)
    I, B = domain.interior_index, domain.boundary_index
    bb = b.flat[B]
    rhs = g.flat[I] - op.boundary_coupling @ bb
    x, rel = linear_solve(op.matrix, rhs, method=method)
    if rel > 1e-8:
        raise LinearSolveError(f"Dirichlet solve residual {rel:.2e} too large")
    vals = np.empty(domain.size)
    vals[I] = x
    vals[B] = bb
    return ScalarField(domain, vals)


@dataclass
class MaximumPrincipleResult:
    verdict: str
    field: ScalarField | None
    inf_value: float | None
    lambda_op: float
    details: dict = field(default_factory=dict)


def check_maximum_principle(u, g=0.0, b=1.0, spectral: SpectralResult | None = None
                            ) -> MaximumPrincipleResult:
    """Solve ``L_u v = g`` (``g <= 0``) with ``v = b`` (``inf b > 0``) and test ``inf v > 0``.

    The verdict is ``"inapplicable"`` when the first eigenvalue of ``-L_u`` is
    not positive, since the positivity conclusion is then not promised.
    """
    op = _operator(u)
    domain = op.domain
    g = as_field(domain, g)
    b = as_field(domain, b)
    if np.any(g.interior > 0.0):
        raise ValueError("right-hand side must satisfy g <= 0 in the interior")
    if np.min(b.boundary) <= 0.0:
        raise ValueError("boundary data must satisfy inf b > 0")
    spec = spectral if spectral is not None else first_eigenvalue(op)
    if not spec.lambda_op > STABILITY_RTOL * spec.scale:
        return MaximumPrincipleResult("inapplicable", None, None, spec.lambda_op,
                                      {"reason": "first eigenvalue of -L_u is not positive"})
    v = solve_linear_dirichlet(op, g, b)
    inf_v = float(np.min(v.values))
    return MaximumPrincipleResult("pass" if inf_v > 0.0 else "fail", v, inf_v, spec.lambda_op,
                                  {"inf_boundary": float(np.min(b.boundary))})
