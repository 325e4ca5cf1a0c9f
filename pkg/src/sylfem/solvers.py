"""Solvers for two-term and multiterm Sylvester matrix equations.

Four routes are provided: a spectral reduction for two-term equations, a
closed-form variant of it for degree-1 Dirichlet problems on the square, a
matrix-oriented preconditioned conjugate gradient (CG with grid-matrix
iterates and Frobenius inner products) for the general multiterm case, and a
sparse direct solve of the assembled Kronecker system that serves as the
in-repo reference for everything else.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import OperatorError, SolverError
from .fem1d import DirectionSet
from .operators import (SylvesterOperator, is_unit_degenerate, to_kronecker,
                        unvec, vec)

#: factorization guard: estimated reciprocal condition below this aborts
RCOND_GUARD = 1e-14

#: guard against (numerically) singular spectral pencils
PENCIL_GUARD = 1e-12

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 1000


@dataclass
class SolveReport:
    """Solution plus convergence record of one linear solve."""

    solution: np.ndarray
    method: str
    iterations: int
    residual_history: np.ndarray
    stop_reason: str
    wall_time: float
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# stopping rules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StoppingRule:
    """Iteration stopping test: residual-relative or increment-absolute."""

    kind: str  # "residual" | "increment"
    value: float

    def describe(self) -> str:
        if self.kind == "residual":
            return f"|R_s| <= {self.value:g} * |R_0|"
        return f"|U_s+1 - U_s| <= {self.value:g}"


def relative_residual(tol: float = DEFAULT_TOL) -> StoppingRule:
    return StoppingRule("residual", float(tol))


def increment_threshold(threshold: float) -> StoppingRule:
    return StoppingRule("increment", float(threshold))


def reference_increment(reference_error_norm: float,
                        fraction: float = 0.05) -> StoppingRule:
    """Stop once the iterate increment drops below a fraction of a known
    discretization-error norm (benchmark-parity rule; needs a reference solve)."""
    return increment_threshold(fraction * reference_error_norm)


def timestep_residual(tau: float) -> StoppingRule:
    """Residual reduction by the timestep factor, the implicit-step rule."""
    return relative_residual(tau)


# ---------------------------------------------------------------------------
# preconditioners
# ---------------------------------------------------------------------------

def _rcond_guard(mat: np.ndarray, name: str) -> None:
    try:
        c = np.linalg.cond(mat, 1)
    except np.linalg.LinAlgError:
        c = np.inf
    rc = 0.0 if not np.isfinite(c) else 1.0 / c
    if rc < RCOND_GUARD:
        raise SolverError(
            f"preconditioner factor '{name}' is numerically singular "
            f"(rcond ~ {rc:.2e})"
        )


class Preconditioner:
    """Single-term preconditioner U -> P_L U P_R with factorized inverses."""

    def __init__(self, left: np.ndarray | None = None,
                 right: np.ndarray | None = None,
                 left_name: str = "P_L", right_name: str = "P_R"):
        self.left = None if left is None else np.asarray(left, dtype=float)
        self.right = None if right is None else np.asarray(right, dtype=float)
        self.left_name = left_name
        self.right_name = right_name
        if self.left is not None:
            _rcond_guard(self.left, left_name)
            self._lu_left = sla.lu_factor(self.left)
        if self.right is not None:
            _rcond_guard(self.right, right_name)
            self._lu_right = sla.lu_factor(self.right)

    @property
    def is_identity(self) -> bool:
        return self.left is None and self.right is None

    def apply(self, U: np.ndarray) -> np.ndarray:
        if self.is_identity:
            return np.array(U, copy=True)
        out = U
        if self.left is not None:
            out = self.left @ out
        if self.right is not None:
            out = out @ self.right
        return out

    def apply_inverse(self, U: np.ndarray) -> np.ndarray:
        if self.is_identity:
            return np.array(U, copy=True)
        out = np.asarray(U)
        if self.left is not None:
            out = sla.lu_solve(self._lu_left, out)
        if self.right is not None:
            # X = out @ right^-1  <=>  right^T X^T = out^T
            out = sla.lu_solve(self._lu_right, out.T, trans=1).T
        return out

    def as_kronecker(self, shape) -> sp.csr_matrix:
        """Sparse vec-form matrix, for the vector-iteration reference path."""
        qy, qx = shape
        left = np.eye(qy) if self.left is None else self.left
        right = np.eye(qx) if self.right is None else self.right
        return sp.kron(sp.csr_matrix(right.T), sp.csr_matrix(left), format="csr")


IDENTITY_PRECONDITIONER = "identity"


def make_preconditioner(kind: str, x: DirectionSet, y: DirectionSet, *,
                        d_u: float = 1.0, tau: float = 0.0,
                        lumped: bool = False) -> Preconditioner:
    """Build one of the named single-term preconditioners.

    kinds: ``identity``; ``elliptic_square`` (A U A); ``elliptic_xnormal``
    (B1 U (A+B2), or A1 U (A+A2) when lumped); ``parabolic``
    ((M3 + d tau B1) U (M + d tau (A+B2)), lumped analogue with
    ``parabolic_lumped`` or lumped=True).
    """
    if kind == "identity":
        return Preconditioner()
    if kind == "parabolic_lumped":
        kind, lumped = "parabolic", True
    mx, my = x.mats, y.mats
    if lumped and (x.lumped is None or y.lumped is None):
        raise SolverError("lumped preconditioner requested without lumped matrices")
    # on an undeformed profile the coordinate-weighted block contributes
    # nothing to the operator, so it is dropped from the right factor too
    flat = is_unit_degenerate(y)
    if kind == "elliptic_square":
        return Preconditioner(my.A, mx.A, "A(y)", "A(x)")
    if kind == "elliptic_xnormal":
        if lumped:
            right = mx.A if flat else mx.A + x.lumped.A2
            return Preconditioner(y.lumped.A1, right,
                                  "A1(y)", "A(x)" if flat else "A+A2(x)")
        right = mx.A if flat else mx.A + mx.B2
        return Preconditioner(my.B1, right,
                              "B1(y)", "A(x)" if flat else "A+B2(x)")
    if kind == "parabolic":
        c = d_u * tau
        if lumped:
            left = y.lumped.M0 @ y.lumped.D1 + c * y.lumped.A1
            right = x.lumped.M0 + c * (mx.A if flat else mx.A + x.lumped.A2)
            return Preconditioner(left, right, "M0*D1+d*tau*A1(y)",
                                  "M0+d*tau*(A+A2)(x)")
        left = my.M3 + c * my.B1
        right = mx.M + c * (mx.A if flat else mx.A + mx.B2)
        return Preconditioner(left, right, "M3+d*tau*B1(y)", "M+d*tau*(A+B2)(x)")
    raise SolverError(f"unknown preconditioner kind '{kind}'")


# ---------------------------------------------------------------------------
# spectral reduction
# ---------------------------------------------------------------------------

def _fix_eigvectors(vecs: np.ndarray) -> np.ndarray:
    # reproducible sign: largest-magnitude component of each column positive
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


@dataclass
class SpectralCache:
    """Eigen-factorizations of the two pencils of a two-term equation.

    Solves G1 U H1 + G2 U H2 = B via Z1 U + U Z2 = G2^-1 B H1^-1 with
    Z1 = G2^-1 G1 and Z2 = H2 H1^-1.  P1, P2 hold the pencil eigenvectors
    (G2- and H1-orthonormal), from which X_k, X_k^-1 of the diagonalizations
    Z_k = X_k Lambda_k X_k^-1 follow without any explicit inverse.
    """

    lam1: np.ndarray
    lam2: np.ndarray
    P1: np.ndarray
    P2: np.ndarray
    G2: np.ndarray
    H1: np.ndarray
    swapped: bool

    @property
    def X1(self) -> np.ndarray:
        return self.P1

    @property
    def X1inv(self) -> np.ndarray:
        return self.P1.T @ self.G2

    @property
    def X2(self) -> np.ndarray:
        return self.H1 @ self.P2

    @property
    def X2inv(self) -> np.ndarray:
        return self.P2.T

    def kernel(self) -> np.ndarray:
        """Hadamard kernel with entries 1 / (lam1_i + lam2_j)."""
        denom = self.lam1[:, None] + self.lam2[None, :]
        if np.min(np.abs(denom)) < PENCIL_GUARD:
            raise SolverError(
                "spectral pencils are (numerically) singular: an eigenvalue "
                f"sum fell below {PENCIL_GUARD:g}"
            )
        return 1.0 / denom


def build_spectral_cache(op: SylvesterOperator) -> SpectralCache:
    """Diagonalize the two pencils of a two-term operator.

    Both pencil reductions go through the symmetric generalized eigenproblem
    (Cholesky of the mass-like factor), so only a symmetric eigensolver is
    ever used.  Term order is auto-detected: the pairing whose mass factors
    admit a Cholesky factorization wins.
    """
    if len(op.terms) != 2:
        raise SolverError(
            f"spectral reduction needs a two-term operator, got {len(op.terms)} terms"
        )
    orders = [(0, 1, False), (1, 0, True)]
    last_err = None
    for i, j, swapped in orders:
        (G1, H1), (G2, H2) = op.terms[i], op.terms[j]
        try:
            lam1, P1 = sla.eigh(G1, G2)
            lam2, P2 = sla.eigh(H2, H1)
        except (np.linalg.LinAlgError, sla.LinAlgError) as exc:  # mass not SPD
            last_err = exc
            continue
        return SpectralCache(lam1=lam1, lam2=lam2,
                             P1=_fix_eigvectors(P1), P2=_fix_eigvectors(P2),
                             G2=G2, H1=H1, swapped=swapped)
    raise SolverError(f"operator is not reducible to Z1 U + U Z2 form: {last_err}")


def solve_reduced(op: SylvesterOperator, rhs: np.ndarray,
                  cache: SpectralCache | None = None) -> SolveReport:
    """Solve a two-term equation in the spectral space of its pencils."""
    t0 = time.perf_counter()
    if cache is None:
        cache = build_spectral_cache(op)
    kernel = cache.kernel()
    rhs = np.asarray(rhs, dtype=float)
    U = cache.P1 @ (kernel * (cache.P1.T @ rhs @ cache.P2)) @ cache.P2.T
    rhs_norm = np.linalg.norm(rhs)
    res = np.linalg.norm(op.apply(U) - rhs) / max(rhs_norm, 1e-300)
    return SolveReport(
        solution=U, method="reduced", iterations=0,
        residual_history=np.array([res]), stop_reason="direct",
        wall_time=time.perf_counter() - t0,
        diagnostics={"pencil_swapped": cache.swapped},
    )


def dirichlet_p1_eigenvalues(N: int, gamma: float = 0.0) -> np.ndarray:
    """Closed-form eigenvalues of M^-1 A + gamma/2 for degree-1 Dirichlet.

    The stiffness eigenvalues are lam_A_i = 2N (1 - cos(i pi / N)); combined
    with the mass relation M = -A/(6 N^2) + I/N this gives
    ((12 N^2 - gamma) lam_A + 6 N gamma) / (12 N - 2 lam_A).
    """
    i = np.arange(1, N)
    lam_a = 2.0 * N * (1.0 - np.cos(i * np.pi / N))
    return ((12.0 * N * N - gamma) * lam_a + 6.0 * N * gamma) / (12.0 * N - 2.0 * lam_a)


def dirichlet_sine_basis(N: int) -> np.ndarray:
    """Eigenvector matrix X with X[i, j] = sin((i+1)(j+1) pi / N); X^2 = N/2 I."""
    i = np.arange(1, N)
    return np.sin(np.outer(i, i) * np.pi / N)


def solve_reduced_closed_form(gamma: float, f_nodal: np.ndarray,
                              N: int) -> SolveReport:
    """Spectral solve of the degree-1 Dirichlet square problem, no eigensolver.

    ``f_nodal`` is the (N-1) x (N-1) matrix of nodal source values; the
    inverse eigenvector matrix comes from the sine-basis identity
    X X^T = (N/2) I rather than a numerical inverse.
    """
    t0 = time.perf_counter()
    f_nodal = np.asarray(f_nodal, dtype=float)
    q = N - 1
    if f_nodal.shape != (q, q):
        raise SolverError(
            f"closed-form path needs a square {q} x {q} nodal source, "
            f"got {f_nodal.shape}"
        )
    if gamma < 0:
        raise SolverError("reaction coefficient must be nonnegative")
    lam = dirichlet_p1_eigenvalues(N, gamma)
    denom = lam[:, None] + lam[None, :]
    if np.min(np.abs(denom)) < PENCIL_GUARD:
        raise SolverError("singular eigenvalue sum in closed-form reduction")
    X = dirichlet_sine_basis(N)
    scale = 2.0 / N  # X^-1 = scale * X
    f_hat = scale * (X @ f_nodal @ X)
    U = scale * (X @ ((1.0 / denom) * f_hat) @ X)
    res = np.linalg.norm(denom * (scale * (X @ U @ X)) - f_hat) \
        / max(np.linalg.norm(f_hat), 1e-300)
    return SolveReport(
        solution=U, method="reduced-closed", iterations=0,
        residual_history=np.array([res]), stop_reason="direct",
        wall_time=time.perf_counter() - t0,
        diagnostics={"residual_space": "spectral"},
    )


# ---------------------------------------------------------------------------
# matrix-oriented PCG
# ---------------------------------------------------------------------------

def _dot(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.vdot(a, b))


def mo_pcg(op: SylvesterOperator, rhs: np.ndarray,
           precond: Preconditioner | None = None,
           stop: StoppingRule | None = None,
           u0: np.ndarray | None = None,
           max_iter: int = DEFAULT_MAX_ITER,
           record_iterates: bool = False) -> SolveReport:
    """Conjugate gradients with grid-matrix iterates.

    Inner products are Frobenius; the working set holds exactly five
    grid-sized dense matrices (iterate, residual, preconditioned residual,
    search direction, operator image), which the report exposes for the
    memory-model checks.  Running out of iterations returns a report with
    ``stop_reason='max_iter'`` instead of raising.
    """
    if not (op.symmetric and op.positive_definite):
        raise OperatorError(
            "mo_pcg needs an operator flagged self-adjoint positive definite"
        )
    if precond is None:
        precond = Preconditioner()
    if stop is None:
        stop = relative_residual(DEFAULT_TOL)
    t0 = time.perf_counter()

    rhs = np.asarray(rhs, dtype=float)
    # persistent grid buffers: U, R, Z, Q, W  (exactly five)
    if u0 is None:
        U = np.zeros(op.shape)
        R = rhs.copy()
    else:
        U = np.array(u0, dtype=float, copy=True)
        R = rhs - op.apply(U)
    res0 = np.linalg.norm(R)
    history = [res0]
    increments = []
    iterates = [U.copy()] if record_iterates else None

    def report(iters, reason):
        diag = {"dense_grid_matrices": 5, "increments": np.asarray(increments),
                "preconditioner": (precond.left_name, precond.right_name)
                if not precond.is_identity else ("identity", "identity"),
                "stopping_rule": stop.describe()}
        if record_iterates:
            diag["iterates"] = iterates
        return SolveReport(solution=U, method="mo-pcg", iterations=iters,
                           residual_history=np.asarray(history),
                           stop_reason=reason,
                           wall_time=time.perf_counter() - t0,
                           diagnostics=diag)

    if res0 == 0.0:
        return report(0, "tolerance")

    Z = precond.apply_inverse(R)
    Q = Z.copy()
    rz = _dot(Z, R)
    W = np.empty(op.shape)

    for s in range(max_iter):
        W[:] = op.apply(Q)
        qw = _dot(W, Q)
        if qw <= 0.0:
            raise OperatorError(
                f"operator is not positive definite along a search direction "
                f"(<L(Q), Q> = {qw:.3e} at iteration {s})"
            )
        alpha = rz / qw
        U += alpha * Q
        R -= alpha * W
        res = np.linalg.norm(R)
        if not np.isfinite(res):
            raise SolverError(
                f"mo_pcg residual became non-finite at iteration {s}"
            )
        history.append(res)
        increments.append(abs(alpha) * np.linalg.norm(Q))
        if record_iterates:
            iterates.append(U.copy())
        if stop.kind == "residual" and res <= stop.value * res0:
            return report(s + 1, "tolerance")
        if stop.kind == "increment" and increments[-1] <= stop.value:
            return report(s + 1, "increment")
        Z = precond.apply_inverse(R)
        rz_new = _dot(Z, R)
        beta = rz_new / rz
        rz = rz_new
        Q *= beta
        Q += Z
    return report(max_iter, "max_iter")


def vector_pcg(K: sp.spmatrix, b: np.ndarray,
               P: sp.spmatrix | None = None,
               stop: StoppingRule | None = None,
               x0: np.ndarray | None = None,
               max_iter: int = DEFAULT_MAX_ITER,
               record_iterates: bool = False) -> SolveReport:
    """Classical vector PCG on the assembled sparse system.

    Same recurrences as :func:`mo_pcg`, kept as an independent code path so
    the two can be compared iterate by iterate.
    """
    if stop is None:
        stop = relative_residual(DEFAULT_TOL)
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    n = b.size
    K = K.tocsr()
    solve_p = spla.splu(P.tocsc()).solve if P is not None else (lambda r: r.copy())
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float, copy=True)
    r = b - K @ x if x0 is not None else b.copy()
    res0 = np.linalg.norm(r)
    history = [res0]
    iterates = [x.copy()] if record_iterates else None

    def report(iters, reason):
        diag = {}
        if record_iterates:
            diag["iterates"] = iterates
        return SolveReport(solution=x, method="vector-pcg", iterations=iters,
                           residual_history=np.asarray(history),
                           stop_reason=reason,
                           wall_time=time.perf_counter() - t0,
                           diagnostics=diag)

    if res0 == 0.0:
        return report(0, "tolerance")
    z = solve_p(r)
    q = z.copy()
    rz = float(r @ z)
    for s in range(max_iter):
        w = K @ q
        qw = float(q @ w)
        if qw <= 0.0:
            raise OperatorError("matrix is not positive definite along a direction")
        alpha = rz / qw
        x += alpha * q
        r -= alpha * w
        res = np.linalg.norm(r)
        history.append(res)
        if record_iterates:
            iterates.append(x.copy())
        if stop.kind == "residual" and res <= stop.value * res0:
            return report(s + 1, "tolerance")
        if stop.kind == "increment" and abs(alpha) * np.linalg.norm(q) <= stop.value:
            return report(s + 1, "increment")
        z = solve_p(r)
        rz_new = float(r @ z)
        beta = rz_new / rz
        rz = rz_new
        q *= beta
        q += z
    return report(max_iter, "max_iter")


# ---------------------------------------------------------------------------
# sparse direct reference
# ---------------------------------------------------------------------------

def solve_direct(op: SylvesterOperator, rhs: np.ndarray) -> SolveReport:
    """Assemble the Kronecker system and solve it by sparse LU.

    This is the in-repo reference ("vector") path; size is limited by the
    Kronecker guard of :func:`to_kronecker`.
    """
    import warnings

    t0 = time.perf_counter()
    rhs = np.asarray(rhs, dtype=float)
    K = to_kronecker(op).tocsc()
    b = vec(rhs)
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            x = spla.spsolve(K, b)
        except spla.MatrixRankWarning:
            raise SolverError("sparse direct solve hit a singular operator") \
                from None
    res = np.linalg.norm(K @ x - b) / max(np.linalg.norm(b), 1e-300)
    if not np.all(np.isfinite(x)) or res > 1e-9:
        raise SolverError(
            f"sparse direct solve failed (relative residual {res:.2e}; "
            "singular operator?)")
    U = unvec(x, op.shape)
    return SolveReport(
        solution=U, method="direct", iterations=0,
        residual_history=np.array([res]), stop_reason="direct",
        wall_time=time.perf_counter() - t0,
        diagnostics={"nnz": int(K.nnz), "n": int(K.shape[0])},
    )
