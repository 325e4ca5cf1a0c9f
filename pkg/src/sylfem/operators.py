"""2D discrete operators as term lists U -> sum_i G_i U H_i.

The nodal unknown is kept as a q_y x q_x matrix U (rows follow the y
direction, columns the x direction) and every discrete operator is a short
list of (left, right) factor pairs: y-direction matrices act from the left,
x-direction ones from the right.  Column-stacking vec() identifies each term
with the Kronecker block H^T (x) G, which is what ``to_kronecker`` assembles
for the sparse reference path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import OperatorError
from .fem1d import BCKind, DirectionSet
from .geometry import DomainSpec

#: factors entirely below this magnitude are dropped at construction
PRUNE_TOL = 1e-15

#: hard guard on the number of unknowns for anything that assembles Kronecker
KRONECKER_GUARD = 200_000


def vec(U: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(U).reshape(-1, order="F")


def unvec(v: np.ndarray, shape) -> np.ndarray:
    """Inverse of ``vec`` for a (q_y, q_x) grid matrix."""
    return np.asarray(v).reshape(shape, order="F")


def full_node_grid(domain: DomainSpec, x: DirectionSet, y: DirectionSet):
    """Physical coordinates over all nodes, boundary included; both (Ny+1, Nx+1)."""
    xr = x.basis.nodes_full + domain.x_offset
    yr = y.basis.nodes_full
    L = np.asarray(domain.profile(yr), dtype=float)
    X = L[:, None] * xr[None, :]
    return X, np.broadcast_to(yr[:, None], X.shape).copy()


def expand_with_boundary(U: np.ndarray, x: DirectionSet, y: DirectionSet):
    """Scatter retained dofs into the full node grid (zeros on trimmed rows)."""
    full_shape = (y.basis.n_sub + 1, x.basis.n_sub + 1)
    U = np.asarray(U, dtype=float)
    if U.shape == full_shape:
        return np.array(U, copy=True)
    full = np.zeros(full_shape)
    full[np.ix_(y.basis.dof_map >= 0, x.basis.dof_map >= 0)] = U
    return full


def interior_values(F: np.ndarray, x: DirectionSet, y: DirectionSet):
    """Restrict a full-node-grid sample to the retained dofs."""
    F = np.asarray(F, dtype=float)
    return F[np.ix_(y.basis.dof_map >= 0, x.basis.dof_map >= 0)]


def _check_full_grid(F: np.ndarray, x: DirectionSet, y: DirectionSet) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    want = (y.basis.n_sub + 1, x.basis.n_sub + 1)
    if F.shape != want:
        raise OperatorError(
            f"nodal source must cover the full node grid {want} "
            f"(boundary included), got {F.shape}"
        )
    return F


@dataclass
class GridFunction:
    """Nodal coefficient matrix plus the discretization it belongs to."""

    values: np.ndarray
    bc: BCKind
    degree: int
    n_sub: tuple[int, int]  # (N_x, N_y)

    @property
    def shape(self):
        return self.values.shape

    def vec(self) -> np.ndarray:
        return vec(self.values)

    @classmethod
    def from_vec(cls, v, shape, bc, degree, n_sub) -> "GridFunction":
        return cls(values=unvec(v, shape), bc=bc, degree=degree, n_sub=tuple(n_sub))


class SylvesterOperator:
    """Linear map U -> sum_i G_i U H_i over q_y x q_x grid matrices."""

    def __init__(self, terms, symmetric: bool = False,
                 positive_definite: bool = False):
        cleaned = []
        for G, H in terms:
            G = np.asarray(G, dtype=float)
            H = np.asarray(H, dtype=float)
            if np.max(np.abs(G)) <= PRUNE_TOL or np.max(np.abs(H)) <= PRUNE_TOL:
                continue
            cleaned.append((G, H))
        if not cleaned:
            raise OperatorError("operator has no nonzero terms")
        qy = cleaned[0][0].shape[0]
        qx = cleaned[0][1].shape[0]
        for G, H in cleaned:
            if G.shape != (qy, qy) or H.shape != (qx, qx):
                raise OperatorError("inconsistent term factor shapes")
        self.terms = cleaned
        self.symmetric = symmetric
        self.positive_definite = positive_definite
        self.shape = (qy, qx)

    def __len__(self):
        return len(self.terms)

    def apply(self, U: np.ndarray) -> np.ndarray:
        U = np.asarray(U)
        if U.shape != self.shape:
            raise OperatorError(f"grid shape {U.shape} does not match operator {self.shape}")
        out = np.zeros(self.shape)
        for G, H in self.terms:
            out += G @ U @ H
        return out

    __call__ = apply


def apply(op: SylvesterOperator, U: np.ndarray) -> np.ndarray:
    """Evaluate sum_i G_i U H_i without forming any Kronecker matrix."""
    return op.apply(U)


def to_kronecker(op: SylvesterOperator) -> sp.csr_matrix:
    """Assemble the sparse matrix with to_kronecker(op) @ vec(U) = vec(op(U))."""
    qy, qx = op.shape
    if qx * qy > KRONECKER_GUARD:
        raise OperatorError(
            f"Kronecker assembly guarded at {KRONECKER_GUARD} unknowns, got {qx * qy}"
        )
    out = None
    for G, H in op.terms:
        blk = sp.kron(sp.csr_matrix(H.T), sp.csr_matrix(G), format="csr")
        out = blk if out is None else out + blk
    # drop assembly noise so sparsity reflects the band structure
    out.data[np.abs(out.data) < PRUNE_TOL] = 0.0
    out.eliminate_zeros()
    return out


def is_unit_degenerate(y: DirectionSet) -> bool:
    m = y.mats
    scale = max(np.max(np.abs(m.A)), 1.0)
    return (np.max(np.abs(m.M2)) <= 1e-14 * scale
            and np.max(np.abs(m.C2)) <= 1e-14 * scale
            and np.max(np.abs(m.B1 - m.A)) <= 1e-13 * scale
            and np.max(np.abs(m.M1 - m.M)) <= 1e-13
            and np.max(np.abs(m.M3 - m.M)) <= 1e-13)


def _require_coercive(bc: BCKind, gamma: float) -> None:
    if gamma < 0:
        raise OperatorError("reaction coefficient must be nonnegative")
    if bc is BCKind.NEUMANN and gamma == 0.0:
        raise OperatorError(
            "singular operator: pure Neumann Laplacian needs gamma > 0"
        )


def elliptic_operator(x: DirectionSet, y: DirectionSet, gamma: float = 0.0,
                      lumped: bool = False):
    """Discrete -Laplacian + gamma*identity as a Sylvester term list.

    Returns (operator, rhs_builder); rhs_builder maps the source sampled on
    the FULL node grid (boundary included, since a source need not vanish
    where the solution does) to the weak right-hand side.  On an undeformed
    profile the term list collapses to the classical two-term form with the
    reaction split evenly between the factors, which is what the spectral
    reduction consumes.
    """
    _require_coercive(x.basis.bc, gamma)
    if lumped:
        return _lumped_elliptic(x, y, gamma)
    mx, my = x.mats, y.mats
    if is_unit_degenerate(y):
        Zy = my.A + 0.5 * gamma * my.M
        Zx = mx.A + 0.5 * gamma * mx.M
        op = SylvesterOperator([(Zy, mx.M), (my.M, Zx)],
                               symmetric=True, positive_definite=True)
    else:
        op = SylvesterOperator(
            [(my.M1, mx.A),
             (my.B1 + gamma * my.M3, mx.M),
             (my.M2, mx.B2),
             (-my.C2, mx.C1),
             (-my.C2.T, mx.C1.T)],
            symmetric=True, positive_definite=True)

    def rhs_builder(F: np.ndarray) -> np.ndarray:
        return my.M3_full @ _check_full_grid(F, x, y) @ mx.M_full.T

    return op, rhs_builder


def _lumped_elliptic(x: DirectionSet, y: DirectionSet, gamma: float):
    if x.lumped is None or y.lumped is None:
        raise OperatorError("direction sets were assembled without lumped matrices")
    lx, ly = x.lumped, y.lumped
    A = x.mats.A
    d1 = np.diag(ly.D1)
    mass_left = ly.M0 * d1  # diagonal product M0 D1
    terms = [
        (ly.M0 / d1[:, None], A),                      # D1^-1 M0 U A
        (ly.A1 + gamma * mass_left, lx.M0),
        (np.diag(np.diag(ly.D2) ** 2 / d1) @ ly.M0, lx.A2),
        (-ly.D2 @ ly.C.T, lx.D3 @ lx.C.T),
        (-ly.C @ ly.D2, lx.C @ lx.D3),
    ]
    op = SylvesterOperator(terms, symmetric=True, positive_definite=True)

    def rhs_builder(F: np.ndarray) -> np.ndarray:
        # diagonal lumping never couples a retained test function to a
        # boundary node, so only the interior sample enters
        F = interior_values(_check_full_grid(F, x, y), x, y)
        return mass_left @ F @ lx.M0

    return op, rhs_builder


def parabolic_operator(x: DirectionSet, y: DirectionSet, d_u: float,
                       tau: float, lumped: bool = False):
    """Implicit-Euler step operator mass + d_u*tau*stiffness and its rhs.

    rhs_builder applies the mass weighting to an already source-augmented
    state W = U + tau * f(U) sampled on the full node grid; for tau = 0 the
    operator degenerates exactly to the mass term.
    """
    if d_u <= 0:
        raise OperatorError("diffusion coefficient must be positive")
    if tau < 0:
        raise OperatorError("timestep must be nonnegative")
    mx, my = x.mats, y.mats
    c = d_u * tau
    if lumped:
        if x.lumped is None or y.lumped is None:
            raise OperatorError("direction sets were assembled without lumped matrices")
        lx, ly = x.lumped, y.lumped
        d1 = np.diag(ly.D1)
        mass_left = ly.M0 * d1
        terms = [
            (mass_left + c * ly.A1, lx.M0),
            (c * ly.M0 / d1[:, None], mx.A),
            (c * np.diag(np.diag(ly.D2) ** 2 / d1) @ ly.M0, lx.A2),
            (-c * ly.D2 @ ly.C.T, lx.D3 @ lx.C.T),
            (-c * ly.C @ ly.D2, lx.C @ lx.D3),
        ]
        op = SylvesterOperator(terms, symmetric=True, positive_definite=True)

        def rhs_builder(W: np.ndarray) -> np.ndarray:
            W = interior_values(_check_full_grid(W, x, y), x, y)
            return mass_left @ W @ lx.M0

        return op, rhs_builder

    terms = [
        (my.M3 + c * my.B1, mx.M),
        (c * my.M1, mx.A),
        (c * my.M2, mx.B2),
        (-c * my.C2, mx.C1),
        (-c * my.C2.T, mx.C1.T),
    ]
    op = SylvesterOperator(terms, symmetric=True, positive_definite=True)

    def rhs_builder(W: np.ndarray) -> np.ndarray:
        return my.M3_full @ _check_full_grid(W, x, y) @ mx.M_full.T

    return op, rhs_builder


def mass_operator(x: DirectionSet, y: DirectionSet,
                  lumped: bool = False) -> SylvesterOperator:
    """The plain mass map U -> M3 U M (or its lumped diagonal analogue)."""
    if lumped:
        if x.lumped is None or y.lumped is None:
            raise OperatorError("direction sets were assembled without lumped matrices")
        return SylvesterOperator(
            [(y.lumped.M0 @ y.lumped.D1, x.lumped.M0)],
            symmetric=True, positive_definite=True)
    return SylvesterOperator([(y.mats.M3, x.mats.M)],
                             symmetric=True, positive_definite=True)


def physical_grid(domain: DomainSpec, x: DirectionSet, y: DirectionSet):
    """Physical coordinates (X, Y) of the retained nodal grid, both (q_y, q_x)."""
    xr = x.basis.nodes + domain.x_offset
    yr = y.basis.nodes
    L = np.asarray(domain.profile(yr), dtype=float)
    X = L[:, None] * xr[None, :]
    Y = np.broadcast_to(yr[:, None], X.shape).copy()
    return X, Y


@dataclass
class TermDump:
    """Coordinate-format dump of an operator for debugging/export."""

    terms: list = field(default_factory=list)  # (index, side, row, col, value)

    @classmethod
    def from_operator(cls, op: SylvesterOperator) -> "TermDump":
        rows = []
        for i, (G, H) in enumerate(op.terms):
            for side, mat in (("left", G), ("right", H)):
                r, c = np.nonzero(np.abs(mat) > 0)
                rows.extend((i, side, int(ri), int(ci), float(mat[ri, ci]))
                            for ri, ci in zip(r, c))
        return cls(terms=rows)
