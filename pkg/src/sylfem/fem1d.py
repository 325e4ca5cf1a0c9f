"""1D Lagrange bases on [0, 1] and the matrices feeding the 2D tensor forms.

Every 2D operator in this package is assembled from one-dimensional
ingredients: the standard stiffness/mass pair (A, M), seven weighted
matrices carrying either the domain profile or the reference coordinate as
integration weight, and (for piecewise-linear elements) their lumped
counterparts.  Matrices are returned dense; at the problem sizes targeted
here the bands dominate and dense storage keeps the downstream matrix
algebra plain numpy.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from .exceptions import AssemblyError, GeometryError
from .geometry import UNIT, DomainSpec, ProfileFn

MAX_DEGREE = 4


class BCKind(Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


def dof_count(N: int, bc: BCKind) -> int:
    """Retained basis size: N - 1 for Dirichlet, N + 1 for Neumann."""
    return N - 1 if bc is BCKind.DIRICHLET else N + 1


@lru_cache(maxsize=None)
def _shape_tables(k: int, nq: int):
    """Lagrange shape values/derivatives at Gauss points of the unit element.

    Local nodes are the k+1 equispaced points of [0, 1]; derivatives are with
    respect to the unit element coordinate (divide by the element width for
    physical derivatives).
    """
    loc = np.linspace(0.0, 1.0, k + 1)
    xg, wg = leggauss(nq)
    xq = 0.5 * (xg + 1.0)
    wq = 0.5 * wg
    psi, dpsi = _lagrange_eval(loc, xq)
    return loc, xq, wq, psi, dpsi


def _lagrange_eval(nodes: np.ndarray, x: np.ndarray):
    """Values and derivatives of the Lagrange basis on ``nodes`` at ``x``."""
    n = len(nodes)
    x = np.asarray(x, dtype=float)
    psi = np.ones((n, x.size))
    dpsi = np.zeros((n, x.size))
    for a in range(n):
        for b in range(n):
            if b != a:
                psi[a] *= (x - nodes[b]) / (nodes[a] - nodes[b])
        acc = np.zeros(x.size)
        for c in range(n):
            if c == a:
                continue
            term = np.full(x.size, 1.0 / (nodes[a] - nodes[c]))
            for b in range(n):
                if b != a and b != c:
                    term *= (x - nodes[b]) / (nodes[a] - nodes[b])
            acc += term
        dpsi[a] = acc
    return psi, dpsi


@dataclass(frozen=True)
class Basis1D:
    """Piecewise ``degree`` Lagrange basis on the uniform N-subinterval mesh.

    Global nodes sit at m/N for m = 0..N; element e covers nodes
    e*k .. e*k + k.  Dirichlet trimming happens at assembly through
    ``dof_map`` (-1 marks an eliminated boundary node), so the larger
    untrimmed matrices are never formed.
    """

    degree: int
    n_sub: int
    bc: BCKind

    def __post_init__(self):
        if not 1 <= self.degree <= MAX_DEGREE:
            raise AssemblyError(f"degree must be in 1..{MAX_DEGREE}, got {self.degree}")
        if self.n_sub < 2:
            raise AssemblyError(f"need at least 2 subintervals, got {self.n_sub}")
        if self.n_sub % self.degree != 0:
            raise AssemblyError(
                f"subinterval count {self.n_sub} is not divisible by degree {self.degree}"
            )

    @property
    def q(self) -> int:
        return dof_count(self.n_sub, self.bc)

    @property
    def n_elements(self) -> int:
        return self.n_sub // self.degree

    @property
    def element_width(self) -> float:
        return self.degree / self.n_sub

    @property
    def nodes_full(self) -> np.ndarray:
        return np.arange(self.n_sub + 1) / self.n_sub

    @property
    def nodes(self) -> np.ndarray:
        """Coordinates of the retained (post-trim) nodes."""
        if self.bc is BCKind.DIRICHLET:
            return self.nodes_full[1:-1]
        return self.nodes_full

    @property
    def dof_map(self) -> np.ndarray:
        """Global node index -> dof index, -1 for trimmed boundary nodes."""
        full = np.arange(self.n_sub + 1)
        if self.bc is BCKind.DIRICHLET:
            dm = full - 1
            dm[0] = -1
            dm[-1] = -1
            return dm
        return full

    @property
    def n_quad(self) -> int:
        # over-integration keeps weight-interpolation error below the FEM error
        return max(self.degree + 2, 5)

    def element_nodes(self, e: int) -> np.ndarray:
        return e * self.degree + np.arange(self.degree + 1)

    def quad_tables(self, n_quad: int | None = None):
        """(xq, wq, psi, dpsi) on the unit element; weights sum to 1."""
        nq = self.n_quad if n_quad is None else n_quad
        _, xq, wq, psi, dpsi = _shape_tables(self.degree, nq)
        return xq, wq, psi, dpsi

    def evaluate(self, x, trimmed: bool = True) -> np.ndarray:
        """Basis values at the points ``x``, shape (len(x), q).

        With ``trimmed=False`` the boundary functions are included regardless
        of the boundary condition (useful for partition-of-unity checks).
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
            raise AssemblyError("evaluation points must lie in [0, 1]")
        k, h = self.degree, self.element_width
        elem = np.clip((x / h).astype(int), 0, self.n_elements - 1)
        xi = x / h - elem
        loc = np.linspace(0.0, 1.0, k + 1)
        ncols = self.n_sub + 1 if not trimmed else self.q
        out = np.zeros((x.size, ncols))
        dmap = np.arange(self.n_sub + 1) if not trimmed else self.dof_map
        for e in np.unique(elem):
            sel = elem == e
            psi, _ = _lagrange_eval(loc, xi[sel])
            for a, g in enumerate(self.element_nodes(e)):
                j = dmap[g]
                if j >= 0:
                    out[sel, j] += psi[a]
        return out


def build_basis(k: int, N: int, bc: BCKind) -> Basis1D:
    """Construct the degree-k basis on N subintervals with the given BC."""
    return Basis1D(degree=k, n_sub=N, bc=bc)


@dataclass(frozen=True)
class Matrix1DSet:
    """Standard plus weighted 1D matrices of one coordinate direction.

    A, M carry no weight.  B1, C2, M1, M2, M3 weight the integrand by the
    profile (L, L', 1/L, L'^2/L, L); B2, C1 weight by the reference
    coordinate (c^2, c) where c = node coordinate + ``coord_offset``.

    M_full and M3_full are the rectangular mass couplings of the retained
    test functions against ALL trial nodes (shape q x (N+1)); right-hand
    sides built from nodal source values need them, because a source need
    not vanish where the solution does.  Under Neumann they coincide with
    M and M3.
    """

    basis: Basis1D
    A: np.ndarray
    M: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    M1: np.ndarray
    M2: np.ndarray
    M3: np.ndarray
    M_full: np.ndarray
    M3_full: np.ndarray
    profile: ProfileFn = UNIT
    coord_offset: float = 0.0

    def named(self) -> dict[str, np.ndarray]:
        return {"A": self.A, "M": self.M, "B1": self.B1, "B2": self.B2,
                "C1": self.C1, "C2": self.C2, "M1": self.M1, "M2": self.M2,
                "M3": self.M3, "M_full": self.M_full, "M3_full": self.M3_full}


@dataclass(frozen=True)
class LumpedSet:
    """Lumped piecewise-linear matrices of one coordinate direction.

    M0, D1, D2, D3 are diagonal; C, A1, A2 tridiagonal.  Lumping realizes the
    element-wise interpolant as the trapezoid rule on each element, which for
    the mass products reduces to classical row-sum lumping.
    """

    basis: Basis1D
    M0: np.ndarray
    C: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    D3: np.ndarray
    profile: ProfileFn = UNIT
    coord_offset: float = 0.0

    def named(self) -> dict[str, np.ndarray]:
        return {"M0": self.M0, "C": self.C, "A1": self.A1, "A2": self.A2,
                "D1": self.D1, "D2": self.D2, "D3": self.D3}


def _scatter(mat: np.ndarray, loc: np.ndarray, dofs: np.ndarray) -> None:
    keep = dofs >= 0
    idx = dofs[keep]
    mat[np.ix_(idx, idx)] += loc[np.ix_(keep, keep)]


def assemble_standard(basis: Basis1D, n_quad: int | None = None):
    """Unweighted stiffness and mass matrices (A, M), both q x q."""
    xq, wq, psi, dpsi = basis.quad_tables(n_quad)
    h = basis.element_width
    q = basis.q
    A = np.zeros((q, q))
    M = np.zeros((q, q))
    a_loc = (dpsi * wq) @ dpsi.T / h
    m_loc = (psi * wq) @ psi.T * h
    dmap = basis.dof_map
    for e in range(basis.n_elements):
        dofs = dmap[basis.element_nodes(e)]
        _scatter(A, a_loc, dofs)
        _scatter(M, m_loc, dofs)
    return A, M


def assemble_weighted(basis: Basis1D, profile: ProfileFn = UNIT,
                      coord_offset: float = 0.0,
                      n_quad: int | None = None) -> Matrix1DSet:
    """All 1D matrices for one direction, weighted by profile and coordinate.

    ``coord_offset`` shifts the coordinate weight; pass the left end of the
    reference x interval (-1/2 for symmetric domains) when assembling the x
    direction.
    """
    xq, wq, psi, dpsi = basis.quad_tables(n_quad)
    h = basis.element_width
    q = basis.q
    n_nodes = basis.n_sub + 1
    mats = {name: np.zeros((q, q)) for name in
            ("A", "M", "B1", "B2", "C1", "C2", "M1", "M2", "M3")}
    mats["M_full"] = np.zeros((q, n_nodes))
    mats["M3_full"] = np.zeros((q, n_nodes))
    dmap = basis.dof_map
    for e in range(basis.n_elements):
        x_glob = (e + xq) * h
        w = np.asarray(profile(x_glob), dtype=float)
        if np.any(w <= 0.0):
            raise GeometryError(
                f"profile '{profile.name}' nonpositive inside element {e}"
            )
        dw = np.asarray(profile.deriv(x_glob), dtype=float)
        c = x_glob + coord_offset
        nodes = basis.element_nodes(e)
        dofs = dmap[nodes]
        # physical scalings: values pick up h, derivatives 1/h
        dd = {"A": np.ones_like(w), "B1": w, "B2": c * c}
        for name, wt in dd.items():
            _scatter(mats[name], (dpsi * (wq * wt)) @ dpsi.T / h, dofs)
        vv = {"M": np.ones_like(w), "M1": 1.0 / w, "M2": dw * dw / w, "M3": w}
        for name, wt in vv.items():
            _scatter(mats[name], (psi * (wq * wt)) @ psi.T * h, dofs)
        # first index differentiated: entries int psi_i' psi_j * weight
        _scatter(mats["C1"], (dpsi * (wq * c)) @ psi.T, dofs)
        _scatter(mats["C2"], (dpsi * (wq * dw)) @ psi.T, dofs)
        # trimmed test row, untrimmed trial column
        for name, wt in (("M_full", np.ones_like(w)), ("M3_full", w)):
            loc = (psi * (wq * wt)) @ psi.T * h
            keep = dofs >= 0
            mats[name][np.ix_(dofs[keep], nodes)] += loc[keep, :]
    return Matrix1DSet(basis=basis, profile=profile, coord_offset=coord_offset,
                       **mats)


def assemble_lumped(basis: Basis1D, profile: ProfileFn = UNIT,
                    coord_offset: float = 0.0) -> LumpedSet:
    """Lumped matrix set; only defined for piecewise-linear elements."""
    if basis.degree != 1:
        raise AssemblyError("lumped assembly supports degree-1 elements only")
    N = basis.n_sub
    h = 1.0 / N
    q = basis.q
    nodes_full = basis.nodes_full
    dmap = basis.dof_map

    M0 = np.zeros((q, q))
    C = np.zeros((q, q))
    A1 = np.zeros((q, q))
    A2 = np.zeros((q, q))

    w_nodes = np.asarray(profile(nodes_full), dtype=float)
    if np.any(w_nodes <= 0.0):
        raise GeometryError(f"profile '{profile.name}' nonpositive at a mesh node")
    dw_nodes = np.asarray(profile.deriv(nodes_full), dtype=float)
    c_nodes = nodes_full + coord_offset

    grad = np.array([[1.0, -1.0], [-1.0, 1.0]])
    conv_loc = np.array([[-0.5, -0.5], [0.5, 0.5]])  # int psi_i' psi_j, exact
    for e in range(N):
        dofs = dmap[[e, e + 1]]
        # trapezoid of the weight over the element; gradients are constant
        _scatter(M0, np.diag([h / 2, h / 2]), dofs)
        _scatter(C, conv_loc, dofs)
        _scatter(A1, grad * (w_nodes[e] + w_nodes[e + 1]) / (2 * h), dofs)
        _scatter(A2, grad * (c_nodes[e] ** 2 + c_nodes[e + 1] ** 2) / (2 * h), dofs)

    keep = dmap >= 0
    D1 = np.diag(w_nodes[keep])
    D2 = np.diag(dw_nodes[keep])
    D3 = np.diag(c_nodes[keep])
    return LumpedSet(basis=basis, M0=M0, C=C, A1=A1, A2=A2,
                     D1=D1, D2=D2, D3=D3,
                     profile=profile, coord_offset=coord_offset)


@dataclass(frozen=True)
class DirectionSet:
    """Basis plus assembled matrices of one coordinate direction."""

    basis: Basis1D
    mats: Matrix1DSet
    lumped: LumpedSet | None = None

    @property
    def q(self) -> int:
        return self.basis.q


def build_direction_sets(domain: DomainSpec, k: int, n_sub,
                         bc: BCKind, lumped: bool = False):
    """Assemble the (x, y) direction sets of a tensor discretization.

    ``n_sub`` is either a single subinterval count or a pair (N_x, N_y).
    The x direction carries the coordinate weights (shifted for symmetric
    domains); the y direction carries the profile weights.
    """
    if np.isscalar(n_sub):
        nx = ny = int(n_sub)
    else:
        nx, ny = (int(v) for v in n_sub)
    bx = build_basis(k, nx, bc)
    by = build_basis(k, ny, bc)
    off = domain.x_offset
    x_set = DirectionSet(
        basis=bx,
        mats=assemble_weighted(bx, UNIT, coord_offset=off),
        lumped=assemble_lumped(bx, UNIT, coord_offset=off) if lumped else None,
    )
    y_set = DirectionSet(
        basis=by,
        mats=assemble_weighted(by, domain.profile),
        lumped=assemble_lumped(by, domain.profile) if lumped else None,
    )
    return x_set, y_set
