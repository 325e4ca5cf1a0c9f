"""Weighted L2 error norms on the physical domain and convergence rates.

Errors are integrated element by element on the reference square with the
width profile as Jacobian weight.  The default metric compares the discrete
solution against the nodal interpolant of the exact solution (the quantity
whose decay the solver benchmarks track, superconvergent for even degrees);
``metric='exact'`` samples the exact solution at the quadrature points
instead, giving the plain L2 distance.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ConfigError
from .fem1d import BCKind, DirectionSet
from .geometry import DomainSpec
from .operators import expand_with_boundary, full_node_grid, physical_grid


def exact_nodal(domain, x, y, exact, t=None) -> np.ndarray:
    """Exact solution sampled at the retained physical nodes."""
    X, Y = physical_grid(domain, x, y)
    return exact(X, Y) if t is None else exact(X, Y, t)


def l2_error(domain: DomainSpec, x: DirectionSet, y: DirectionSet,
             U: np.ndarray, exact, t=None, metric: str = "nodal",
             n_quad: int | None = None) -> float:
    """Weighted L2(physical domain) norm of the discretization error.

    ``metric='nodal'`` integrates the finite element interpolant of
    (U - exact at nodes); ``metric='exact'`` integrates (u_h - exact) with
    the exact solution evaluated at quadrature points.
    """
    if metric not in ("nodal", "exact"):
        raise ConfigError(f"unknown error metric '{metric}'")
    k = x.basis.degree
    nq = n_quad if n_quad is not None else k + 2
    xq, wx, psx, _ = x.basis.quad_tables(nq)
    _, wy, psy, _ = y.basis.quad_tables(nq)
    hx, hy = x.basis.element_width, y.basis.element_width
    nex, ney = x.basis.n_elements, y.basis.n_elements

    gx = np.arange(nex)[:, None] * k + np.arange(k + 1)[None, :]
    gy = np.arange(ney)[:, None] * k + np.arange(k + 1)[None, :]

    Ufull = expand_with_boundary(np.asarray(U, dtype=float), x, y)
    if metric == "nodal":
        Xn, Yn = full_node_grid(domain, x, y)
        ue_n = exact(Xn, Yn) if t is None else exact(Xn, Yn, t)
        if x.basis.bc is BCKind.DIRICHLET:
            # homogeneous data: the interpolant of the exact solution keeps
            # exact boundary zeros
            ue_n = np.array(ue_n, copy=True)
            ue_n[0, :] = ue_n[-1, :] = 0.0
            ue_n[:, 0] = ue_n[:, -1] = 0.0
        field = Ufull - ue_n
    else:
        field = Ufull

    Fg = field[gy[:, :, None, None], gx[None, None, :, :]]  # (ey, a, ex, b)
    vals = np.einsum("aq,eaxb,bp->eqxp", psy, Fg, psx)

    yq = (np.arange(ney)[:, None] + xq[None, :]) * hy          # (ey, qy)
    Lw = np.asarray(domain.profile(yq), dtype=float)

    if metric == "exact":
        xq_ref = (np.arange(nex)[:, None] + xq[None, :]) * hx + domain.x_offset
        Xq = Lw[:, :, None, None] * xq_ref[None, None, :, :]
        Yq = np.broadcast_to(yq[:, :, None, None], Xq.shape)
        ue_q = exact(Xq, Yq) if t is None else exact(Xq, Yq, t)
        vals = vals - ue_q

    w2 = wy[None, :, None, None] * wx[None, None, None, :] * Lw[:, :, None, None]
    return float(np.sqrt(hy * hx * np.sum(w2 * vals ** 2)))


def observed_orders(errors) -> np.ndarray:
    """log2 error ratios between consecutive rows of a mesh-halving ladder."""
    e = np.asarray(errors, dtype=float)
    return np.log2(e[:-1] / e[1:])
