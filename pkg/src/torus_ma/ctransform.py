"""c-convex calculus on the torus.

c-transform, c-convex projection, c-gradient maps, the weak Monge-Ampere
measure (pushforward of dx by the c-gradient of the conjugate) and the
functional xi(phi) = integral of phi^c.

The cost c(x,y) = d(x,y)^2/2 is separable across axes, so the 2-D discrete
c-transform factors into two 1-D max-plus passes; in 1-D it is a direct
exhaustive maximum over grid nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NegativeDeterminant
from .torus_core import DiscreteMeasure, GridField, quadrature

__all__ = [
    "c_transform",
    "project_cconvex",
    "c_gradient",
    "CGradientField",
    "ma_measure",
    "ma_hessian",
    "xi",
]

#: absolute tolerance below which two candidate maximizers count as tied
TIE_TOL = 1e-9

_COST_CACHE: dict[int, np.ndarray] = {}


def _cost_matrix_1d(G: int) -> np.ndarray:
    """C[i, j] = c(i/G, j/G) for one axis."""
    C = _COST_CACHE.get(G)
    if C is None:
        t = np.arange(G) / G
        d = t[:, None] - t[None, :]
        d -= np.round(d)
        C = 0.5 * d * d
        _COST_CACHE[G] = C
    return C


def _ctransform_values(phi: GridField):
    """phi^c node values together with the argmax node (flat index) per output node.

    The argmax array doubles as the exact subgradient data of the discrete
    xi functional: d xi / d phi_i = -(count of output nodes whose max is
    attained at i) / G^n.
    """
    G = phi.resolution
    C = _cost_matrix_1d(G)
    if phi.dim == 1:
        S = -C - phi.values[:, None]  # S[i, j] = -c(x_i, y_j) - phi(x_i)
        arg = np.argmax(S, axis=0)
        return S[arg, np.arange(G)], arg
    # separable two-pass max-plus: first maximize over x2, then over x1
    # M[i1, j2] = max_{i2} (-C[i2, j2] - phi[i1, i2]), with the argmax kept
    inner = -C[None, :, :] - phi.values[:, :, None]  # (i1, i2, j2)
    arg2 = np.argmax(inner, axis=1)  # (i1, j2)
    M = np.take_along_axis(inner, arg2[:, None, :], axis=1)[:, 0, :]
    outer = -C[:, :, None] + M[:, None, :]  # (i1, j1, j2)
    arg1 = np.argmax(outer, axis=0)  # (j1, j2)
    vals = np.take_along_axis(outer, arg1[None, :, :], axis=0)[0]
    arg = arg1 * G + np.take_along_axis(arg2, arg1, axis=0)
    return vals, arg


def c_transform(phi: GridField) -> GridField:
    """phi^c(y) = max_x [-c(x, y) - phi(x)], maximized over grid nodes."""
    vals, _ = _ctransform_values(phi)
    return phi.with_values(vals)


def c_transform_argmax_counts(phi: GridField) -> np.ndarray:
    """Per-node counts of how often each x node attains the c-transform max.

    Dividing by G^n gives minus the subgradient of the discrete xi at phi.
    """
    _, arg = _ctransform_values(phi)
    Gn = phi.resolution**phi.dim
    return np.bincount(arg.ravel(), minlength=Gn).astype(float)


def project_cconvex(phi: GridField) -> GridField:
    """The double transform (phi^c)^c: the largest c-convex minorant of phi."""
    return c_transform(c_transform(phi))


def xi(phi: GridField) -> float:
    """xi(phi) = integral of phi^c over the torus."""
    return quadrature(c_transform(phi))


@dataclass
class CGradientField:
    """The c-gradient map node -> node, with an undefined-mask at ties.

    target_index holds flat indices into the grid (row-major); map_coords the
    corresponding torus coordinates, shape (G,)*dim + (dim,).  Undefined
    entries keep their best candidate in target_index so that mass-preserving
    pushforwards remain possible; defined_mask records where the gradient is
    genuinely single-valued.
    """

    dim: int
    resolution: int
    target_index: np.ndarray = field(repr=False)
    defined_mask: np.ndarray = field(repr=False)

    @property
    def map_coords(self) -> np.ndarray:
        G, n = self.resolution, self.dim
        idx = self.target_index
        if n == 1:
            coords = (idx / G)[..., None]
        else:
            coords = np.stack([idx // G / G, idx % G / G], axis=-1)
        return coords

    def fraction_defined(self) -> float:
        return float(np.mean(self.defined_mask))


def _resolve_row(S_row: np.ndarray, G: int, dim: int):
    """Pick the maximizer of one row of scores; detect spread-out ties.

    Returns (flat index, defined flag).  Ties within tie_tol that stay inside
    one grid cell resolve to the lexicographically smallest node; ties spread
    farther than one cell mark the node undefined.
    """
    best = S_row.max()
    cand = np.flatnonzero(S_row >= best - TIE_TOL)
    if cand.size == 1:
        return int(cand[0]), True
    if dim == 1:
        coords = cand[:, None] / G
    else:
        coords = np.stack([cand // G, cand % G], axis=1) / G
    # max pairwise torus distance among candidates, per axis
    spread = 0.0
    for a in range(dim):
        c = np.sort(coords[:, a])
        gaps = np.diff(np.concatenate([c, [c[0] + 1.0]]))
        spread = max(spread, 1.0 - gaps.max())
    if spread > 1.0 / G + 1e-12:
        return int(cand[0]), False
    # within one cell: lexicographically smallest coordinate
    order = np.lexsort(coords.T[::-1])
    return int(cand[order[0]]), True


def c_gradient(phi: GridField) -> CGradientField:
    """Map each node x to the grid node y maximizing -c(x,y) - phi^c(y).

    For c-convex phi this is the optimal-transport map associated with phi;
    callers holding general phi should project first (the result then refers
    to (phi^c)^c).
    """
    psi = c_transform(phi)  # phi^c
    G, n = phi.resolution, phi.dim
    C = _cost_matrix_1d(G)
    Gn = G**n

    def resolve_block(S, target, defined, offset):
        # S: (rows, Gn) scores; vectorized fast path, slow path only at ties
        arg = np.argmax(S, axis=1)
        rows = np.arange(S.shape[0])
        best = S[rows, arg]
        tied = np.sum(S >= best[:, None] - TIE_TOL, axis=1) > 1
        target[offset + rows] = arg
        defined[offset + rows] = True
        for r in np.flatnonzero(tied):
            target[offset + r], defined[offset + r] = _resolve_row(S[r], G, n)

    target = np.empty(Gn, dtype=np.int64)
    defined = np.empty(Gn, dtype=bool)
    if n == 1:
        S = -C - psi.values[None, :]  # S[i, j] = -c(x_i, y_j) - psi(y_j)
        resolve_block(S, target, defined, 0)
    else:
        for i1 in range(G):
            # scores for x = (i1, i2), all y: (i2, j1, j2)
            S = -C[i1][None, :, None] - C[:, None, :] - psi.values[None, :, :]
            resolve_block(S.reshape(G, Gn), target, defined, i1 * G)
    return CGradientField(n, G, target.reshape((G,) * n), defined.reshape((G,) * n))


def ma_measure(phi: GridField) -> DiscreteMeasure:
    """The weak Monge-Ampere measure MA(phi): pushforward of dx by grad^c phi^c.

    Each grid node carries weight G^-n and is binned at its image node's cell.
    """
    T = c_gradient(c_transform(phi))
    G, n = phi.resolution, phi.dim
    Gn = G**n
    counts = np.bincount(T.target_index.ravel(), minlength=Gn) / Gn
    density = counts.reshape((G,) * n) * Gn
    return DiscreteMeasure.from_grid_density(phi.with_values(density))


def ma_hessian(phi: GridField) -> GridField:
    """det(D^2 phi + I) by centered second differences; requires positivity.

    Raises NegativeDeterminant when the discrete determinant is <= 0 at any
    node (phi fails quasi-convexity there).
    """
    G = phi.resolution
    v = phi.values
    if phi.dim == 1:
        d2 = (np.roll(v, -1) - 2 * v + np.roll(v, 1)) * G**2
        det = d2 + 1.0
    else:
        dxx = (np.roll(v, -1, axis=0) - 2 * v + np.roll(v, 1, axis=0)) * G**2
        dyy = (np.roll(v, -1, axis=1) - 2 * v + np.roll(v, 1, axis=1)) * G**2
        dxy = (
            np.roll(np.roll(v, -1, axis=0), -1, axis=1)
            - np.roll(np.roll(v, -1, axis=0), 1, axis=1)
            - np.roll(np.roll(v, 1, axis=0), -1, axis=1)
            + np.roll(np.roll(v, 1, axis=0), 1, axis=1)
        ) * G**2 / 4.0
        det = (dxx + 1.0) * (dyy + 1.0) - dxy**2
    if np.any(det <= 0):
        raise NegativeDeterminant(
            "discrete Monge-Ampere density non-positive at %d of %d nodes"
            % (int(np.sum(det <= 0)), det.size)
        )
    return phi.with_values(det)
