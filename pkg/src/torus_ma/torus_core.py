"""Geometry of the flat torus [0,1)^n: points, distances, periodic grids.

Grid nodes sit at coordinates j/G (no half-cell offset), so the lattice
(1/k)Z^n is a subgrid whenever k divides G.  Grid fields are restricted to
n in {1, 2}; plain torus points support any dimension.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch, InvalidInput

__all__ = [
    "wrap",
    "torus_delta",
    "torus_distance",
    "cost",
    "GridField",
    "DiscreteMeasure",
    "lift_eval",
    "quadrature",
]


def wrap(p) -> np.ndarray:
    """Map a point of R^n to its canonical representative in [0,1)^n."""
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise InvalidInput("non-finite coordinates: %r" % (p,))
    return np.mod(p, 1.0)


def torus_delta(x, y) -> np.ndarray:
    """Per-axis shortest signed displacement from y to x, in (-1/2, 1/2]."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return d - np.round(d)


def torus_distance(x, y) -> float:
    """Quotient distance d(x, y) = min over integer shifts of |x - y - m|."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise InvalidInput("dimension mismatch: %s vs %s" % (x.shape, y.shape))
    return float(np.sqrt(np.sum(torus_delta(x, y) ** 2)))


def cost(x, y) -> float:
    """Transport cost c(x, y) = d(x, y)^2 / 2."""
    return 0.5 * torus_distance(x, y) ** 2


@dataclass(frozen=True)
class GridField:
    """Real-valued function on the torus sampled at the nodes j/G.

    values has shape (G,) in 1-D and (G, G) in 2-D, row-major with axis a
    indexing coordinate a.
    """

    dim: int
    resolution: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise InvalidInput("grid fields support dim 1 or 2, got %d" % self.dim)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.resolution,) * self.dim:
            raise InvalidInput(
                "values shape %s does not match (G,)*dim with G=%d, dim=%d"
                % (v.shape, self.resolution, self.dim)
            )
        if not np.all(np.isfinite(v)):
            raise InvalidInput("grid field contains non-finite values")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, dim: int, resolution: int) -> "GridField":
        return cls(dim, resolution, np.zeros((resolution,) * dim))

    @classmethod
    def from_function(cls, dim: int, resolution: int, f) -> "GridField":
        """Sample f at the grid nodes; f takes arrays of shape (..., dim)."""
        pts = cls.zeros(dim, resolution).nodes()
        vals = np.asarray(f(pts), dtype=float).reshape((resolution,) * dim)
        return cls(dim, resolution, vals)

    def nodes(self) -> np.ndarray:
        """All grid nodes as an array of shape (G,)*dim + (dim,)."""
        G = self.resolution
        axes = [np.arange(G) / G] * self.dim
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def interpolate(self, x) -> np.ndarray:
        """Periodic multilinear interpolation at points of shape (..., dim)."""
        x = wrap(x)
        if x.shape[-1] != self.dim:
            raise InvalidInput("point dimension %d != grid dim %d" % (x.shape[-1], self.dim))
        G = self.resolution
        t = x * G
        i0 = np.floor(t).astype(int) % G
        frac = t - np.floor(t)
        if self.dim == 1:
            f, i = frac[..., 0], i0[..., 0]
            return (1 - f) * self.values[i] + f * self.values[(i + 1) % G]
        fx, fy = frac[..., 0], frac[..., 1]
        ix, iy = i0[..., 0], i0[..., 1]
        jx, jy = (ix + 1) % G, (iy + 1) % G
        v = self.values
        return (
            (1 - fx) * (1 - fy) * v[ix, iy]
            + fx * (1 - fy) * v[jx, iy]
            + (1 - fx) * fy * v[ix, jy]
            + fx * fy * v[jx, jy]
        )

    def with_values(self, values: np.ndarray) -> "GridField":
        return GridField(self.dim, self.resolution, values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# %d,%d\n" % (self.dim, self.resolution))
        for v in self.values.ravel():
            buf.write("%.17g\n" % v)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "GridField":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("#"):
            raise InvalidInput("missing '# dim,G' header")
        dim, G = (int(s) for s in lines[0][1:].split(","))
        vals = np.array([float(s) for s in lines[1:]])
        return cls(dim, G, vals.reshape((G,) * dim))


def quadrature(f: GridField) -> float:
    """Integral of f over the torus: the periodic trapezoid rule G^-n * sum."""
    return float(np.mean(f.values))


def lift_eval(phi: GridField, x) -> float:
    """Value at x in R^n of the periodically-convex lift phi(wrap(x)) + |x|^2/2."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidInput("non-finite point")
    return float(phi.interpolate(wrap(x)) + 0.5 * np.sum(x**2))


class DiscreteMeasure:
    """Probability measure on the torus: weighted atoms or grid-cell densities.

    Exactly one representation is populated.  Grid measures store a density
    field; the mass of cell j is density[j] / G^n.
    """

    MASS_TOL = 1e-12

    def __init__(self, *, atoms=None, grid: GridField | None = None, _skip_checks=False):
        if (atoms is None) == (grid is None):
            raise InvalidInput("exactly one of atoms / grid must be given")
        self.grid = grid
        if atoms is not None:
            pts, w = atoms
            pts = np.atleast_2d(np.asarray(pts, dtype=float))
            w = np.asarray(w, dtype=float)
            self.atom_points = wrap(pts)
            self.atom_weights = w
        else:
            self.atom_points = None
            self.atom_weights = None
        if not _skip_checks:
            self._check()

    def _check(self):
        if self.grid is not None:
            if np.any(self.grid.values < -1e-15):
                raise InvalidInput("negative density")
        else:
            if np.any(self.atom_weights < -1e-15):
                raise InvalidInput("negative atom weight")
        if abs(self.total_mass() - 1.0) > self.MASS_TOL:
            raise InvalidInput("total mass %.3e != 1" % self.total_mass())

    @classmethod
    def from_atoms(cls, points, weights=None) -> "DiscreteMeasure":
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if weights is None:
            weights = np.full(len(points), 1.0 / len(points))
        return cls(atoms=(points, weights))

    @classmethod
    def from_grid_density(cls, density: GridField, normalize=False) -> "DiscreteMeasure":
        if normalize:
            density = density.with_values(density.values / np.mean(density.values))
        return cls(grid=density)

    @classmethod
    def uniform(cls, dim: int, resolution: int) -> "DiscreteMeasure":
        return cls(grid=GridField(dim, resolution, np.ones((resolution,) * dim)))

    @property
    def is_grid(self) -> bool:
        return self.grid is not None

    @property
    def dim(self) -> int:
        return self.grid.dim if self.is_grid else self.atom_points.shape[1]

    def total_mass(self) -> float:
        if self.is_grid:
            return quadrature(self.grid)
        return float(np.sum(self.atom_weights))

    def cell_masses(self) -> np.ndarray:
        """Flattened per-cell masses of a grid measure."""
        if not self.is_grid:
            raise GridMismatch("cell_masses requires a grid measure")
        G, n = self.grid.resolution, self.grid.dim
        return self.grid.values.ravel() / G**n

    def density_at(self, x) -> np.ndarray:
        """Density w.r.t. dx at points x (grid measures only)."""
        if not self.is_grid:
            raise GridMismatch("density_at requires a grid measure")
        return self.grid.interpolate(x)

    def require_grid(self, dim: int, resolution: int) -> GridField:
        if not self.is_grid:
            raise GridMismatch("expected a grid measure")
        if self.grid.dim != dim or self.grid.resolution != resolution:
            raise GridMismatch(
                "measure grid (%d, G=%d) does not match (%d, G=%d)"
                % (self.grid.dim, self.grid.resolution, dim, resolution)
            )
        return self.grid
