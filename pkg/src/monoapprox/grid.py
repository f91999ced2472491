"""Masked rectangular lattices and the scalar fields that live on them.

Arrays are stored image-style with shape ``(ny, nx)`` and indexed ``[j, i]``,
so node ``(i, j)`` sits at ``(x0 + i*h, y0 + j*h)``.  Cell ``(i, j)`` is the
square with lower-left corner at node ``(i, j)``; cell arrays have shape
``(ny - 1, nx - 1)``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

__all__ = [
    "DomainGrid",
    "ScalarField",
    "VectorField",
    "GridMismatchError",
    "sample_analytic",
    "gradient",
    "sup_distance",
    "lp_grad_distance",
    "cell_gradient_operator",
]


class GridMismatchError(ValueError):
    """Two fields were combined that do not live on the same grid."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DomainGrid:
    """A rectangular lattice with a node mask encoding the open set.

    Parameters
    ----------
    nx, ny : int
        Node counts along x and y (both >= 3).
    h : float
        Grid spacing.
    origin : tuple of float
        Coordinates ``(x0, y0)`` of node ``(0, 0)``.
    node_mask : ndarray of bool, shape (ny, nx), optional
        True where the node lies in the domain.  Defaults to all True.
    """

    nx: int
    ny: int
    h: float
    origin: tuple[float, float] = (0.0, 0.0)
    node_mask: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"need nx, ny >= 3, got {self.nx}x{self.ny}")
        if not (self.h > 0 and np.isfinite(self.h)):
            raise ValueError(f"grid spacing must be positive, got {self.h}")
        mask = self.node_mask
        if mask is None:
            mask = np.ones((self.ny, self.nx), dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (self.ny, self.nx):
            raise ValueError(f"node_mask shape {mask.shape} != {(self.ny, self.nx)}")
        if not mask.any():
            raise ValueError("domain has no nodes")
        object.__setattr__(self, "node_mask", _readonly(mask))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "h", float(self.h))

    # construction helpers -------------------------------------------------

    @classmethod
    def box(cls, xmin: float, xmax: float, ymin: float, ymax: float, h: float,
            mask_fn: Callable | None = None) -> "DomainGrid":
        """Grid covering a box; ``mask_fn(X, Y)`` selects the domain nodes."""
        nx = int(round((xmax - xmin) / h)) + 1
        ny = int(round((ymax - ymin) / h)) + 1
        grid = cls(nx, ny, h, (xmin, ymin))
        if mask_fn is None:
            return grid
        mask = np.asarray(mask_fn(grid.X, grid.Y), dtype=bool)
        return cls(nx, ny, h, (xmin, ymin), mask)

    def with_mask(self, mask: np.ndarray) -> "DomainGrid":
        return DomainGrid(self.nx, self.ny, self.h, self.origin, mask)

    # geometry ---------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @cached_property
    def x(self) -> np.ndarray:
        return self.origin[0] + self.h * np.arange(self.nx)

    @cached_property
    def y(self) -> np.ndarray:
        return self.origin[1] + self.h * np.arange(self.ny)

    @cached_property
    def X(self) -> np.ndarray:
        return np.broadcast_to(self.x[None, :], self.shape)

    @cached_property
    def Y(self) -> np.ndarray:
        return np.broadcast_to(self.y[:, None], self.shape)

    def node_xy(self, i, j):
        return self.origin[0] + self.h * np.asarray(i), self.origin[1] + self.h * np.asarray(j)

    @cached_property
    def cell_mask(self) -> np.ndarray:
        m = self.node_mask
        return _readonly(m[:-1, :-1] & m[:-1, 1:] & m[1:, :-1] & m[1:, 1:])

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        """In-domain nodes with at least one out-of-domain 4-neighbour.

        Neighbours beyond the array edge count as out of domain.
        """
        m = np.pad(self.node_mask, 1, constant_values=False)
        inner = m[1:-1, 1:-1]
        all_in = m[:-2, 1:-1] & m[2:, 1:-1] & m[1:-1, :-2] & m[1:-1, 2:]
        return _readonly(inner & ~all_in)

    @cached_property
    def full_ring_mask(self) -> np.ndarray:
        """In-domain nodes whose whole 8-neighbourhood is in the domain."""
        m = np.pad(self.node_mask, 1, constant_values=False)
        out = m[1:-1, 1:-1].copy()
        for dj in (-1, 0, 1):
            for di in (-1, 0, 1):
                out &= m[1 + dj:m.shape[0] - 1 + dj, 1 + di:m.shape[1] - 1 + di]
        return _readonly(out)

    @property
    def n_nodes(self) -> int:
        return int(self.node_mask.sum())

    def same_as(self, other: "DomainGrid") -> bool:
        return (
            self is other
            or (self.nx == other.nx and self.ny == other.ny and self.h == other.h
                and self.origin == other.origin
                and np.array_equal(self.node_mask, other.node_mask))
        )

    def to_dict(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "h": self.h,
                "x0": self.origin[0], "y0": self.origin[1]}


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real values on the in-domain nodes of a grid; NaN elsewhere."""

    grid: DomainGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        inside = self.grid.node_mask
        bad = inside & ~np.isfinite(v)
        if bad.any():
            j, i = np.argwhere(bad)[0]
            raise ValueError(f"non-finite value at node (i={i}, j={j})")
        v[~inside] = np.nan
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)

    def restrict(self, mask: np.ndarray) -> "ScalarField":
        """Same values on a sub-domain given by ``mask``."""
        sub = self.grid.with_mask(np.asarray(mask, bool) & self.grid.node_mask)
        return ScalarField(sub, np.where(sub.node_mask, self.values, np.nan))

    def require_same_grid(self, other: "ScalarField") -> None:
        if not self.grid.same_as(other.grid):
            raise GridMismatchError("fields live on different grids")

    @property
    def inside(self) -> np.ndarray:
        return self.values[self.grid.node_mask]

    @property
    def vmin(self) -> float:
        return float(self.inside.min())

    @property
    def vmax(self) -> float:
        return float(self.inside.max())

    @property
    def value_range(self) -> float:
        return self.vmax - self.vmin

    def __add__(self, other):
        if isinstance(other, ScalarField):
            self.require_same_grid(other)
            return self.with_values(self.values + other.values)
        return self.with_values(self.values + other)

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            self.require_same_grid(other)
            return self.with_values(self.values - other.values)
        return self.with_values(self.values - other)

    def __mul__(self, a: float):
        return self.with_values(self.values * a)

    __rmul__ = __mul__

    # serialization ----------------------------------------------------------

    def to_json(self) -> str:
        rows = [[None if not np.isfinite(x) else float(x) for x in row] for row in self.values]
        return json.dumps({**self.grid.to_dict(), "values": rows})

    @classmethod
    def from_json(cls, text: str) -> "ScalarField":
        doc = json.loads(text)
        try:
            nx, ny, h = int(doc["nx"]), int(doc["ny"]), float(doc["h"])
            x0, y0 = float(doc.get("x0", 0.0)), float(doc.get("y0", 0.0))
            rows = doc["values"]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed field document: {exc}") from None
        if len(rows) != ny or any(len(r) != nx for r in rows):
            raise ValueError("values array does not match nx, ny")
        vals = np.array([[np.nan if x is None else float(x) for x in r] for r in rows])
        mask = np.isfinite(vals)
        return cls(DomainGrid(nx, ny, h, (x0, y0), mask), vals)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "x", "y", "value"])
        g = self.grid
        for j, i in np.argwhere(g.node_mask):
            w.writerow([i, j, repr(float(g.x[i])), repr(float(g.y[j])), repr(float(self.values[j, i]))])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class VectorField:
    """Cell-centred vector field; NaN on cells outside the cell mask."""

    grid: DomainGrid
    gx: np.ndarray
    gy: np.ndarray

    @property
    def norm(self) -> np.ndarray:
        return np.hypot(self.gx, self.gy)

    def cell_centers(self):
        g = self.grid
        xc = g.x[:-1] + 0.5 * g.h
        yc = g.y[:-1] + 0.5 * g.h
        return np.broadcast_to(xc[None, :], g.cell_mask.shape), np.broadcast_to(yc[:, None], g.cell_mask.shape)


def sample_analytic(f: Callable, grid: DomainGrid) -> ScalarField:
    """Evaluate ``f(x, y)`` at the in-domain nodes.

    ``f`` is called once with coordinate arrays; scalar-only callables are
    vectorized as a fallback.
    """
    X, Y = grid.X, grid.Y
    try:
        with np.errstate(all="ignore"):
            vals = np.asarray(f(X, Y), dtype=float)
        if vals.shape != grid.shape:
            vals = np.broadcast_to(vals, grid.shape).astype(float)
    except (TypeError, ValueError):
        vals = np.vectorize(lambda a, b: float(f(a, b)))(X, Y)
    vals = np.where(grid.node_mask, vals, np.nan)
    bad = grid.node_mask & ~np.isfinite(vals)
    if bad.any():
        j, i = np.argwhere(bad)[0]
        raise ValueError(f"non-finite sample at node (i={i}, j={j}), "
                         f"x={grid.x[i]:.6g}, y={grid.y[j]:.6g}")
    return ScalarField(grid, vals)


def gradient(field: ScalarField) -> VectorField:
    """Cell-centred gradient: mean of the two forward differences per axis."""
    v = field.values
    h = field.grid.h
    gx = 0.5 * ((v[:-1, 1:] - v[:-1, :-1]) + (v[1:, 1:] - v[1:, :-1])) / h
    gy = 0.5 * ((v[1:, :-1] - v[:-1, :-1]) + (v[1:, 1:] - v[:-1, 1:])) / h
    cm = field.grid.cell_mask
    return VectorField(field.grid, np.where(cm, gx, np.nan), np.where(cm, gy, np.nan))


def cell_gradient_operator(grid: DomainGrid):
    """Sparse maps from flattened node values to cell gradients.

    Returns ``(Gx, Gy, cells)`` where ``cells`` are the flat indices of the
    masked cells (rows of ``Gx``/``Gy``) and columns index ``grid.shape``
    flattened nodes.
    """
    import scipy.sparse as sp

    ny, nx = grid.shape
    cj, ci = np.nonzero(grid.cell_mask)
    n = len(ci)
    c0 = cj * nx + ci
    corners = np.stack([c0, c0 + 1, c0 + nx + 1, c0 + nx], axis=1)
    wx = np.array([-1.0, 1.0, 1.0, -1.0]) / (2 * grid.h)
    wy = np.array([-1.0, -1.0, 1.0, 1.0]) / (2 * grid.h)
    rows = np.repeat(np.arange(n), 4)
    Gx = sp.csr_matrix((np.tile(wx, n), (rows, corners.ravel())), shape=(n, nx * ny))
    Gy = sp.csr_matrix((np.tile(wy, n), (rows, corners.ravel())), shape=(n, nx * ny))
    return Gx, Gy, cj * (nx - 1) + ci


def sup_distance(a: ScalarField, b: ScalarField) -> float:
    a.require_same_grid(b)
    m = a.grid.node_mask
    return float(np.max(np.abs(a.values[m] - b.values[m])))


def lp_grad_distance(a: ScalarField, b: ScalarField, p: float) -> float:
    """``(sum_cells |grad a - grad b|^p h^2)^(1/p)``."""
    a.require_same_grid(b)
    if not (1 < p < np.inf):
        raise ValueError(f"p must lie in (1, inf), got {p}")
    d = gradient(a - b)
    n = d.norm[a.grid.cell_mask]
    return float(np.sum(n ** p) * a.grid.h ** 2) ** (1.0 / p)
