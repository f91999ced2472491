"""Level partitions of a field: bands between consecutive levels and thin lenses around them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage as ndi

from .grid import ScalarField
from .levelset import snap_tolerance

__all__ = ["LevelPartition", "BandPartition", "LensPartition", "label_intervals", "free_nodes"]

_FOUR = ndi.generate_binary_structure(2, 1)


def label_intervals(field: ScalarField, intervals: list[tuple[float, float]], snap: float | None = None):
    """Label the 4-connected components of ``{lo < u < hi}`` for each interval.

    Nodes within ``snap`` of an interval end point are left out.  Returns
    ``labels`` (-1 outside every component), ``bounds`` as a list of
    ``(lo, hi)`` per component and ``owner`` giving the interval index of
    each component.
    """
    snap = snap_tolerance(field) if snap is None else snap
    v = field.values
    inside = field.grid.node_mask
    labels = np.full(v.shape, -1, dtype=np.int64)
    bounds, owner = [], []
    for k, (lo, hi) in enumerate(intervals):
        sel = inside & (v > lo + snap) & (v < hi - snap)
        if not sel.any():
            continue
        lab, n = ndi.label(sel, structure=_FOUR)
        base = len(bounds)
        labels[sel] = lab[sel] - 1 + base
        bounds.extend([(float(lo), float(hi))] * n)
        owner.extend([k] * n)
    return labels, bounds, owner


def free_nodes(labels: np.ndarray) -> np.ndarray:
    """Nodes whose whole 8-neighbourhood carries their own component label."""
    ny, nx = labels.shape
    pad = np.pad(labels, 1, constant_values=-1)
    out = labels >= 0
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            out &= pad[1 + dj:ny + 1 + dj, 1 + di:nx + 1 + di] == labels
    return out


@dataclass
class LevelPartition:
    labels: np.ndarray
    bounds: list[tuple[float, float]]
    owner: list[int]

    @property
    def n_components(self) -> int:
        return len(self.bounds)

    @property
    def covered(self) -> np.ndarray:
        return self.labels >= 0

    @property
    def free(self) -> np.ndarray:
        return free_nodes(self.labels)

    def component(self, c: int) -> np.ndarray:
        return self.labels == c


@dataclass
class BandPartition(LevelPartition):
    """Components of ``u^-1((t_i, t_{i+1}))`` plus the nodes on the levels."""

    levels: list[float] = field(default_factory=list)
    level_nodes: np.ndarray | None = None

    @classmethod
    def build(cls, u: ScalarField, levels) -> "BandPartition":
        levels = [float(t) for t in levels]
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("levels must be strictly increasing")
        snap = snap_tolerance(u)
        labels, bounds, owner = label_intervals(u, list(zip(levels, levels[1:])), snap)
        on = np.zeros(u.grid.shape, dtype=bool)
        for t in levels:
            on |= np.abs(u.values - t) <= snap
        on &= u.grid.node_mask
        return cls(labels, bounds, owner, levels, on)

    def check_cover(self, u: ScalarField) -> bool:
        """Bands and level nodes partition the domain."""
        covered = self.covered
        inside = u.grid.node_mask
        return bool(np.all((covered | self.level_nodes) == inside) and not np.any(covered & self.level_nodes))


@dataclass
class LensPartition(LevelPartition):
    """Components of ``v^-1((t_j^-, t_j^+))`` for each lens pair."""

    pairs: list[tuple[float, float]] = field(default_factory=list)
    centers: list[float] = field(default_factory=list)

    @classmethod
    def build(cls, v: ScalarField, pairs, centers) -> "LensPartition":
        pairs = [(float(a), float(b)) for a, b in pairs]
        for (a0, b0), (a1, b1) in zip(pairs, pairs[1:]):
            if not b0 < a1:
                raise ValueError(f"lens pairs overlap: {b0:g} >= {a1:g}")
        for (a, b), t in zip(pairs, centers):
            if not a < t < b:
                raise ValueError(f"lens ({a:g}, {b:g}) does not straddle {t:g}")
        labels, bounds, owner = label_intervals(v, pairs)
        return cls(labels, bounds, owner, pairs, [float(t) for t in centers])

    @property
    def levels(self) -> list[float]:
        out = []
        for a, b in self.pairs:
            out += [a, b]
        return out
