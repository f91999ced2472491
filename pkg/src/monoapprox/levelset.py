"""Level sets as polylines: extraction, topological classes, length, co-area.

Contours come from marching squares on the masked cells with linear
interpolation along cell edges.  Crossing points are identified by the edge
they lie on, so chaining segments into components is a walk on a graph of
degree at most two.  Ambiguous saddle cells are split according to the sign
of the bilinear interpolant at the cell centre.

Junctions (three or more arcs meeting) cannot appear in marching-squares
output, so they are detected on the raw values before snapping:

* a node on the level whose 8-neighbour ring changes sign at least 4 times,
* a cell whose four corners all lie on the level,
* a cell whose bilinear saddle point lies on the level.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .grid import ScalarField, gradient

__all__ = [
    "LevelCurve",
    "Junction",
    "LevelSetAnalysis",
    "CoareaReport",
    "LevelSearchError",
    "CLASSES",
    "snap_tolerance",
    "extract_level_set",
    "hausdorff1_length",
    "coarea_check",
    "select_regular_levels",
    "van_der_corput",
]

CLASSES = ("Point", "JordanCurve", "Arc", "Degenerate")
SNAP_REL = 1e-12


class LevelSearchError(RuntimeError):
    """No regular level was found near a target within the search budget."""


@dataclass
class LevelCurve:
    """One component of a level set.

    ``points`` has shape (n, 2); for closed curves the first point is
    repeated at the end.  ``cells`` lists the flat cell index of every
    segment, in order.
    """

    points: np.ndarray
    closed: bool
    touches_boundary: bool
    cells: np.ndarray
    kind: str = "Arc"

    @property
    def length(self) -> float:
        if len(self.points) < 2:
            return 0.0
        return float(np.sum(np.hypot(*np.diff(self.points, axis=0).T)))

    def to_dict(self) -> dict:
        return {"class": self.kind, "closed": self.closed, "length": self.length,
                "touches_boundary": self.touches_boundary,
                "points": [[float(x), float(y)] for x, y in self.points]}


@dataclass(frozen=True)
class Junction:
    cell: tuple[int, int]
    arcs: int
    reason: str


@dataclass
class LevelSetAnalysis:
    t: float
    components: list[LevelCurve]
    junctions: list[Junction]
    h: float = 0.0

    @property
    def classification(self) -> list[str]:
        return [c.kind for c in self.components]

    @property
    def total_length(self) -> float:
        return float(sum(c.length for c in self.components))

    @property
    def is_regular(self) -> bool:
        return not self.junctions and "Degenerate" not in self.classification

    def count(self, kind: str) -> int:
        return self.classification.count(kind)

    def to_dict(self) -> dict:
        return {"t": self.t, "components": [c.to_dict() for c in self.components],
                "junctions": [{"cell": list(j.cell), "arcs": j.arcs, "reason": j.reason}
                              for j in self.junctions],
                "total_length": self.total_length}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["component", "vertex", "x", "y"])
        for k, c in enumerate(self.components):
            for n, (x, y) in enumerate(c.points):
                w.writerow([k, n, repr(float(x)), repr(float(y))])
        return buf.getvalue()


def snap_tolerance(field: ScalarField) -> float:
    return SNAP_REL * max(field.value_range, np.max(np.abs(field.inside)), 1e-300)


# junction detection -----------------------------------------------------------

_RING = [(0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)]  # (dj, di), cyclic


def _find_junctions(field: ScalarField, t: float, snap: float) -> list[Junction]:
    g = field.grid
    w = field.values - t
    ny, nx = w.shape
    out = []
    on = g.full_ring_mask & (np.abs(w) <= snap)
    for j, i in np.argwhere(on):
        s = [np.sign(w[j + dj, i + di]) if abs(w[j + dj, i + di]) > snap else 0.0 for dj, di in _RING]
        s = [x for x in s if x != 0]
        changes = sum(1 for a, b in zip(s, s[1:] + s[:1]) if a != b) if s else 0
        if changes >= 4:
            out.append(Junction((int(min(i, nx - 2)), int(min(j, ny - 2))), changes, "node"))
    cm = g.cell_mask
    c0, c1, c3, c2 = w[:-1, :-1], w[:-1, 1:], w[1:, :-1], w[1:, 1:]
    flat = cm & (np.abs(c0) <= snap) & (np.abs(c1) <= snap) & (np.abs(c2) <= snap) & (np.abs(c3) <= snap)
    for j, i in np.argwhere(flat):
        out.append(Junction((int(i), int(j)), 4, "flat"))
    # bilinear f = a + b x + c y + d x y on the unit cell
    a, b, c, d = c0, c1 - c0, c3 - c0, c2 - c1 - c3 + c0
    with np.errstate(divide="ignore", invalid="ignore"):
        xs, ys = -c / d, -b / d
        sv = a - b * c / d
    sad = cm & ~flat & (np.abs(d) > snap) & (xs > 0) & (xs < 1) & (ys > 0) & (ys < 1) & (np.abs(sv) <= snap)
    for j, i in np.argwhere(sad):
        out.append(Junction((int(i), int(j)), 4, "saddle"))
    uniq = {}
    for jn in out:
        uniq.setdefault(jn.cell, jn)
    return [uniq[k] for k in sorted(uniq, key=lambda c: (c[1], c[0]))]


# marching squares -------------------------------------------------------------

def _segments(field: ScalarField, t: float, snap: float):
    g = field.grid
    ny, nx = g.shape
    w = field.values - t
    w = np.where(np.abs(w) <= snap, snap, w)
    pos = w > 0
    cm = g.cell_mask
    H = ny * (nx - 1)

    def hid(i, j):
        return j * (nx - 1) + i

    def vid(i, j):
        return H + j * nx + i

    code = (pos[:-1, :-1].astype(int) | (pos[:-1, 1:] << 1) | (pos[1:, 1:] << 2) | (pos[1:, :-1] << 3))
    active = cm & (code != 0) & (code != 15)
    segs = []
    for j, i in np.argwhere(active):
        k = code[j, i]
        e = [hid(i, j), vid(i + 1, j), hid(i, j + 1), vid(i, j)]
        bits = [(k >> q) & 1 for q in range(4)]
        corners = [(0, 1), (1, 2), (2, 3), (3, 0)]
        cross = [q for q, (a, b) in enumerate(corners) if bits[a] != bits[b]]
        cell = j * (nx - 1) + i
        if len(cross) == 2:
            segs.append((e[cross[0]], e[cross[1]], cell))
        else:
            m = 0.25 * (w[j, i] + w[j, i + 1] + w[j + 1, i] + w[j + 1, i + 1])
            if (m >= 0) == bool(bits[0]):
                pairs = [(0, 1), (2, 3)]
            else:
                pairs = [(0, 3), (1, 2)]
            for a, b in pairs:
                segs.append((e[a], e[b], cell))
    return segs, w


def _edge_point(eid: int, w: np.ndarray, g) -> tuple[float, float]:
    ny, nx = w.shape
    H = ny * (nx - 1)
    if eid < H:
        j, i = divmod(eid, nx - 1)
        wa, wb = w[j, i], w[j, i + 1]
        f = wa / (wa - wb)
        return g.origin[0] + (i + f) * g.h, g.origin[1] + j * g.h
    j, i = divmod(eid - H, nx)
    wa, wb = w[j, i], w[j + 1, i]
    f = wa / (wa - wb)
    return g.origin[0] + i * g.h, g.origin[1] + (j + f) * g.h


def _boundary_cells(g) -> np.ndarray:
    b = g.boundary_mask
    return g.cell_mask & (b[:-1, :-1] | b[:-1, 1:] | b[1:, :-1] | b[1:, 1:])


def _chain(segs):
    adj: dict[int, list[int]] = {}
    for k, (a, b, _) in enumerate(segs):
        adj.setdefault(a, []).append(k)
        adj.setdefault(b, []).append(k)
    used = np.zeros(len(segs), dtype=bool)
    chains = []

    def walk(start_edge, first_seg):
        edges, cells = [start_edge], []
        e, s = start_edge, first_seg
        while s is not None:
            used[s] = True
            a, b, c = segs[s]
            e = b if a == e else a
            edges.append(e)
            cells.append(c)
            s = next((q for q in adj[e] if not used[q]), None)
        return edges, cells

    ends = sorted(e for e, ss in adj.items() if len(ss) == 1)
    for e in ends:
        s = adj[e][0]
        if not used[s]:
            edges, cells = walk(e, s)
            chains.append((edges, cells, False))
    for s in range(len(segs)):
        if not used[s]:
            edges, cells = walk(segs[s][0], s)
            chains.append((edges, cells, edges[0] == edges[-1]))
    return chains


def extract_level_set(field: ScalarField, t: float) -> LevelSetAnalysis:
    """Components of ``{u = t}`` with their topological classes."""
    if not np.isfinite(t):
        raise ValueError("level must be finite")
    g = field.grid
    ny, nx = g.shape
    snap = snap_tolerance(field)
    junctions = _find_junctions(field, t, snap)
    segs, w = _segments(field, t, snap)
    bcells = _boundary_cells(g).ravel()
    jcells = np.zeros((ny - 1, nx - 1), dtype=bool)
    for jn in junctions:
        i, j = jn.cell
        jcells[max(j - 1, 0):j + 2, max(i - 1, 0):i + 2] = True
    jflat = jcells.ravel()
    comps = []
    for edges, cells, closed in _chain(segs):
        pts = np.array([_edge_point(e, w, g) for e in edges])
        cells = np.asarray(cells, dtype=np.int64)
        ends = cells[[0, -1]] if len(cells) else cells
        touches = bool(np.any(bcells[ends])) if not closed else bool(np.any(bcells[cells]))
        curve = LevelCurve(pts, bool(closed), touches, cells)
        if np.any(jflat[cells]):
            curve.kind = "Degenerate"
        elif closed and curve.length < 2 * g.h and not touches:
            curve.kind = "Point"
        elif closed:
            curve.kind = "JordanCurve"
        elif touches:
            curve.kind = "Arc"
        else:
            curve.kind = "Degenerate"
        comps.append(curve)
    comps.extend(_isolated_points(field, t, snap))
    return LevelSetAnalysis(float(t), comps, junctions, g.h)


def _isolated_points(field: ScalarField, t: float, snap: float) -> list[LevelCurve]:
    """Strict local extrema sitting exactly on the level: the level set
    there is a single point that marching squares cannot see."""
    g = field.grid
    w = field.values - t
    out = []
    nx = g.nx
    for j, i in np.argwhere(g.full_ring_mask & (np.abs(w) <= snap)):
        ring = np.array([w[j + dj, i + di] for dj, di in _RING])
        if np.all(ring > snap) or np.all(ring < -snap):
            x, y = g.node_xy(i, j)
            cell = min(j, g.ny - 2) * (nx - 1) + min(i, nx - 2)
            out.append(LevelCurve(np.array([[float(x), float(y)]]), True, False,
                                  np.array([cell]), "Point"))
    return out


def hausdorff1_length(analysis: LevelSetAnalysis) -> float:
    return analysis.total_length


@dataclass
class CoareaReport:
    lhs: float
    rhs: float
    rel_error: float
    n_levels: int
    levels: list[float] = field(default_factory=list)
    lengths: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "rel_error": self.rel_error, "n_levels": self.n_levels,
                "levels": self.levels, "lengths": self.lengths}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def coarea_check(field: ScalarField, n_levels: int = 64, floor: float = 1e-300) -> CoareaReport:
    """Compare the midpoint rule for ``int H1(u^-1(t)) dt`` with ``sum |grad u| h^2``."""
    if n_levels < 8:
        raise ValueError("n_levels must be at least 8")
    lo, hi = field.vmin, field.vmax
    if hi == lo:
        return CoareaReport(0.0, 0.0, 0.0, n_levels)
    dt = (hi - lo) / n_levels
    ts = lo + dt * (np.arange(n_levels) + 0.5)
    lengths = [extract_level_set(field, float(t)).total_length for t in ts]
    lhs = float(np.sum(lengths) * dt)
    g = field.grid
    rhs = float(np.sum(gradient(field).norm[g.cell_mask]) * g.h ** 2)
    return CoareaReport(lhs, rhs, abs(lhs - rhs) / max(rhs, floor), n_levels,
                        [float(t) for t in ts], [float(x) for x in lengths])


def van_der_corput(k: int, base: int = 2) -> float:
    q, denom = 0.0, 1.0
    while k:
        k, r = divmod(k, base)
        denom *= base
        q += r / denom
    return q


def _offsets(budget: int):
    yield 0.0
    k = 1
    n = 1
    while n < budget:
        c = van_der_corput(k)
        for s in (c, -c):
            if n < budget:
                n += 1
                yield s
        k += 1


def select_regular_levels(field: ScalarField, targets, jitter: float, budget: int = 64,
                          accept=None) -> list[float]:
    """Move each target to a nearby value whose level set is a 1-manifold.

    Candidates are ``target + jitter * c`` with ``c`` running through 0 and
    then the signed van der Corput sequence.  A candidate is accepted when
    the extracted level has no junctions or degenerate components, is not at
    a local extremal value, and passes the optional ``accept(t, analysis)``
    predicate.
    """
    from .monotonicity import local_extremal_values

    targets = [float(x) for x in targets]
    if jitter <= 0:
        raise ValueError("jitter must be positive")
    if len(targets) > 1:
        gap = float(np.min(np.diff(targets)))
        if gap <= 0:
            raise ValueError("targets must be strictly increasing")
        if jitter >= gap / 2:
            raise ValueError(f"jitter {jitter:g} is not below half the minimal gap {gap:g}")
    snap = snap_tolerance(field)
    extremal = np.asarray(local_extremal_values(field))
    out = []
    for target in targets:
        for c in _offsets(budget):
            t = target + jitter * c
            if extremal.size and np.min(np.abs(extremal - t)) <= snap:
                continue
            an = extract_level_set(field, t)
            if an.is_regular and (accept is None or accept(t, an)):
                out.append(t)
                break
        else:
            raise LevelSearchError(f"no regular level within {jitter:g} of {target:g} "
                                   f"after {budget} candidates")
    return out
