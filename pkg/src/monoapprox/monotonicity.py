"""Lebesgue monotonicity on a lattice, and the gluing constructions built on it.

A field is monotone when no compactly contained open set carries an interior
maximum or minimum that beats its boundary.  Two discrete certificates are
provided:

``exhaustive-window``
    Every axis-aligned rectangle of in-domain nodes with at least one
    interior node is compared against its boundary ring.  Cost grows like
    ``n**4`` node pairs, so it is meant for grids up to about 65x65.
``level-component``
    Every 4-connected component of ``{u > t}`` and ``{u < t}`` must reach a
    boundary node of the domain, for every threshold ``t``.  All thresholds
    are handled at once by a grayscale reconstruction from the boundary
    values.

Boundary nodes include those adjacent to holes of the mask, so for annular
domains a component that reaches the inner rim is accepted.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.ndimage as ndi
from skimage.morphology import reconstruction

from .grid import ScalarField

_FOUR = ndi.generate_binary_structure(2, 1)

__all__ = [
    "Witness",
    "MonotonicityReport",
    "GluingError",
    "RangeViolation",
    "InterfaceMismatch",
    "OverlapError",
    "ContainmentError",
    "GlueVerdict",
    "default_tolerance",
    "is_monotone",
    "is_strictly_monotone",
    "local_extremal_values",
    "glue_on_bands",
    "glue_strict_over",
    "free_mask",
    "dilate8",
]

METHODS = ("exhaustive-window", "level-component")


class GluingError(RuntimeError):
    """Glued field failed its monotonicity postcondition."""


class RangeViolation(ValueError):
    """A replacement leaves the value interval of its band."""


class InterfaceMismatch(ValueError):
    """A replacement does not match the field on its band's interface nodes."""


class OverlapError(ValueError):
    pass


class ContainmentError(ValueError):
    pass


@dataclass(frozen=True)
class Witness:
    """Window ``(i0, j0, i1, j1)`` (inclusive node indices) whose interior
    extremum of ``kind`` at ``node`` beats the boundary value."""

    window: tuple[int, int, int, int]
    kind: str
    node: tuple[int, int]
    interior_value: float
    boundary_value: float

    def contains(self, i: int, j: int) -> bool:
        i0, j0, i1, j1 = self.window
        return i0 <= i <= i1 and j0 <= j <= j1


@dataclass
class MonotonicityReport:
    monotone: bool
    witnesses: list[Witness]
    method: str
    tolerance: float
    strict: bool = False

    def __bool__(self):
        return self.monotone

    def to_dict(self, grid=None) -> dict:
        out = {"monotone": self.monotone, "strict": self.strict, "method": self.method,
               "tolerance": self.tolerance, "witnesses": []}
        for w in self.witnesses:
            d = asdict(w)
            d["window"] = list(w.window)
            d["node"] = list(w.node)
            if grid is not None:
                x, y = grid.node_xy(*w.node)
                d["node_xy"] = [float(x), float(y)]
            out["witnesses"].append(d)
        return out

    def to_json(self, grid=None) -> str:
        return json.dumps(self.to_dict(grid), indent=2, sort_keys=True)


def default_tolerance(field: ScalarField) -> float:
    return 1e-9 * field.value_range


def _shift(a: np.ndarray, dj: int, di: int, fill):
    """``out[j, i] = a[j + dj, i + di]`` with ``fill`` beyond the array."""
    ny, nx = a.shape
    out = np.full_like(a, fill)
    js, je = max(0, -dj), min(ny, ny - dj)
    is_, ie = max(0, -di), min(nx, nx - di)
    out[js:je, is_:ie] = a[js + dj:je + dj, is_ + di:ie + di]
    return out


def dilate8(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            if dj or di:
                out |= _shift(mask, dj, di, False)
    return out


def free_mask(region: np.ndarray) -> np.ndarray:
    """Nodes of ``region`` whose whole 8-neighbourhood lies in ``region``."""
    out = region.copy()
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            if dj or di:
                out &= _shift(region, dj, di, False)
    return out


# exhaustive windows -----------------------------------------------------------

def _scan_windows(v: np.ndarray, mask: np.ndarray, tol: float, strict: bool, limit: int):
    ny, nx = v.shape
    hi = np.where(mask, v, -np.inf)
    lo = np.where(mask, v, np.inf)
    iu = np.arange(nx)
    later = iu[None, :] > iu[:, None]          # k > i0
    upper = iu[None, :] >= iu[:, None]         # k >= i0
    span_ok = iu[None, :] >= iu[:, None] + 2   # i1 >= i0 + 2
    hits = []
    for j0 in range(ny - 2):
        int_hi = np.full(nx, -np.inf)
        int_lo = np.full(nx, np.inf)
        col_hi = hi[j0].copy()
        col_lo = lo[j0].copy()
        col_ok = mask[j0].copy()
        for j1 in range(j0 + 1, ny):
            col_hi = np.maximum(col_hi, hi[j1])
            col_lo = np.minimum(col_lo, lo[j1])
            col_ok &= mask[j1]
            if j1 < j0 + 2:
                continue
            int_hi = np.maximum(int_hi, hi[j1 - 1])
            int_lo = np.minimum(int_lo, lo[j1 - 1])
            if not col_ok.any():
                continue
            # interior extremum over columns i0+1 .. i1-1
            ih = np.maximum.accumulate(np.where(later, int_hi[None, :], -np.inf), axis=1)
            il = np.minimum.accumulate(np.where(later, int_lo[None, :], np.inf), axis=1)
            ih = np.concatenate([np.full((nx, 1), -np.inf), ih[:, :-1]], axis=1)
            il = np.concatenate([np.full((nx, 1), np.inf), il[:, :-1]], axis=1)
            rows_hi = np.maximum(hi[j0], hi[j1])
            rows_lo = np.minimum(lo[j0], lo[j1])
            bh = np.maximum.accumulate(np.where(upper, rows_hi[None, :], -np.inf), axis=1)
            bl = np.minimum.accumulate(np.where(upper, rows_lo[None, :], np.inf), axis=1)
            bh = np.maximum(bh, np.maximum(col_hi[:, None], col_hi[None, :]))
            bl = np.minimum(bl, np.minimum(col_lo[:, None], col_lo[None, :]))
            ok = np.logical_and.accumulate(np.where(upper, col_ok[None, :], True), axis=1) & span_ok
            with np.errstate(invalid="ignore"):
                wmax, wmin = _flag(ih, bh, il, bl, ok, tol, strict)
            for kind, w in (("max", wmax), ("min", wmin)):
                if w.any():
                    i0s, i1s = np.nonzero(w)
                    area = (i1s - i0s) * (j1 - j0)
                    for a, i0, i1 in zip(area, i0s, i1s):
                        hits.append((int(a), j0, int(i0), j1, int(i1), kind))
    hits.sort()
    out = []
    for _, j0, i0, j1, i1, kind in hits[:limit]:
        out.append(_window_witness(v, mask, (i0, j0, i1, j1), kind))
    return out


def _flag(ih, bh, il, bl, ok, tol, strict):
    if strict:
        return ok & (ih >= bh - tol), ok & (il <= bl + tol)
    return ok & (ih - bh > tol), ok & (bl - il > tol)


def _window_witness(v, mask, window, kind) -> Witness:
    i0, j0, i1, j1 = window
    block = v[j0:j1 + 1, i0:i1 + 1]
    inner = block[1:-1, 1:-1]
    ring = np.concatenate([block[0], block[-1], block[1:-1, 0], block[1:-1, -1]])
    if kind == "max":
        jj, ii = np.unravel_index(np.argmax(inner), inner.shape)
        bval = float(ring.max())
    else:
        jj, ii = np.unravel_index(np.argmin(inner), inner.shape)
        bval = float(ring.min())
    return Witness(window, kind, (int(i0 + 1 + ii), int(j0 + 1 + jj)), float(inner[jj, ii]), bval)


# level components -------------------------------------------------------------

def _scan_components(v: np.ndarray, mask: np.ndarray, boundary: np.ndarray,
                     tol: float, kind: str, limit: int):
    """Level components of one kind that stay off the boundary.

    Reconstruction by dilation from the boundary values gives, at every
    node, the best value a 4-connected path to the boundary can keep as its
    minimum.  A node lies in a detached superlevel component exactly when
    its own value exceeds that by more than ``tol``.
    """
    sign = 1.0 if kind == "max" else -1.0
    w = np.where(mask, sign * v, -np.inf)
    low = float(np.min(w[mask])) - 1.0
    w = np.where(mask, w, low)
    seed = np.where(boundary & mask, w, low)
    rec = reconstruction(seed, w, method="dilation", footprint=_FOUR)
    excess = np.where(mask, w - rec, 0.0)
    if not np.any(excess > tol):
        return []
    basins, _ = ndi.label(mask & (excess > 0), structure=_FOUR)
    full = np.where(mask, w, -np.inf)
    bnd = boundary & mask
    witnesses = []
    for k, sl in enumerate(ndi.find_objects(basins), start=1):
        if len(witnesses) >= limit:
            break
        part = basins[sl] == k
        if not np.any(excess[sl][part] > tol):
            continue
        inner = np.where(part, full[sl], -np.inf)
        # candidate peaks: local maxima of the basin carrying a real excess, highest first
        nb = ndi.maximum_filter(inner, footprint=_FOUR, mode="constant", cval=-np.inf)
        cand = np.argwhere(part & (inner >= nb) & (excess[sl] > tol))
        cand = cand[np.lexsort((cand[:, 1], cand[:, 0], -inner[cand[:, 0], cand[:, 1]]))][:8]
        for pj, pi in cand:
            wit = _certify(full, bnd, (int(pj + sl[0].start), int(pi + sl[1].start)), rec, tol, sign, kind)
            if wit is not None:
                witnesses.append(wit)
                break
    return witnesses


def _certify(full, bnd, peak, rec, tol, sign, kind, tries=64):
    """Turn a detached basin into a window witness whose whole rim it beats.

    For thresholds from just below the peak downwards, the window starts as
    the bounding box (grown by one node) of the peak's component of
    ``{w > theta}`` and absorbs every component crossing its rim, failing
    when one of those reaches the boundary.  The first window whose rim
    stays at or below ``theta`` is the witness.  Returns None when no window
    certifies the basin, as for a component cut off only diagonally or one
    that surrounds a hole of the mask.
    """
    pj, pi = peak
    top = full[pj, pi]
    floor = rec[pj, pi]
    vals = full[np.isfinite(full)]
    levels = np.unique(vals[(vals < top - tol) & (vals >= floor)])[::-1][:tries]
    ny, nx = full.shape
    for theta in levels:
        comp, _ = ndi.label(full > theta, structure=_FOUR)
        attached = set(np.unique(comp[bnd & (comp > 0)]).tolist())
        boxes = ndi.find_objects(comp)
        taken = {int(comp[pj, pi])}
        sl = boxes[comp[pj, pi] - 1]
        j0, j1, i0, i1 = sl[0].start - 1, sl[0].stop, sl[1].start - 1, sl[1].stop
        ok = True
        while ok:
            if j0 < 0 or i0 < 0 or j1 >= ny or i1 >= nx:
                ok = False
                break
            win = comp[j0:j1 + 1, i0:i1 + 1]
            rim = np.ones(win.shape, dtype=bool)
            rim[1:-1, 1:-1] = False
            new = set(np.unique(win[rim & (win > 0)]).tolist()) - taken
            if not new:
                break
            if new & attached:
                ok = False
                break
            for c in new:
                b = boxes[c - 1]
                j0, j1 = min(j0, b[0].start - 1), max(j1, b[0].stop)
                i0, i1 = min(i0, b[1].start - 1), max(i1, b[1].stop)
            taken |= new
        if not ok:
            continue
        win = full[j0:j1 + 1, i0:i1 + 1]
        if not np.all(np.isfinite(win)):
            # a component that encloses out-of-domain nodes is accepted
            continue
        rim = np.ones(win.shape, dtype=bool)
        rim[1:-1, 1:-1] = False
        rim_max = np.max(win[rim])
        if top - rim_max > tol:
            return Witness((int(i0), int(j0), int(i1), int(j1)), kind, (int(pi), int(pj)),
                           float(sign * top), float(sign * rim_max))
    return None


def is_monotone(field: ScalarField, method: str = "level-component",
                tolerance: float | None = None, max_witnesses: int = 20) -> MonotonicityReport:
    """Decide Lebesgue monotonicity of ``field``.

    Parameters
    ----------
    method : {"level-component", "exhaustive-window"}
    tolerance : float, optional
        Violations must exceed this amount; defaults to ``1e-9 * range``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    tol = default_tolerance(field) if tolerance is None else float(tolerance)
    if tol < 0:
        raise ValueError("tolerance must be non-negative")
    g = field.grid
    if field.value_range == 0:
        return MonotonicityReport(True, [], method, tol)
    if method == "exhaustive-window":
        wit = _scan_windows(field.values, g.node_mask, tol, False, max_witnesses)
    else:
        wit = _scan_components(field.values, g.node_mask, g.boundary_mask, tol, "max", max_witnesses)
        wit += _scan_components(field.values, g.node_mask, g.boundary_mask, tol, "min", max_witnesses)
        wit = wit[:max_witnesses]
    return MonotonicityReport(not wit, wit, method, tol)


def _ring_extrema(field: ScalarField):
    v = field.values
    ring_hi = np.full(v.shape, -np.inf)
    ring_lo = np.full(v.shape, np.inf)
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            if dj or di:
                s = _shift(v, dj, di, np.nan)
                ring_hi = np.fmax(ring_hi, s)
                ring_lo = np.fmin(ring_lo, s)
    return ring_hi, ring_lo


def is_strictly_monotone(field: ScalarField, tolerance: float | None = None,
                         method: str = "exhaustive-window", max_witnesses: int = 20) -> MonotonicityReport:
    """Strict monotonicity: no window interior attains the window extremum.

    A window interior attains its extremum exactly when some node with a full
    in-domain 8-neighbourhood is a weak local extremum, so after the ordinary
    monotonicity test only 3x3 windows need to be examined.
    """
    tol = default_tolerance(field) if tolerance is None else float(tolerance)
    base = is_monotone(field, method=method, tolerance=tol, max_witnesses=max_witnesses)
    wit = list(base.witnesses)
    v = field.values
    ring_hi, ring_lo = _ring_extrema(field)
    full = field.grid.full_ring_mask
    for kind, hit in (("max", full & (v >= ring_hi - tol)), ("min", full & (v <= ring_lo + tol))):
        for j, i in np.argwhere(hit):
            if len(wit) >= max_witnesses:
                break
            bval = ring_hi[j, i] if kind == "max" else ring_lo[j, i]
            wit.append(Witness((int(i - 1), int(j - 1), int(i + 1), int(j + 1)), kind,
                               (int(i), int(j)), float(v[j, i]), float(bval)))
    return MonotonicityReport(not wit, wit, method, tol, strict=True)


def local_extremal_values(field: ScalarField, rel_merge: float = 1e-12) -> list[float]:
    """Sorted values at interior nodes that are weak local maxima or minima
    of their 8-neighbourhood; values closer than ``rel_merge * range`` merge."""
    v = field.values
    ring_hi, ring_lo = _ring_extrema(field)
    full = field.grid.full_ring_mask
    hit = full & ((v >= ring_hi) | (v <= ring_lo))
    vals = np.sort(v[hit])
    if vals.size == 0:
        return []
    gap = rel_merge * max(field.value_range, np.max(np.abs(vals)), 1e-300)
    out = [float(vals[0])]
    for x in vals[1:]:
        if x - out[-1] > gap:
            out.append(float(x))
    return out


# gluing -------------------------------------------------------------------------

def glue_on_bands(u: ScalarField, partition, replacements: dict, tolerance: float | None = None,
                  check_monotone: bool = True) -> ScalarField:
    """Paste band replacements into ``u``.

    ``partition`` exposes ``labels`` (component id per node, -1 off all
    bands) and ``bounds`` (component id -> ``(lo, hi)`` value interval).
    ``replacements`` maps component ids to fields on the same grid; only the
    component's nodes are read.  Interface nodes of a component are those
    whose 8-neighbourhood leaves the component; replacements must agree with
    ``u`` there.
    """
    tol = default_tolerance(u) if tolerance is None else float(tolerance)
    labels = partition.labels
    out = u.values.copy()
    for c, rep in sorted(replacements.items()):
        vals = rep.values if isinstance(rep, ScalarField) else np.asarray(rep, float)
        if isinstance(rep, ScalarField):
            u.require_same_grid(rep)
        comp = labels == c
        lo, hi = partition.bounds[c]
        cv = vals[comp]
        if not np.all(np.isfinite(cv)):
            raise ValueError(f"replacement for component {c} is undefined on some of its nodes")
        bad = comp & ((vals < lo - tol) | (vals > hi + tol))
        if bad.any():
            j, i = np.argwhere(bad)[0]
            raise RangeViolation(f"component {c}: value {vals[j, i]:.6g} at node (i={i}, j={j}) "
                                 f"outside [{lo:.6g}, {hi:.6g}]")
        skin = comp & ~free_mask(comp)
        mism = skin & (np.abs(vals - u.values) > tol)
        if mism.any():
            j, i = np.argwhere(mism)[0]
            raise InterfaceMismatch(f"component {c}: replacement differs from u at interface node "
                                    f"(i={i}, j={j}) by {abs(vals[j, i] - u.values[j, i]):.3g}")
        out[comp] = cv
    glued = u.with_values(out)
    if check_monotone and is_monotone(u, tolerance=tol):
        pieces_ok = all(
            is_monotone(ScalarField(u.grid, rep.values if isinstance(rep, ScalarField) else rep)
                        .restrict(labels == c), tolerance=tol)
            for c, rep in replacements.items()
        )
        if pieces_ok:
            rep = is_monotone(glued, tolerance=tol)
            if not rep:
                w = rep.witnesses[0]
                raise GluingError(f"glued field is not monotone: {w.kind} {w.interior_value:.6g} "
                                  f"at node {w.node} beats boundary {w.boundary_value:.6g}")
    return glued


@dataclass
class GlueVerdict:
    monotone: bool
    combined: ScalarField
    report: MonotonicityReport
    core_monotone: bool
    patch_strict: bool
    notes: list[str] = field(default_factory=list)

    def __bool__(self):
        return self.monotone


def glue_strict_over(core: ScalarField, patch: ScalarField, inner: np.ndarray, outer: np.ndarray,
                     tolerance: float | None = None, check_hypotheses: bool = True) -> GlueVerdict:
    """Combine a monotone ``core`` (valid off the closure of ``inner``) with a
    ``patch`` that is strictly monotone on ``outer``.

    The closure of ``inner`` within the domain must lie inside ``outer`` and
    both fields must agree on ``outer`` minus that closure.
    """
    core.require_same_grid(patch)
    tol = default_tolerance(core) if tolerance is None else float(tolerance)
    dom = core.grid.node_mask
    inner = np.asarray(inner, bool) & dom
    outer = np.asarray(outer, bool) & dom
    closure = dilate8(inner) & dom
    leak = closure & ~outer
    if leak.any():
        j, i = np.argwhere(leak)[0]
        raise ContainmentError(f"closure of the patched set leaves the strict region at node (i={i}, j={j})")
    overlap = outer & ~closure
    diff = overlap & (np.abs(core.values - patch.values) > tol)
    if diff.any():
        j, i = np.argwhere(diff)[0]
        raise OverlapError(f"core and patch disagree at node (i={i}, j={j})")
    combined = core.with_values(np.where(outer, patch.values, core.values))
    report = is_monotone(combined, tolerance=tol)
    notes = []
    core_ok = patch_ok = True
    if check_hypotheses:
        rest = dom & ~closure
        if rest.any():
            core_ok = bool(is_monotone(core.restrict(rest), tolerance=tol))
        patch_ok = bool(is_strictly_monotone(patch.restrict(outer), tolerance=tol,
                                             method="level-component"))
        if not core_ok:
            notes.append("core is not monotone off the patched set")
        if not patch_ok:
            notes.append("patch is not strictly monotone on its region")
    return GlueVerdict(report.monotone, combined, report, core_ok, patch_ok, notes)
