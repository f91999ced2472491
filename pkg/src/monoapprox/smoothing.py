"""Smoothing a field across one of its level curves.

A tubular chart assigns every node near a polyline its arclength ``sbar``
and signed normal offset ``y``.  Inside the strip ``|y| < beta`` the field is
blended with a model term that is smooth across the curve:

* ``TwoSided``     ``u~ - t = a(s) (u - t) + (1 - a(s)) y gamma``
* ``OneSidedExp``  same blend with ``gamma beta exp(-beta/|y|)`` on the
  active side, the flat side untouched
* ``SameSignExp``  the exponential model on both sides (open curves only)
* ``AllFlat``      no change

Here ``s = |y| / beta`` and ``a`` is the cubic cutoff returned by
:func:`alpha`.  Nodes with ``s >= 1`` are never written, so they keep their
input values bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.ndimage import map_coordinates

from .grid import ScalarField
from .levelset import LevelCurve

__all__ = [
    "CASES",
    "ChartError",
    "SideClassificationError",
    "DegeneracyError",
    "TubularChart",
    "SmoothingProfile",
    "alpha",
    "alpha_prime",
    "build_chart",
    "classify_sides",
    "fit_profile",
    "apply_smoothing",
    "strip_mask",
    "node_gradient",
    "kink_measure",
]

CASES = ("TwoSided", "OneSidedExp", "SameSignExp", "AllFlat")
EXP_FLUSH = 1.0 / 40.0


class ChartError(ValueError):
    """The curve is too tight for a tubular chart at this resolution."""


class SideClassificationError(ValueError):
    pass


class DegeneracyError(ValueError):
    """The normal derivative vanishes on a side that should be active."""


def alpha(t):
    """Cutoff: 0 for ``t <= 1/2``, 1 for ``t >= 1``, cubic in between with slope at most 3."""
    t = np.clip(np.asarray(t, dtype=float), 0.5, 1.0)
    return 1.0 - (2.0 - 2.0 * t) ** 2 * (4.0 * t - 1.0)


def alpha_prime(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0.5) & (t < 1.0)
    return np.where(inside, 12.0 * (2.0 - 2.0 * t) * (2.0 * t - 1.0), 0.0)


@dataclass
class TubularChart:
    """Arclength and signed-offset coordinates around a polyline.

    ``sbar``, ``y`` and the unit ``normal``/``tangent`` are node arrays, NaN
    where the node is outside the chart.  Positive ``y`` is the side where
    the field exceeds the curve level on average.
    """

    curve: LevelCurve
    t: float
    reach: float
    sbar: np.ndarray
    y: np.ndarray
    normal: np.ndarray
    tangent: np.ndarray
    periodic: bool
    vertex_s: np.ndarray
    excluded: np.ndarray

    @property
    def covered(self) -> np.ndarray:
        return np.isfinite(self.y)

    def to_dict(self) -> dict:
        return {"t": self.t, "reach": self.reach, "periodic": self.periodic,
                "length": self.curve.length, "nodes": int(self.covered.sum()),
                "excluded": int(self.excluded.sum())}


@dataclass
class SmoothingProfile:
    beta: float
    gamma: float
    delta: float
    case: str
    active_sides: tuple[int, ...] = (1, -1)
    signs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}")
        if self.case != "AllFlat" and not (self.beta > 0 and self.gamma > 0 and self.delta > 0):
            raise ValueError("beta, gamma and delta must be positive")

    def to_dict(self) -> dict:
        return {"beta": self.beta, "gamma": self.gamma, "delta": self.delta, "case": self.case,
                "active_sides": list(self.active_sides),
                "signs": {str(k): v for k, v in self.signs.items()}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# chart ---------------------------------------------------------------------------

def _project(px, py, a, b):
    """Distances from points to segments a->b: returns (d, param, cross sign)."""
    ab = b - a
    L2 = np.sum(ab * ab, axis=1)
    L2 = np.where(L2 > 0, L2, 1e-300)
    rx = px[:, None] - a[None, :, 0]
    ry = py[:, None] - a[None, :, 1]
    lam = np.clip((rx * ab[None, :, 0] + ry * ab[None, :, 1]) / L2[None, :], 0.0, 1.0)
    dx = rx - lam * ab[None, :, 0]
    dy = ry - lam * ab[None, :, 1]
    return np.hypot(dx, dy), lam


def _nearest_segments(px, py, a, b, s_start, seg, periodic, total, h, reach):
    """Nearest segment of every point, and the nearest one far along the curve.

    Segments are gathered through a k-d tree on their midpoints; ``k`` grows
    until every segment that could sit within ``best + h/2`` of a point
    inside ``reach`` has been seen.
    """
    n = px.size
    best_d = np.full(n, np.inf)
    best_k = np.zeros(n, dtype=int)
    best_l = np.zeros(n)
    second = np.full(n, np.inf)
    if n == 0:
        return best_d, best_k, best_l, second
    tree = cKDTree(0.5 * (a + b))
    half = 0.5 * float(seg.max())
    nseg = len(a)
    todo = np.arange(n)
    k = min(nseg, 32)
    while todo.size:
        dm, idx = tree.query(np.column_stack([px[todo], py[todo]]), k=k)
        if k == 1:
            dm, idx = dm[:, None], idx[:, None]
        A, B = a[idx], b[idx]
        ab = B - A
        L2 = np.maximum(np.sum(ab * ab, axis=2), 1e-300)
        rx = px[todo, None] - A[..., 0]
        ry = py[todo, None] - A[..., 1]
        lam = np.clip((rx * ab[..., 0] + ry * ab[..., 1]) / L2, 0.0, 1.0)
        d = np.hypot(rx - lam * ab[..., 0], ry - lam * ab[..., 1])
        m = np.argmin(d, axis=1)
        rows = np.arange(todo.size)
        bd = d[rows, m]
        s_all = s_start[idx] + lam * seg[idx]
        sep = np.abs(s_all - s_all[rows, m][:, None])
        if periodic:
            sep = np.minimum(sep, total - sep)
        far = sep > 3.0 * np.maximum(bd, h)[:, None] + 2 * h
        sec = np.min(np.where(far, d, np.inf), axis=1)
        complete = (k >= nseg) | (dm[:, -1] - half > np.minimum(bd, reach) + 0.5 * h)
        done = todo[complete]
        best_d[done] = bd[complete]
        best_k[done] = idx[rows, m][complete]
        best_l[done] = lam[rows, m][complete]
        second[done] = sec[complete]
        todo = todo[~complete]
        k = min(nseg, 2 * k)
    return best_d, best_k, best_l, second


def build_chart(field: ScalarField, curve: LevelCurve, reach: float, t: float | None = None,
                obstacles: list[np.ndarray] | None = None) -> TubularChart:
    """Tubular chart of ``curve`` on the nodes of ``field``'s grid.

    Parameters
    ----------
    reach : float
        Requested half-width; it shrinks so that nearest-segment projection
        is unambiguous and stays below half the distance to ``obstacles``
        (point arrays of other curves).
    t : float, optional
        Level of the curve, used to orient the normal.  Defaults to the mean
        field value sampled at the curve vertices.
    """
    g = field.grid
    h = g.h
    if reach <= 2 * h:
        raise ChartError(f"reach {reach:g} must exceed 2h = {2 * h:g}")
    pts = np.asarray(curve.points, dtype=float)
    if len(pts) < 2:
        raise ChartError("curve has fewer than two vertices")
    periodic = bool(curve.closed)
    seg_len = np.hypot(*np.diff(pts, axis=0).T)
    keep = np.concatenate([[True], seg_len > 1e-14 * h])
    pts = pts[keep]
    if periodic and np.hypot(*(pts[0] - pts[-1])) > 1e-14 * h:
        pts = np.vstack([pts, pts[:1]])
    if len(pts) < 2:
        raise ChartError("curve has no segments of positive length")
    vs = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
    total = vs[-1]
    a, b = pts[:-1].copy(), pts[1:].copy()
    s_start = vs[:-1].copy()
    if not periodic:
        # extend both ends so nodes just past the last crossing get coordinates
        d0 = (a[0] - b[0]) / max(np.hypot(*(a[0] - b[0])), 1e-300)
        d1 = (b[-1] - a[-1]) / max(np.hypot(*(b[-1] - a[-1])), 1e-300)
        a = np.vstack([a[:1] + reach * d0, a, b[-1:]])
        b = np.vstack([a[1:2], b, b[-1:] + reach * d1])
        s_start = np.concatenate([[-reach], s_start, [total]])

    _self_distance_guard(pts, vs, periodic, total, h)
    if obstacles:
        for obs in obstacles:
            if len(obs):
                dmin = np.min(_project(obs[:, 0], obs[:, 1], pts[:-1], pts[1:])[0])
                reach = min(reach, 0.5 * dmin)
        if reach <= 2 * h:
            raise ChartError(f"neighbouring curve closer than {4 * h:g}: strips would collide")

    seg = np.hypot(*(b - a).T)
    X, Y = g.X, g.Y
    # only nodes near some vertex can lie within reach of the curve
    vert = np.vstack([a, b[-1:]])
    near_v, _ = cKDTree(vert).query(np.column_stack([X[g.node_mask], Y[g.node_mask]]),
                                    distance_upper_bound=reach + float(seg.max()))
    cand = np.zeros(g.shape, dtype=bool)
    cand[g.node_mask] = np.isfinite(near_v)
    cj, ci = np.nonzero(cand)
    px, py = X[cj, ci], Y[cj, ci]
    best_d, best_k, best_l, second = _nearest_segments(px, py, a, b, s_start, seg, periodic,
                                                       total, h, reach)
    ambiguous = second < best_d + 0.5 * h
    if np.any(ambiguous & (best_d < reach)):
        reach = min(reach, float(np.min(best_d[ambiguous])))
        if reach <= 2 * h:
            raise ChartError("projection onto the curve is ambiguous within 2h")
    inside = (best_d < reach) & ~ambiguous
    excluded = np.zeros(g.shape, dtype=bool)
    excluded[cj[ambiguous & (best_d < reach)], ci[ambiguous & (best_d < reach)]] = True

    k = best_k
    ab = b[k] - a[k]
    L = np.hypot(ab[:, 0], ab[:, 1])
    tan = ab / np.maximum(L, 1e-300)[:, None]
    nrm = np.stack([-tan[:, 1], tan[:, 0]], axis=1)        # left normal
    foot = a[k] + best_l[:, None] * ab
    rel = np.stack([px - foot[:, 0], py - foot[:, 1]], axis=1)
    side = np.sign(np.sum(rel * nrm, axis=1))
    yv = side * best_d
    sv = s_start[k] + best_l * L

    lvl = float(np.mean(_bilinear(field, pts[:, 0], pts[:, 1]))) if t is None else float(t)
    w = field.values[cj, ci] - lvl
    near = inside & (np.abs(yv) > 0.5 * h)
    orient = 1.0
    if near.any():
        score = np.sum(np.sign(yv[near]) * w[near])
        orient = -1.0 if score < 0 else 1.0

    shape = g.shape
    sbar = np.full(shape, np.nan)
    yy = np.full(shape, np.nan)
    normal = np.full(shape + (2,), np.nan)
    tangent = np.full(shape + (2,), np.nan)
    jj, ii = cj[inside], ci[inside]
    sbar[jj, ii] = sv[inside]
    yy[jj, ii] = orient * yv[inside]
    normal[jj, ii] = orient * nrm[inside]
    tangent[jj, ii] = tan[inside]
    for arr in (sbar, yy, normal, tangent):
        arr.setflags(write=False)
    return TubularChart(curve, lvl, float(reach), sbar, yy, normal, tangent, periodic, vs, excluded)


def _self_distance_guard(pts, vs, periodic, total, h):
    """Raise when two parts of the curve far apart in arclength come within 4h."""
    if len(pts) < 4:
        return
    step = max(1, len(pts) // 2000)
    sub = pts[::step]
    ss = vs[::step]
    d = np.hypot(sub[:, None, 0] - sub[None, :, 0], sub[:, None, 1] - sub[None, :, 1])
    sep = np.abs(ss[:, None] - ss[None, :])
    if periodic:
        sep = np.minimum(sep, total - sep)
    far = sep > 8 * h
    if np.any(far & (d < 4 * h)):
        raise ChartError("curve comes within 4h of itself; strip too tight at this resolution")


def _bilinear(field: ScalarField, x, y):
    g = field.grid
    fi = (np.asarray(x) - g.origin[0]) / g.h
    fj = (np.asarray(y) - g.origin[1]) / g.h
    vals = np.where(g.node_mask, field.values, 0.0)
    out = map_coordinates(vals, [fj, fi], order=1, mode="nearest")
    ok = map_coordinates(g.node_mask.astype(float), [fj, fi], order=1, mode="constant", cval=0.0)
    return np.where(ok > 1 - 1e-9, out, np.nan)


# sides and profile ---------------------------------------------------------------

def classify_sides(field: ScalarField, chart: TubularChart, t: float, tol: float | None = None,
                   width: float | None = None) -> str:
    """Decide which smoothing case applies to the curve at level ``t``.

    Only nodes with ``h/2 < |y| < width`` are inspected (default: the chart
    reach).  Values within ``tol`` of ``t`` count as flat.
    """
    return _sides(field, chart, t, tol, width)[0]


def _sides(field, chart, t, tol, width):
    g = field.grid
    tol = 1e-9 * max(field.value_range, 1e-300) if tol is None else tol
    width = chart.reach if width is None else width
    w = field.values - t
    y = chart.y
    signs = {}
    for side in (1, -1):
        sel = chart.covered & (side * np.nan_to_num(y) > 0.5 * g.h) & (np.abs(np.nan_to_num(y)) < width)
        vals = w[sel]
        pos, neg = bool(np.any(vals > tol)), bool(np.any(vals < -tol))
        if pos and neg:
            raise SideClassificationError(f"mixed signs on side {side:+d} of the curve at t={t:g}")
        signs[side] = 1 if pos else (-1 if neg else 0)
    sp, sm = signs[1], signs[-1]
    if sp == 0 and sm == 0:
        case = "AllFlat"
    elif sp == 0 or sm == 0:
        case = "OneSidedExp"
    elif sp == -sm:
        if sp < 0:
            raise SideClassificationError("chart orientation disagrees with the field")
        case = "TwoSided"
    else:
        if chart.periodic:
            raise SideClassificationError("same sign on both sides of a closed curve: "
                                          "the field is not monotone near it")
        case = "SameSignExp"
    return case, signs


def node_gradient(field: ScalarField):
    """Node gradient from central differences, one-sided at the domain edge."""
    v = field.values
    h = field.grid.h

    def axis_diff(ax):
        fwd = (np.roll(v, -1, axis=ax) - v) / h
        bwd = (v - np.roll(v, 1, axis=ax)) / h
        n = v.shape[ax]
        idx = [slice(None)] * 2
        idx[ax] = slice(n - 1, n)
        fwd[tuple(idx)] = np.nan
        idx[ax] = slice(0, 1)
        bwd[tuple(idx)] = np.nan
        out = 0.5 * (fwd + bwd)
        out = np.where(np.isnan(out), np.where(np.isnan(fwd), bwd, fwd), out)
        return out

    return axis_diff(1), axis_diff(0)


def fit_profile(field: ScalarField, chart: TubularChart, case: str | None = None,
                safety: float = 0.1, beta_max: float | None = None, t: float | None = None,
                tol: float | None = None) -> SmoothingProfile:
    """Choose ``beta, gamma, delta`` from the field's derivatives on the strip.

    ``beta`` starts at ``min(reach/2, beta_max)`` and halves until the normal
    derivative is bounded away from zero on every active side.
    """
    g = field.grid
    t = chart.t if t is None else t
    case_found, signs = _sides(field, chart, t, tol, None)
    case = case_found if case is None else case
    if case == "AllFlat":
        return SmoothingProfile(0.0, 0.0, 0.0, "AllFlat", (), signs)
    active = tuple(s for s in (1, -1) if signs[s] != 0)
    gx, gy = node_gradient(field)
    uy = gx * chart.normal[..., 0] + gy * chart.normal[..., 1]
    us = gx * chart.tangent[..., 0] + gy * chart.tangent[..., 1]
    beta = 0.5 * chart.reach if beta_max is None else min(0.5 * chart.reach, beta_max)
    yabs = np.abs(np.nan_to_num(chart.y, nan=np.inf))
    ysgn = np.sign(np.nan_to_num(chart.y))
    while beta >= 4 * g.h:
        strip = chart.covered & (yabs < beta) & (yabs > 0.5 * g.h) & g.node_mask
        m, big, ok = np.inf, 0.0, True
        for side in active:
            sel = strip & (ysgn == side)
            if not sel.any():
                continue
            # |u - t| grows away from the curve on an active side
            slope = signs[side] * side * uy[sel]
            slope = slope[np.isfinite(slope)]
            if slope.size == 0 or np.min(slope) <= 0:
                ok = False
                break
            m = min(m, float(np.min(slope)))
        if ok and np.isfinite(m):
            sel = strip & np.isin(ysgn, active)
            big = float(np.nanmax(np.maximum(np.abs(uy[sel]), np.abs(us[sel]))))
            return SmoothingProfile(float(beta), (1 - safety) * m, (1 + safety) * big, case, active, signs)
        beta *= 0.5
    raise DegeneracyError(f"normal derivative not bounded away from zero near the curve at t={t:g}")


# application ------------------------------------------------------------------

def strip_mask(chart: TubularChart, profile: SmoothingProfile) -> np.ndarray:
    """Nodes that a smoothing pass may modify (``s < 1`` on an active side)."""
    if profile.case == "AllFlat":
        return np.zeros(chart.y.shape, dtype=bool)
    y = np.nan_to_num(chart.y, nan=np.inf)
    inside = np.abs(y) < profile.beta
    if profile.case == "OneSidedExp":
        inside &= np.sign(y) == profile.active_sides[0]
    return inside & chart.covered


def _exp_model(yabs, beta, gamma):
    z = yabs / beta
    with np.errstate(divide="ignore", over="ignore"):
        m = gamma * beta * np.exp(-1.0 / np.where(z > 0, z, 1.0))
    return np.where(z > EXP_FLUSH, m, 0.0)


def apply_smoothing(field: ScalarField, chart: TubularChart, profile: SmoothingProfile,
                    t: float | None = None) -> ScalarField:
    """Blend ``field`` with the case's model term inside the strip."""
    t = chart.t if t is None else t
    if profile.case == "AllFlat":
        return field
    g = field.grid
    sel = strip_mask(chart, profile) & g.node_mask
    out = field.values.copy()
    y = chart.y[sel]
    s = np.abs(y) / profile.beta
    a = alpha(s)
    w = field.values[sel] - t
    if profile.case == "TwoSided":
        model = y * profile.gamma
    else:
        sign = np.where(y > 0, profile.signs.get(1, 0), profile.signs.get(-1, 0)).astype(float)
        model = sign * _exp_model(np.abs(y), profile.beta, profile.gamma)
    out[sel] = t + a * w + (1.0 - a) * model
    return field.with_values(out)


# kink measure --------------------------------------------------------------------

def kink_measure(field: ScalarField, curve: LevelCurve, t: float | None, offset: float | None = None,
                 normals: np.ndarray | None = None, exclude: np.ndarray | None = None):
    """Jump of the one-sided normal derivatives across ``curve``.

    At each vertex the field is sampled bilinearly at ``+-offset`` and
    ``+-2*offset`` along the vertex normal and second-order one-sided
    differences are formed about the centre value ``t``; with ``t=None``
    the centre value is sampled too, which is what a field that is not
    level on ``curve`` needs.  Returns ``(max_jump, per_vertex)``; vertices
    whose samples leave the domain, or give weight to a node of the boolean
    mask ``exclude``, are NaN.
    """
    g = field.grid
    a = g.h if offset is None else offset
    pts = np.asarray(curve.points, dtype=float)
    if normals is None:
        normals = _vertex_normals(pts, curve.closed)
    nx, ny = normals[:, 0], normals[:, 1]
    f = {k: _bilinear(field, pts[:, 0] + k * a * nx, pts[:, 1] + k * a * ny) for k in (-2, -1, 1, 2)}
    c = _bilinear(field, pts[:, 0], pts[:, 1]) if t is None else t
    dplus = (4 * (f[1] - c) - (f[2] - c)) / (2 * a)
    dminus = (-4 * (f[-1] - c) + (f[-2] - c)) / (2 * a)
    jump = np.abs(dplus - dminus)
    if exclude is not None:
        g = field.grid
        hit = np.zeros(len(pts), dtype=bool)
        for k in (-2, -1, 0, 1, 2):
            fi = (pts[:, 0] + k * a * nx - g.origin[0]) / g.h
            fj = (pts[:, 1] + k * a * ny - g.origin[1]) / g.h
            hit |= map_coordinates(exclude.astype(float), [fj, fi], order=1, mode="constant", cval=0.0) > 0
        jump = np.where(hit, np.nan, jump)
    finite = jump[np.isfinite(jump)]
    return (float(finite.max()) if finite.size else 0.0), jump


def _vertex_normals(pts, closed):
    d = np.diff(pts, axis=0)
    L = np.hypot(d[:, 0], d[:, 1])
    tan = d / np.maximum(L, 1e-300)[:, None]
    vt = np.zeros_like(pts)
    vt[:-1] += tan
    vt[1:] += tan
    if closed and len(tan) > 1:
        vt[0] += tan[-1]
        vt[-1] += tan[0]
    n = np.hypot(vt[:, 0], vt[:, 1])
    vt = vt / np.maximum(n, 1e-300)[:, None]
    return np.stack([-vt[:, 1], vt[:, 0]], axis=1)
