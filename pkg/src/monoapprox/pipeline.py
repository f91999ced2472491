"""Monotone approximation of a monotone field by p-harmonic pieces.

The pipeline has three stages.

1. Band replacement: partition the domain by a level schedule of gap below
   ``delta`` and replace the field by the discrete p-harmonic solution in
   every band component.
2. Lens replacement: around every level ``t_j`` pick regular levels
   ``t_j^- < t_j < t_j^+`` less than ``eta`` apart and solve again on the
   thin lens components.
3. Smoothing: blend the field with a smooth model term in a strip around
   every lens curve whose normal-derivative kink exceeds a tolerance.

Every stage checks its contract (uniform closeness, energy decrease,
monotonicity, where the field moved) and records it in a report.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .grid import ScalarField, gradient, lp_grad_distance, sup_distance
from .levelset import extract_level_set, select_regular_levels
from .monotonicity import dilate8, glue_on_bands, glue_strict_over, is_monotone
from .partition import BandPartition, LensPartition
from .pharmonic import DirichletProblem, SolverConfig, dirichlet_solve, p_energy
from .smoothing import (ChartError, apply_smoothing, build_chart, fit_profile, kink_measure,
                        strip_mask)

__all__ = [
    "PipelineConfig",
    "StageReport",
    "SmoothingRecord",
    "ApproxReport",
    "NotMonotoneError",
    "SolverError",
    "StripCollisionError",
    "band_levels",
    "step1_band_replace",
    "lens_levels",
    "step2_lens_replace",
    "step3_smooth_all",
    "approximate",
]


class NotMonotoneError(ValueError):
    pass


class SolverError(RuntimeError):
    pass


class StripCollisionError(ChartError):
    pass


@dataclass
class PipelineConfig:
    """Knobs of :func:`approximate`.

    ``delta``, ``eta`` and ``strip_scale`` default to ``eps/6``, ``eps/24``
    and the largest strip half-width whose a-priori sup change stays below
    ``eps/6``.  ``kink_tol`` is relative to the median gradient size of the
    stage-2 field; a lens curve is smoothed when its kink exceeds the kink
    of the input field along the same curve by more than that.
    """

    p: float = 2.0
    tol: float = 1e-8
    max_iter: int = 200
    eps_reg: float | None = None
    eps_reg_initial: float | None = None
    eps_reg_stages: int = 4
    delta: float | None = None
    eta: float | None = None
    strip_scale: float | None = None
    safety: float = 0.1
    kink_tol: float = 0.05
    kink_offset: float | None = None
    energy_slack: float = 0.0
    level_budget: int = 64
    jitter: float = 0.1
    grad_floor: float = 1e-3
    min_beta_cells: float = 4.0

    def solver(self) -> SolverConfig:
        return SolverConfig(self.p, self.tol, self.max_iter, self.eps_reg, self.eps_reg_initial,
                            self.eps_reg_stages)

    @classmethod
    def from_mapping(cls, doc: dict) -> "PipelineConfig":
        doc = dict(doc)
        solver = doc.pop("solver", {}) or {}
        allowed = set(cls.__dataclass_fields__)
        unknown = (set(doc) | set(solver)) - allowed
        if unknown:
            raise ValueError(f"unknown pipeline settings: {sorted(unknown)}")
        return cls(**{**doc, **solver})


@dataclass
class StageReport:
    name: str
    sup_to_input: float
    sup_to_original: float
    lp_grad_to_original: float
    energy_before: float
    energy_after: float
    monotone: bool
    changed_nodes: int
    assertions: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.assertions.values())

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SmoothingRecord:
    level: float
    component: int
    case: str
    closed: bool
    length: float
    kink_before: float
    kink_after: float
    applied: bool
    kink_input: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    delta: float = 0.0
    sup_change: float = 0.0
    nodes: int = 0
    reason: str = ""


@dataclass
class ApproxReport:
    eps: float
    p: float
    delta: float
    eta: float
    n_levels: int
    n_lenses: int
    stages: list[StageReport]
    sup_dist: float
    lp_grad_dist: float
    energy_original: float
    energy_final: float
    monotone: bool
    p_harmonic_fraction: float
    kink_max_before: float
    kink_max_after: float
    smoothing: list[SmoothingRecord]
    assertions: dict

    @property
    def passed(self) -> bool:
        return all(self.assertions.values()) and all(s.passed for s in self.stages)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _energy(f: ScalarField, p: float) -> float:
    return p_energy(f, p)


def _replace_on_partition(u: ScalarField, part, config: PipelineConfig):
    """Solve on the free nodes of every component and glue the result."""
    free = part.free & u.grid.full_ring_mask
    if not free.any():
        return u, None
    sol, rep = dirichlet_solve(DirichletProblem(u, free, config.solver()))
    if not rep.converged:
        raise SolverError(f"Dirichlet solve did not converge: residual {rep.grad_norm:.3g}")
    used = np.unique(part.labels[free])
    glued = glue_on_bands(u, part, {int(c): sol for c in used})
    return glued, rep


# stage 1 ------------------------------------------------------------------------

def band_levels(u: ScalarField, delta: float, jitter: float = 0.1, budget: int = 64) -> list[float]:
    """Level schedule covering the range of ``u`` with consecutive gaps below ``delta``.

    Interior targets are equispaced with spacing ``d <= 0.8 delta`` and moved
    by at most ``jitter * d`` to regular levels; two sentinel levels sit just
    outside the range.
    """
    lo, hi = u.vmin, u.vmax
    n = max(1, int(np.ceil((hi - lo) / (0.8 * delta))))
    d = (hi - lo) / n
    if n == 1:
        return [lo - 0.05 * d, hi + 0.05 * d]
    inner = [lo + k * d for k in range(1, n)]
    inner = select_regular_levels(u, inner, jitter * d, budget)
    return [lo - 0.05 * d] + inner + [hi + 0.05 * d]


def step1_band_replace(u: ScalarField, delta: float, config: PipelineConfig | None = None):
    """Replace ``u`` by its p-harmonic solve in every band component.

    Returns ``(u_delta, report, partition)``.
    """
    config = config or PipelineConfig()
    if delta <= 0:
        raise ValueError("delta must be positive")
    if not is_monotone(u):
        raise NotMonotoneError("input field is not monotone")
    levels = band_levels(u, delta, config.jitter, config.level_budget)
    part = BandPartition.build(u, levels)
    ud, rep = _replace_on_partition(u, part, config)
    p = config.p
    e0, e1 = _energy(u, p), _energy(ud, p)
    mono = is_monotone(ud).monotone
    sup = sup_distance(ud, u)
    v = ud.values
    range_ok = True
    for c, (lo, hi) in enumerate(part.bounds):
        vals = v[part.labels == c]
        tol = 1e-9 * max(u.value_range, 1e-300)
        if vals.size and (vals.min() < lo - tol or vals.max() > hi + tol):
            range_ok = False
    snap = 1e-9 * max(u.value_range, 1e-300)
    contain_ok = True
    for lo, hi in zip(levels, levels[1:]):
        sel = u.grid.node_mask & (v > lo) & (v < hi)
        if np.any((u.values[sel] < lo - snap) | (u.values[sel] > hi + snap)):
            contain_ok = False
    gaps = np.diff(levels)
    assertions = {
        "levels_gap_below_delta": bool(np.all(gaps < delta)),
        "partition_covers_domain": part.check_cover(u),
        "sup_below_2delta": sup < 2 * delta,
        "energy_not_increased": e1 <= e0,
        "monotone": mono,
        "band_ranges_respected": range_ok,
        "level_containment": contain_ok,
    }
    changed = (v != u.values) & u.grid.node_mask
    details = {"levels": levels, "components": part.n_components,
               "free_nodes": int((part.free & u.grid.full_ring_mask).sum()),
               "solver": rep.to_dict() if rep else None}
    report = StageReport("band", sup, sup, lp_grad_distance(ud, u, p), e0, e1, mono,
                         int(changed.sum()), assertions, details)
    return ud, report, part


# stage 2 ------------------------------------------------------------------------

def lens_levels(v: ScalarField, eta: float, levels, config: PipelineConfig):
    """Pairs ``(t_j^-, t_j^+)`` around every level inside the range of ``v``."""
    centers = [t for t in levels if v.vmin < t < v.vmax]
    if not centers:
        return [], []
    if len(centers) > 1 and eta >= np.min(np.diff(centers)):
        raise ValueError("eta must be below the minimal gap between levels")
    g = gradient(v)
    floor = config.grad_floor * v.value_range / max(v.grid.nx - 1, v.grid.ny - 1) / v.grid.h
    norm = np.nan_to_num(g.norm, nan=np.inf).ravel()

    def no_critical(t, analysis):
        for c in analysis.components:
            if c.kind == "Point" or np.any(norm[c.cells] < floor):
                return False
        return True

    targets = []
    for t in centers:
        targets += [t - eta / 3, t + eta / 3]
    found = select_regular_levels(v, targets, eta / 8, config.level_budget, accept=no_critical)
    pairs = [(found[2 * k], found[2 * k + 1]) for k in range(len(centers))]
    return pairs, centers


def step2_lens_replace(v: ScalarField, eta: float, levels, config: PipelineConfig | None = None,
                       original: ScalarField | None = None):
    """p-harmonic replacement on the lenses ``v^-1((t_j^-, t_j^+))``.

    Returns ``(w, report, partition)``.
    """
    config = config or PipelineConfig()
    if eta <= 0:
        raise ValueError("eta must be positive")
    original = v if original is None else original
    pairs, centers = lens_levels(v, eta, levels, config)
    ordering = all(b0 < a1 for (_, b0), (a1, _) in zip(pairs, pairs[1:])) and \
        all(a < t < b and b - a < eta for (a, b), t in zip(pairs, centers))
    lens = LensPartition.build(v, pairs, centers)
    if lens.n_components:
        w, rep = _replace_on_partition(v, lens, config)
    else:
        w, rep = v, None
    p = config.p
    e0, e1 = _energy(v, p), _energy(w, p)
    mono = is_monotone(w).monotone
    changed = (w.values != v.values) & v.grid.node_mask
    assertions = {
        "lens_ordering": ordering,
        "sup_below_eta": sup_distance(w, v) < eta,
        "energy_not_increased": e1 <= e0,
        "monotone": mono,
    }
    details = {"pairs": [list(pq) for pq in pairs], "components": lens.n_components,
               "free_nodes": int((lens.free & v.grid.full_ring_mask).sum()),
               "solver": rep.to_dict() if rep else None}
    report = StageReport("lens", sup_distance(w, v), sup_distance(w, original),
                         lp_grad_distance(w, original, p), e0, e1, mono, int(changed.sum()),
                         assertions, details)
    return w, report, lens


# stage 3 ------------------------------------------------------------------------

def _curves(w: ScalarField, lens: LensPartition):
    out = []
    for t in lens.levels:
        an = extract_level_set(w, t)
        for k, c in enumerate(an.components):
            if c.kind != "Point":
                out.append((t, k, c))
    return out


def step3_smooth_all(w: ScalarField, lens: LensPartition, strip_scale: float,
                     config: PipelineConfig | None = None, original: ScalarField | None = None,
                     sup_budget: float | None = None, order: str = "increasing"):
    """Smooth ``w`` across every kinked lens curve.

    A curve is smoothed when its kink exceeds the kink of ``original`` along
    the same curve by more than the kink tolerance; without ``original`` the
    reference kink is zero.  Curves are processed in ``order`` of level
    ("increasing" or "decreasing"); strips are disjoint, so the result does
    not depend on it.

    Returns ``(u_tilde, report, records, support)`` where ``support`` marks
    the nodes a smoothing pass modified.
    """
    if order not in ("increasing", "decreasing"):
        raise ValueError(f"unknown order {order!r}")
    config = config or PipelineConfig()
    reference = original
    original = w if original is None else original
    g = w.grid
    h = g.h
    curves = _curves(w, lens)
    pts = [np.asarray(c.points) for _, _, c in curves]
    owner = np.concatenate([np.full(len(q), k) for k, q in enumerate(pts)]) if pts else np.zeros(0, int)
    tree = cKDTree(np.vstack(pts)) if pts else None
    all_levels = sorted(set(lens.levels))
    offset = h if config.kink_offset is None else config.kink_offset
    gx = gradient(w)
    scale_ref = float(np.nanmedian(gx.norm[g.cell_mask])) if g.cell_mask.any() else 1.0
    kink_tol = config.kink_tol * scale_ref
    out = w
    support = np.zeros(g.shape, dtype=bool)
    patch_region = np.zeros(g.shape, dtype=bool)
    records = []
    range_ok = True
    fixed = g.boundary_mask
    seq = range(len(curves)) if order == "increasing" else range(len(curves) - 1, -1, -1)
    for k in seq:
        t, comp, curve = curves[k]
        # the boundary trace is kept, so vertices whose stencil reads it are not measured
        kb, _ = kink_measure(w, curve, t, offset, exclude=fixed)
        # the input's own kink along the same curve is the discretisation floor
        k0 = (kink_measure(reference, curve, None, offset, exclude=fixed)[0]
              if reference is not None else 0.0)
        rec = SmoothingRecord(float(t), comp, "", bool(curve.closed), curve.length, kb, kb, False,
                              kink_input=k0)
        records.append(rec)
        if kb <= k0 + kink_tol:
            rec.case, rec.reason = "skipped", "kink below tolerance"
            continue
        dmin = np.inf
        if tree is not None and len(pts) > 1:
            others = owner != k
            if others.any():
                sub = cKDTree(np.vstack([q for j, q in enumerate(pts) if j != k]))
                dmin = float(np.min(sub.query(pts[k])[0]))
        reach = min(2.0 * strip_scale, 0.5 * dmin)
        if reach <= config.min_beta_cells * 2 * h:
            raise StripCollisionError(
                f"curve at level {t:.6g} is {dmin:.3g} from its neighbour; strips of half-width "
                f">= {config.min_beta_cells:g}h do not fit")
        chart = build_chart(out, curve, reach, t=t)
        prof = fit_profile(out, chart, safety=config.safety, beta_max=strip_scale, t=t)
        rec.case = prof.case
        if prof.case == "AllFlat":
            rec.reason = "flat on both sides"
            continue
        if sup_budget is not None:
            while prof.beta * (prof.gamma + prof.delta) >= sup_budget and prof.beta / 2 >= config.min_beta_cells * h:
                prof = fit_profile(out, chart, safety=config.safety, beta_max=prof.beta / 2, t=t)
        new = apply_smoothing(out, chart, prof, t)
        # the boundary trace is never modified
        keep = g.boundary_mask
        new = new.with_values(np.where(keep, out.values, new.values))
        changed = (new.values != out.values) & g.node_mask
        idx = int(np.searchsorted(all_levels, t))
        lo = all_levels[idx - 1] if idx > 0 else -np.inf
        hi = all_levels[idx + 1] if idx + 1 < len(all_levels) else np.inf
        if changed.any():
            vals = new.values[changed]
            if vals.min() < lo or vals.max() > hi:
                range_ok = False
        ka, _ = kink_measure(new, curve, t, offset, exclude=fixed)
        rec.kink_after = ka
        rec.applied = True
        rec.beta, rec.gamma, rec.delta = prof.beta, prof.gamma, prof.delta
        rec.sup_change = float(np.max(np.abs(new.values[changed] - out.values[changed]))) if changed.any() else 0.0
        rec.nodes = int(changed.sum())
        support |= changed
        patch_region |= strip_mask(chart, prof)
        out = new
    records.sort(key=lambda r: (r.level, r.component))
    verdict = None
    if support.any():
        outer = dilate8(dilate8(support) | patch_region) & g.node_mask
        verdict = glue_strict_over(w, out, support, outer)
    p = config.p
    e0, e1 = _energy(w, p), _energy(out, p)
    mono = is_monotone(out).monotone
    applied = [r for r in records if r.applied]
    assertions = {
        "monotone": mono,
        "glue_verdict": True if verdict is None else verdict.monotone,
        "kink_decreased": all(r.kink_after < r.kink_before for r in applied if r.case == "TwoSided"),
        "kink_below_tolerance": all(r.kink_after <= r.kink_input + kink_tol for r in applied),
        "sup_within_profile_bound": all(r.sup_change <= r.beta * (r.gamma + r.delta) for r in applied),
        "values_inside_enclosing_band": range_ok,
    }
    details = {"curves": len(curves), "smoothed": len(applied), "kink_tol": kink_tol,
               "strip_scale": strip_scale,
               "glue_notes": [] if verdict is None else verdict.notes}
    report = StageReport("smooth", sup_distance(out, w), sup_distance(out, original),
                         lp_grad_distance(out, original, p), e0, e1, mono, int(support.sum()),
                         assertions, details)
    return out, report, records, support


# end to end ---------------------------------------------------------------------

def approximate(u: ScalarField, eps: float, config: PipelineConfig | None = None):
    """Monotone approximant of ``u`` within ``eps``, with the full report.

    Returns ``(u_tilde, report, stages)``; ``stages`` maps stage names to the
    intermediate fields.
    """
    config = config or PipelineConfig()
    if eps <= 0:
        raise ValueError("eps must be positive")
    delta = config.delta if config.delta is not None else eps / 6
    eta = config.eta if config.eta is not None else eps / 24
    templ = ScalarField(u.grid, u.values)
    v, r1, bands = step1_band_replace(templ, delta, config)
    w, r2, lens = step2_lens_replace(v, eta, bands.levels, config, original=u)
    budget = eps / 6
    strip_scale = config.strip_scale if config.strip_scale is not None else _default_strip(w, budget)
    ut, r3, records, support = step3_smooth_all(w, lens, strip_scale, config, original=u,
                                                sup_budget=budget)
    p = config.p
    g = u.grid
    e_u, e_t = _energy(u, p), _energy(ut, p)
    cm = g.cell_mask
    touched = support[:-1, :-1] | support[:-1, 1:] | support[1:, :-1] | support[1:, 1:]
    frac = float(np.sum(cm & ~touched) / max(np.sum(cm), 1))
    sup = sup_distance(ut, u)
    mono = is_monotone(ut).monotone
    changed = (ut.values != u.values) & g.node_mask
    allowed = ((bands.free | lens.free) & g.full_ring_mask) | support
    applied = [r for r in records if r.applied]
    assertions = {
        "sup_below_eps": sup < eps,
        "energy_not_increased": e_t <= e_u + config.energy_slack,
        "monotone": mono,
        "change_inside_bands_and_strips": bool(not np.any(changed & ~allowed)),
        "boundary_untouched": bool(not np.any(changed & g.boundary_mask)),
    }
    report = ApproxReport(
        eps=float(eps), p=float(p), delta=float(delta), eta=float(eta),
        n_levels=len(bands.levels), n_lenses=len(lens.pairs), stages=[r1, r2, r3],
        sup_dist=sup, lp_grad_dist=lp_grad_distance(ut, u, p), energy_original=e_u,
        energy_final=e_t, monotone=mono, p_harmonic_fraction=frac,
        kink_max_before=max((r.kink_before for r in applied), default=0.0),
        kink_max_after=max((r.kink_after for r in applied), default=0.0),
        smoothing=records, assertions=assertions)
    return ut, report, {"input": u, "band": v, "lens": w, "smooth": ut}


def _default_strip(w: ScalarField, budget: float) -> float:
    """Half-width whose a-priori sup change ``beta (gamma + delta)`` meets ``budget``
    for the typical gradient of ``w``."""
    norm = gradient(w).norm[w.grid.cell_mask]
    big = float(np.max(norm)) if norm.size else 1.0
    return budget / max(2.2 * big, 1e-300)
