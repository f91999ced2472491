import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monoapprox import builtin, builtin_nodes
from monoapprox.grid import DomainGrid, gradient, sample_analytic
from monoapprox.levelset import LevelCurve, extract_level_set
from monoapprox.monotonicity import is_monotone, glue_strict_over
from monoapprox.smoothing import (ChartError, SideClassificationError, SmoothingProfile, alpha,
                                  alpha_prime, apply_smoothing, build_chart, classify_sides,
                                  fit_profile, kink_measure, strip_mask)


def line_grid(n=33, half=0.5):
    """Grid on [0, ~1] x [-half, half] with n cells across, so no node row sits on y = 0."""
    h = 2 * half / n
    nx = int(round(1 / h)) + 1
    return DomainGrid(nx, n + 1, h, (0.0, -half), np.ones((n + 1, nx), bool))


def horizontal_curve(x0=0.0, x1=1.0, n=65):
    xs = np.linspace(x0, x1, n)
    return LevelCurve(np.column_stack([xs, np.zeros(n)]), False, True, np.zeros(n - 1, dtype=np.int64))


def line_chart(f, n=33, half=0.5, reach=None):
    g = line_grid(n, half)
    u = sample_analytic(f, g)
    chart = build_chart(u, horizontal_curve(0.0, g.x[-1]), reach or 0.9 * half, t=0.0)
    return u, chart


# alpha ----------------------------------------------------------------------------

def test_alpha_profile_bounds():
    t = np.linspace(-1, 2, 3001)
    a = alpha(t)
    da = alpha_prime(t)
    assert np.all((a >= 0) & (a <= 1))
    assert np.all(a[t <= 0.5] == 0) and np.all(a[t >= 1] == 1)
    assert np.all(da >= 0) and da.max() <= 4
    inner = (t > 0.51) & (t < 0.99)
    num = np.gradient(a, t)
    assert np.allclose(num[inner], da[inner], atol=1e-4)


# charts ---------------------------------------------------------------------------

def test_flat_chart_from_extracted_line():
    h = 1 / 32
    g = DomainGrid.box(0, 1, 0, 1, h)
    u = sample_analytic(lambda x, y: x + 0 * y, g)
    (curve,) = extract_level_set(u, 0.5).components
    chart = build_chart(u, curve, 0.1)
    cov = chart.covered
    assert cov.any()
    assert np.allclose(chart.y[cov], (g.X - 0.5)[cov], atol=1e-12)
    sb = chart.sbar[cov]
    Y = g.Y[cov]
    assert np.allclose(sb, Y, atol=1e-12) or np.allclose(sb, 1 - Y, atol=1e-12)
    assert not chart.periodic


def test_polar_chart_from_circle():
    u = builtin("radial-annulus", 1 / 64)
    (curve,) = extract_level_set(u, 0.5).components
    chart = build_chart(u, curve, 0.1)
    g = u.grid
    cov = chart.covered
    r = np.hypot(g.X, g.Y)
    assert chart.periodic
    assert np.max(np.abs(chart.y[cov] - (r[cov] - 0.5))) < 2e-3
    theta = np.arctan2(g.Y, g.X)[cov]
    total = chart.vertex_s[-1]
    assert total == pytest.approx(np.pi, rel=1e-3)
    # sbar is 0.5 * angle up to an additive constant and the orientation
    for sgn in (1, -1):
        d = np.mod(chart.sbar[cov] - sgn * 0.5 * theta, total)
        d = np.mod(d - d[0] + total / 2, total) - total / 2
        if np.max(np.abs(d)) < 5e-3:
            break
    else:
        pytest.fail("sbar is not proportional to the polar angle")


def point_segment_distance(px, py, a, b):
    ab = b - a
    L2 = np.sum(ab * ab, axis=1)
    lam = np.clip(((px - a[:, 0]) * ab[:, 0] + (py - a[:, 1]) * ab[:, 1]) / L2, 0, 1)
    fx, fy = a[:, 0] + lam * ab[:, 0], a[:, 1] + lam * ab[:, 1]
    return np.hypot(px - fx, py - fy)


def test_hyperbola_chart_is_injective():
    u = builtin("saddle", 1 / 64)
    an = extract_level_set(u, 0.5)
    curve = max(an.components, key=lambda c: c.points[0][0])
    chart = build_chart(u, curve, 0.15)
    g = u.grid
    pts = curve.points
    # open curves carry a straight extension of length reach past each end
    d0 = (pts[0] - pts[1]) / np.hypot(*(pts[0] - pts[1]))
    d1 = (pts[-1] - pts[-2]) / np.hypot(*(pts[-1] - pts[-2]))
    pts = np.vstack([pts[:1] + chart.reach * d0, pts, pts[-1:] + chart.reach * d1])
    a, b = pts[:-1], pts[1:]
    nseg = len(a)
    seen = {}
    for j, i in np.argwhere(chart.covered):
        px, py = g.X[j, i], g.Y[j, i]
        d = point_segment_distance(px, py, a, b)
        k = int(np.argmin(d))
        # the chart offset is the true distance to the polyline
        assert abs(abs(chart.y[j, i]) - d[k]) < 1e-9
        # no far-away segment is (almost) as close
        far = np.abs(np.arange(nseg) - k) > 2
        assert np.all(d[far] > d[k] + 1e-12)
        key = (round(float(chart.sbar[j, i]), 9), round(float(chart.y[j, i]), 9))
        assert key not in seen
        seen[key] = (i, j)


def test_chart_errors():
    u, _ = line_chart(lambda x, y: y + 0 * x)
    with pytest.raises(ChartError):
        build_chart(u, horizontal_curve(), 1.5 * u.grid.h)
    # a hairpin whose two legs are 2h apart
    h = u.grid.h
    xs = np.linspace(0.1, 0.9, 40)
    pts = np.vstack([np.column_stack([xs, np.full(40, 0.0)]),
                     np.column_stack([xs[::-1], np.full(40, 2 * h)])])
    hairpin = LevelCurve(pts, False, True, np.zeros(len(pts) - 1, dtype=np.int64))
    with pytest.raises(ChartError):
        build_chart(u, hairpin, 0.2)


# sides ----------------------------------------------------------------------------

def test_classify_sides_cases():
    u, chart = line_chart(lambda x, y: y + 0 * x)
    assert classify_sides(u, chart, 0.0) == "TwoSided"
    v, chart = line_chart(lambda x, y: np.maximum(y, 0) + 0 * x)
    assert classify_sides(v, chart, 0.0) == "OneSidedExp"
    w, chart = line_chart(lambda x, y: np.abs(y) + 0 * x)
    assert classify_sides(w, chart, 0.0) == "SameSignExp"
    z, chart = line_chart(lambda x, y: 0 * x + 0 * y)
    assert classify_sides(z, chart, 0.0) == "AllFlat"


def test_classify_sides_errors():
    u, chart = line_chart(lambda x, y: y * np.sin(2 * np.pi * x) + 0.0)
    with pytest.raises(SideClassificationError):
        classify_sides(u, chart, 0.0)
    ring = builtin("radial-annulus", 1 / 64)
    (curve,) = extract_level_set(ring, 0.5).components
    bump = ring.with_values((ring.values - 0.5) ** 2)
    chart = build_chart(bump, curve, 0.1, t=0.0)
    with pytest.raises(SideClassificationError):
        classify_sides(bump, chart, 0.0)


# profile --------------------------------------------------------------------------

def test_fit_profile_unit_slope():
    u, chart = line_chart(lambda x, y: y + 0 * x)
    prof = fit_profile(u, chart, safety=0.1)
    assert prof.case == "TwoSided"
    assert prof.gamma == pytest.approx(0.9, abs=1e-12)
    assert prof.delta >= 1.1 - 1e-12
    assert 4 * u.grid.h <= prof.beta <= chart.reach / 2


def test_fit_profile_sine_perturbation():
    f = lambda x, y: 2 * y + 0.1 * np.sin(x)
    g = line_grid(65, 0.5)
    u = sample_analytic(f, g)
    # the level set of 2y + 0.1 sin(x) through y = 0 is a graph; use the analytic curve
    xs = np.linspace(0, g.x[-1], 400)
    curve = LevelCurve(np.column_stack([xs, -0.05 * np.sin(xs)]), False, True,
                       np.zeros(399, dtype=np.int64))
    chart = build_chart(u, curve, 0.2, t=0.0)
    prof = fit_profile(u, chart, safety=0.1, beta_max=0.1)
    # oracle: analytic partials on the strip nodes
    strip = chart.covered & (np.abs(np.nan_to_num(chart.y, nan=9)) < prof.beta)
    n = chart.normal[strip]
    tg = chart.tangent[strip]
    grad = np.column_stack([0.1 * np.cos(g.X[strip]), np.full(strip.sum(), 2.0)])
    uy = np.sum(grad * n, axis=1)
    us = np.sum(grad * tg, axis=1)
    assert prof.gamma == pytest.approx(0.9 * uy.min(), rel=2e-3)
    assert prof.gamma == pytest.approx(0.9 * 2, rel=5e-3)
    assert prof.delta >= 1.1 * max(np.abs(uy).max(), np.abs(us).max()) * (1 - 2e-3)
    assert prof.delta >= 1.1 * 2 * (1 - 1e-3)


def test_fit_profile_flat_side():
    v, chart = line_chart(lambda x, y: np.maximum(y, 0) + 0 * x)
    prof = fit_profile(v, chart)
    assert prof.case == "OneSidedExp" and prof.active_sides == (1,)
    assert prof.gamma == pytest.approx(0.9, abs=1e-12)


def test_profile_json():
    prof = SmoothingProfile(0.1, 0.5, 1.2, "TwoSided")
    assert '"case": "TwoSided"' in prof.to_json()
    with pytest.raises(ValueError):
        SmoothingProfile(0.1, 0.5, 1.2, "Other")
    with pytest.raises(ValueError):
        SmoothingProfile(0.0, 0.5, 1.2, "TwoSided")


# application ----------------------------------------------------------------------

def closed_form_setup():
    u, chart = line_chart(lambda x, y: y + 0 * x, n=99, half=1.5, reach=1.45)
    return u, chart, SmoothingProfile(1.0, 0.5, 1.1, "TwoSided")


def test_two_sided_closed_form():
    u, chart, prof = closed_form_setup()
    out = apply_smoothing(u, chart, prof, 0.0)
    y = u.grid.Y
    expected = y * (0.5 + 0.5 * alpha(np.abs(y)))
    assert np.max(np.abs(out.values - expected)) <= 1e-12
    inner = np.abs(y) <= 0.5
    assert np.max(np.abs(out.values[inner] - 0.5 * y[inner])) <= 1e-12


def test_outside_the_strip_is_bit_identical():
    u, chart, prof = closed_form_setup()
    out = apply_smoothing(u, chart, prof, 0.0)
    s = np.abs(np.nan_to_num(chart.y, nan=np.inf)) / prof.beta
    assert np.array_equal(out.values[s >= 1], u.values[s >= 1])
    assert not np.any((out.values != u.values) & ~strip_mask(chart, prof))


def test_transversal_slope():
    u, chart, prof = closed_form_setup()
    out = apply_smoothing(u, chart, prof, 0.0).values
    h = u.grid.h
    strip = strip_mask(chart, prof)
    both = strip[1:] & strip[:-1]
    slope = (out[1:] - out[:-1]) / h
    assert np.all(slope[both] >= prof.gamma * (1 - 2 * h / prof.beta))


def test_saddle_branch_sup_bound():
    u = builtin("saddle", 1 / 64)
    t = 0.5
    curve = max(extract_level_set(u, t).components, key=lambda c: c.points[0][0])
    chart = build_chart(u, curve, 0.15, t=t)
    prof = fit_profile(u, chart, t=t)
    assert prof.case == "TwoSided"
    out = apply_smoothing(u, chart, prof, t)
    strip = strip_mask(chart, prof)
    err = np.abs(out.values - u.values)
    model_gap = np.abs(u.values - t - chart.y * prof.gamma)[strip]
    assert err[strip].max() <= model_gap.max() + 1e-12
    assert model_gap.max() <= prof.beta * (prof.gamma + prof.delta)
    assert np.all(err[~strip] == 0)


def test_gradient_bound_on_strip():
    u = builtin("saddle", 1 / 64)
    t = 0.5
    curve = max(extract_level_set(u, t).components, key=lambda c: c.points[0][0])
    chart = build_chart(u, curve, 0.15, t=t)
    prof = fit_profile(u, chart, t=t)
    out = apply_smoothing(u, chart, prof, t)
    strip = strip_mask(chart, prof)
    cells = strip[:-1, :-1] & strip[1:, :-1] & strip[:-1, 1:] & strip[1:, 1:]
    gn = gradient(out).norm[cells]
    bound = 4 * (prof.gamma + prof.delta) + prof.delta + prof.gamma
    # curvature of the branch is at most 1/sqrt(2) here; allow curvature * beta on top
    assert gn.max() <= bound * (1 + prof.beta)


def test_exp_case_is_one_signed_and_increasing():
    v, chart = line_chart(lambda x, y: np.maximum(y, 0) + 0 * x, n=65)
    prof = fit_profile(v, chart)
    out = apply_smoothing(v, chart, prof, 0.0).values
    strip = strip_mask(chart, prof)
    y = v.grid.Y
    assert np.all(out[strip & (y > 0)] >= 0)
    assert np.array_equal(out[y < 0], v.values[y < 0])
    cols = out[(y[:, 0] > 0), :]
    assert np.all(np.diff(cols, axis=0) >= 0)
    near = strip & (y > prof.beta * 0.2)
    assert np.all(out[near] > 0)


def test_same_sign_exp_keeps_level():
    w, chart = line_chart(lambda x, y: np.abs(y) + 0 * x, n=65)
    prof = fit_profile(w, chart)
    assert prof.case == "SameSignExp"
    out = apply_smoothing(w, chart, prof, 0.0).values
    strip = strip_mask(chart, prof)
    assert np.all(out[strip] >= 0)
    assert np.all(out[strip] <= w.values[strip] + 1e-15)


def test_all_flat_is_identity():
    z, chart = line_chart(lambda x, y: 0 * x + 0 * y)
    prof = fit_profile(z, chart)
    assert apply_smoothing(z, chart, prof, 0.0) is z


def test_halving_beta_shrinks_support():
    u, chart = line_chart(lambda x, y: y + 0.4 * y * y + 0 * x, n=65)
    prof = fit_profile(u, chart)
    half = SmoothingProfile(prof.beta / 2, prof.gamma, prof.delta, prof.case, prof.active_sides,
                            prof.signs)
    a = apply_smoothing(u, chart, prof, 0.0).values != u.values
    b = apply_smoothing(u, chart, half, 0.0).values != u.values
    assert b.sum() < a.sum() and not np.any(b & ~a)


def test_post_smoothing_field_is_monotone():
    u, chart = line_chart(lambda x, y: y + 0.3 * y * np.abs(y) + 0 * x, n=33)
    prof = fit_profile(u, chart)
    out = apply_smoothing(u, chart, prof, 0.0)
    strip = strip_mask(chart, prof)
    outer = strip.copy()
    for _ in range(2):
        outer[1:] |= outer[:-1].copy()
        outer[:-1] |= outer[1:].copy()
    verdict = glue_strict_over(u, out, strip, outer)
    assert verdict.monotone
    assert is_monotone(out, method="exhaustive-window").monotone


def test_kink_is_removed():
    f = lambda x, y: y + 0.5 * np.abs(y) + 0 * x
    u, chart = line_chart(f, n=65)
    curve = chart.curve
    before, _ = kink_measure(u, curve, 0.0, offset=u.grid.h)
    assert before == pytest.approx(1.0, abs=1e-9)
    prof = fit_profile(u, chart)
    out = apply_smoothing(u, chart, prof, 0.0)
    after, _ = kink_measure(out, curve, 0.0, offset=u.grid.h)
    assert after < 1e-9 < before


@given(a=st.floats(0.2, 3), b=st.floats(-0.5, 0.5), c=st.floats(-0.2, 0.2))
@settings(max_examples=25, deadline=None)
def test_two_sided_properties(a, b, c):
    f = lambda x, y: a * y + b * y * np.abs(y) + c * y * np.sin(3 * x)
    u, chart = line_chart(f, n=65)
    prof = fit_profile(u, chart)
    out = apply_smoothing(u, chart, prof, 0.0).values
    strip = strip_mask(chart, prof)
    h = u.grid.h
    # support
    assert not np.any((out != u.values) & ~strip)
    # sup bound
    assert np.max(np.abs(out - u.values)) <= prof.beta * (prof.gamma + prof.delta)
    # transversal slope along each column (the normals of a horizontal line)
    both = strip[1:] & strip[:-1]
    slope = (out[1:] - out[:-1]) / h
    assert np.all(slope[both] >= prof.gamma * (1 - 2 * h / prof.beta))
