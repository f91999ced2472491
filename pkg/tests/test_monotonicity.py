import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monoapprox import builtin_nodes
from monoapprox.grid import DomainGrid, ScalarField, sample_analytic
from monoapprox.levelset import extract_level_set
from monoapprox.monotonicity import (ContainmentError, OverlapError, RangeViolation, glue_on_bands,
                                     glue_strict_over, is_monotone, is_strictly_monotone,
                                     local_extremal_values)
from monoapprox.partition import BandPartition

from conftest import brute_monotone, unit_grid

METHODS = ["exhaustive-window", "level-component"]


# is_monotone --------------------------------------------------------------------

@pytest.mark.parametrize("method", METHODS)
def test_linear_is_monotone(method):
    rep = is_monotone(sample_analytic(lambda x, y: x + 0 * y, unit_grid(1 / 16)), method=method)
    assert rep.monotone and rep.witnesses == []


@pytest.mark.parametrize("method", METHODS)
def test_bowl_has_witness_around_origin(method):
    u = builtin_nodes("bowl-disk", 33)
    rep = is_monotone(u, method=method)
    assert not rep.monotone
    w = rep.witnesses[0]
    assert w.kind == "min"
    assert w.contains(16, 16)
    assert w.boundary_value - w.interior_value > rep.tolerance
    # the window lies inside the domain
    i0, j0, i1, j1 = w.window
    assert u.grid.node_mask[j0:j1 + 1, i0:i1 + 1].all()


@pytest.mark.parametrize("method", METHODS)
def test_saddle_is_monotone(method):
    u = builtin_nodes("saddle", 17)
    assert brute_monotone(u.values, u.grid.node_mask, 1e-12) == []
    assert is_monotone(u, method=method, tolerance=1e-12).monotone


def test_constant_field_is_monotone():
    u = sample_analytic(lambda x, y: 0 * x + 2.0, unit_grid(0.25))
    assert is_monotone(u).monotone


def test_bad_arguments():
    u = sample_analytic(lambda x, y: x, unit_grid(0.25))
    with pytest.raises(ValueError):
        is_monotone(u, method="nope")
    with pytest.raises(ValueError):
        is_monotone(u, tolerance=-1.0)


def test_punctured_disk_radius():
    """r has an interior minimum on the disk but not once the origin is removed."""
    h = 1 / 16
    full = DomainGrid.box(-1, 1, -1, 1, h, lambda X, Y: np.hypot(X, Y) <= 1)
    mask = full.node_mask.copy()
    mask[16, 16] = False
    punctured = full.with_mask(mask)
    f = lambda x, y: np.hypot(x, y)
    for method in METHODS:
        rep = is_monotone(sample_analytic(f, full), method=method)
        assert not rep.monotone and rep.witnesses[0].contains(16, 16)
        assert is_monotone(sample_analytic(f, punctured), method=method).monotone


def test_report_json_lists_witness_coordinates():
    u = builtin_nodes("bowl-disk", 17)
    doc = json.loads(is_monotone(u).to_json(u.grid))
    assert doc["monotone"] is False and doc["method"] == "level-component"
    assert doc["witnesses"][0]["node_xy"] == [0.0, 0.0]


@pytest.mark.parametrize("name", ["linear", "saddle", "radial-annulus", "bowl-disk", "log-annulus",
                                  "sine-grid"])
def test_methods_agree_on_builtins(name):
    u = builtin_nodes(name, 33)
    a = is_monotone(u, method="exhaustive-window", tolerance=1e-12)
    b = is_monotone(u, method="level-component", tolerance=1e-12)
    assert a.monotone == b.monotone


@st.composite
def random_fields(draw):
    nx = draw(st.integers(3, 8))
    ny = draw(st.integers(3, 8))
    seed = draw(st.integers(0, 2**32 - 1))
    holes = draw(st.booleans())
    r = np.random.default_rng(seed)
    mask = np.ones((ny, nx), bool)
    if holes:
        mask &= r.random((ny, nx)) > 0.2
        mask[0, 0] = True
    vals = np.where(mask, np.round(r.normal(size=(ny, nx)), 1), np.nan)
    return ScalarField(DomainGrid(nx, ny, 1.0, (0.0, 0.0), mask), vals)


@given(u=random_fields())
@settings(max_examples=300, deadline=None)
def test_method_agreement_property(u):
    tol = 1e-12
    oracle = brute_monotone(u.values, u.grid.node_mask, tol)
    a = is_monotone(u, method="exhaustive-window", tolerance=tol)
    b = is_monotone(u, method="level-component", tolerance=tol)
    assert a.monotone == (not oracle)
    assert b.monotone == a.monotone
    for w in a.witnesses + b.witnesses:
        i0, j0, i1, j1 = w.window
        assert u.grid.node_mask[j0:j1 + 1, i0:i1 + 1].all()
        block = u.values[j0:j1 + 1, i0:i1 + 1]
        inner, rim = block[1:-1, 1:-1], np.concatenate([block[0], block[-1], block[:, 0], block[:, -1]])
        if w.kind == "max":
            assert inner.max() - rim.max() > tol
        else:
            assert rim.min() - inner.min() > tol


@given(u=random_fields(), a=st.floats(0.25, 8.0), b=st.floats(-5, 5))
@settings(max_examples=100, deadline=None)
def test_affine_invariance_property(u, a, b):
    v = u.with_values(a * u.values + b)
    for method in METHODS:
        r1 = is_monotone(u, method=method)
        r2 = is_monotone(v, method=method)
        assert r1.monotone == r2.monotone
        assert [w.window for w in r1.witnesses] == [w.window for w in r2.witnesses]


def test_uniform_limit_of_monotone_fields():
    g = unit_grid(1 / 8)
    f = sample_analytic(lambda x, y: np.maximum(x, 0.5) + 0 * y, g)
    gaps = []
    for k in (2, 4, 8, 16):
        fk = sample_analytic(lambda x, y, k=k: np.maximum(x, 0.5) + x / k + 0 * y, g)
        for method in METHODS:
            assert is_monotone(fk, method=method, tolerance=0.0).monotone
        gaps.append(float(np.max(np.abs(fk.values - f.values))))
    for method in METHODS:
        assert is_monotone(f, method=method, tolerance=max(gaps)).monotone


@given(t=st.floats(-0.9, 0.9).filter(lambda t: abs(t) > 0.02))
@settings(max_examples=20, deadline=None)
def test_diameter_bound_property(t):
    u = builtin_nodes("saddle", 65)
    h = u.grid.h
    bx = u.grid.X[u.grid.boundary_mask]
    by = u.grid.Y[u.grid.boundary_mask]
    for comp in extract_level_set(u, t).components:
        pts = np.asarray(comp.points)
        diam = np.max(np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1]))
        dist = np.min(np.hypot(pts[:, None, 0] - bx[None, :], pts[:, None, 1] - by[None, :]), axis=1)
        assert diam >= dist.max() - 2 * h


# strict monotonicity ------------------------------------------------------------

def test_strict_examples():
    g = unit_grid(1 / 8)
    assert is_strictly_monotone(sample_analytic(lambda x, y: x + 0 * y, g)).monotone
    assert not is_strictly_monotone(sample_analytic(lambda x, y: 0 * x + 1.0, g)).monotone
    plateau = sample_analytic(lambda x, y: np.maximum(x, 0.5) + 0 * y, g)
    assert is_monotone(plateau, method="exhaustive-window").monotone
    assert brute_monotone(plateau.values, g.node_mask) == []
    rep = is_strictly_monotone(plateau)
    assert not rep.monotone and rep.strict
    # every witness sits on the plateau
    for w in rep.witnesses:
        assert plateau.values[w.node[1], w.node[0]] == 0.5


# local extremal values ----------------------------------------------------------

def test_local_extremal_values():
    assert local_extremal_values(sample_analytic(lambda x, y: x + 0 * y, unit_grid(1 / 8))) == []
    assert local_extremal_values(builtin_nodes("bowl-disk", 33)) == [0.0]
    vals = local_extremal_values(builtin_nodes("sine-grid", 64))
    h = 2 / 63
    assert len(vals) == 2
    assert vals[0] == pytest.approx(-1.0, abs=(np.pi * h) ** 2)
    assert vals[1] == pytest.approx(1.0, abs=(np.pi * h) ** 2)


# gluing -------------------------------------------------------------------------

def test_identity_gluing():
    u = sample_analytic(lambda x, y: x + 0 * y, unit_grid(1 / 16))
    part = BandPartition.build(u, [0.25, 0.75])
    out = glue_on_bands(u, part, {c: u for c in range(part.n_components)})
    assert np.array_equal(out.values, u.values)


def test_range_violation_reported():
    u = sample_analytic(lambda x, y: x + 0 * y, unit_grid(1 / 16))
    part = BandPartition.build(u, [0.0, 1.0])
    vals = u.values.copy()
    vals[8, 8] = 1.5
    with pytest.raises(RangeViolation, match="node"):
        glue_on_bands(u, part, {0: u.with_values(vals)})


def test_interface_mismatch_reported():
    from monoapprox.monotonicity import InterfaceMismatch
    u = sample_analytic(lambda x, y: x + 0 * y, unit_grid(1 / 16))
    part = BandPartition.build(u, [0.0, 1.0])
    comp = part.labels == 0
    j, i = np.argwhere(comp)[0]
    vals = u.values.copy()
    vals[j, i] += 0.01
    with pytest.raises(InterfaceMismatch):
        glue_on_bands(u, part, {0: u.with_values(vals)})


def test_annulus_band_log_profile():
    u = builtin_nodes("radial-annulus", 65)
    part = BandPartition.build(u, [0.5, 0.75])
    r = u.values
    prof = 0.5 + 0.25 * np.log(r / 0.5) / np.log(1.5)
    reps = {}
    from monoapprox.monotonicity import free_mask
    for c in range(part.n_components):
        comp = part.component(c)
        reps[c] = u.with_values(np.where(free_mask(comp), prof, r))
    out = glue_on_bands(u, part, reps)
    assert is_monotone(out).monotone
    d = float(np.nanmax(np.abs(out.values - u.values)))
    assert 0 < d < 0.25


def test_glue_strict_over_examples():
    g = unit_grid(1 / 16)
    x = sample_analytic(lambda x, y: x + 0 * y, g)
    inner = np.zeros(g.shape, bool)
    inner[6:10, 6:10] = True
    outer = np.zeros(g.shape, bool)
    outer[4:12, 4:12] = True
    v = glue_strict_over(x, x, inner, outer)
    assert v.monotone and v.core_monotone and v.patch_strict

    y = sample_analytic(lambda x, y: y + 0 * x, g)
    strip_in = np.zeros(g.shape, bool)
    strip_in[7:9, :] = True
    strip_out = np.zeros(g.shape, bool)
    strip_out[5:11, :] = True
    assert glue_strict_over(y, y, strip_in, strip_out).monotone


def test_glue_strict_over_errors():
    g = unit_grid(1 / 16)
    x = sample_analytic(lambda x, y: x + 0 * y, g)
    inner = np.zeros(g.shape, bool)
    inner[6:10, 6:10] = True
    with pytest.raises(ContainmentError):
        glue_strict_over(x, x, inner, inner.copy())
    outer = np.zeros(g.shape, bool)
    outer[4:12, 4:12] = True
    with pytest.raises(OverlapError):
        glue_strict_over(x, x + 0.5, inner, outer)
