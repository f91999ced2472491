"""The acceptance criteria, one test each, at their stated tolerances and resolutions.

Every test prints a ``criterion N: PASS|FAIL`` line; the lines are repeated in
the pytest terminal summary.
"""

import json
import math
import time

import numpy as np

from monoapprox import builtin, builtin_nodes
from monoapprox.cli import main
from monoapprox.grid import DomainGrid, sample_analytic, sup_distance
from monoapprox.levelset import LevelCurve, coarea_check, extract_level_set
from monoapprox.monotonicity import is_monotone
from monoapprox.pharmonic import DirichletProblem, SolverConfig, dirichlet_solve
from monoapprox.pipeline import PipelineConfig, approximate
from monoapprox.smoothing import SmoothingProfile, alpha, apply_smoothing, build_chart, strip_mask

from test_levelset import saddle_gradient_integral
from test_pharmonic import annulus_problem, log_profile, p4_profile, shoot_radial

H = 1 / 128


def test_criterion_1_monotonicity(criterion):
    start = time.perf_counter()
    problems = []
    for name, expected in (("linear", True), ("saddle", True), ("bowl-disk", False)):
        rep = is_monotone(builtin_nodes(name, 33))
        if rep.monotone != expected:
            problems.append(f"{name} verdict {rep.monotone}")
    bowl = is_monotone(builtin_nodes("bowl-disk", 33))
    if not (bowl.witnesses and bowl.witnesses[0].contains(16, 16)):
        problems.append("bowl-disk witness misses the origin")
    for name in ("linear", "saddle", "radial-annulus", "bowl-disk", "log-annulus", "sine-grid"):
        u = builtin_nodes(name, 33)
        a = is_monotone(u, method="exhaustive-window", tolerance=1e-12).monotone
        b = is_monotone(u, method="level-component", tolerance=1e-12).monotone
        if a != b:
            problems.append(f"methods disagree on {name}")
    elapsed = time.perf_counter() - start
    if elapsed >= 10:
        problems.append(f"runtime {elapsed:.1f}s")
    ok = criterion(1, not problems, f"monotonicity verdicts and method agreement ({elapsed:.1f}s) "
                   + "; ".join(problems))
    assert ok, problems


def test_criterion_2_level_sets(criterion):
    start = time.perf_counter()
    problems = []
    saddle = builtin("saddle", H)
    if not extract_level_set(saddle, 0.0).junctions:
        problems.append("no junction at t=0")
    bcells = None
    for t in (0.1, -0.1):
        an = extract_level_set(saddle, t)
        if an.classification != ["Arc", "Arc"] or an.junctions:
            problems.append(f"t={t}: {an.classification}")
        for c in an.components:
            if not c.touches_boundary:
                problems.append(f"t={t}: arc end off the boundary")
    ring = extract_level_set(builtin("radial-annulus", H), 0.5)
    if ring.classification != ["JordanCurve"]:
        problems.append(f"annulus classes {ring.classification}")
    rel = abs(ring.total_length - math.pi) / math.pi
    if rel > 0.01:
        problems.append(f"circle length error {rel:.2%}")
    elapsed = time.perf_counter() - start
    if elapsed >= 5:
        problems.append(f"runtime {elapsed:.1f}s")
    ok = criterion(2, not problems, f"level-set classes, circle length error {rel:.2e} "
                   f"({elapsed:.1f}s) " + "; ".join(problems))
    assert ok, problems


def test_criterion_3_coarea(criterion):
    start = time.perf_counter()
    errors = {}
    for name in ("linear", "radial-annulus", "saddle"):
        errors[name] = coarea_check(builtin(name, H), 64).rel_error
    # the saddle right-hand side is checked against 2D quadrature as well
    rhs = coarea_check(builtin("saddle", H), 64).rhs
    rhs_err = abs(rhs - saddle_gradient_integral()) / rhs
    elapsed = time.perf_counter() - start
    ok = all(e <= 0.02 for e in errors.values()) and rhs_err <= 0.02 and elapsed < 30
    text = ", ".join(f"{k} {v:.2e}" for k, v in errors.items())
    criterion(3, ok, f"co-area relative errors {text}; saddle rhs vs quadrature {rhs_err:.1e} "
              f"({elapsed:.1f}s)")
    assert ok


def test_criterion_4_dirichlet(criterion):
    start = time.perf_counter()
    prob, exact = annulus_problem(H, log_profile, 2.0)
    sol, _ = dirichlet_solve(prob)
    err2 = float(np.max(np.abs(sol.values - exact)[prob.region]))
    rs, us = shoot_radial(4.0)
    oracle_gap = float(np.max(np.abs(us - p4_profile(rs))))
    prob, exact = annulus_problem(H, p4_profile, 4.0)
    sol, _ = dirichlet_solve(prob)
    err4 = float(np.max(np.abs(sol.values - exact)[prob.region]))
    affine = {}
    g = DomainGrid.box(0, 1, 0, 1, 1 / 32)
    target = sample_analytic(lambda x, y: 0.3 * x - 0.7 * y + 0.2, g)
    region = g.full_ring_mask & ~g.boundary_mask
    start_vals = np.where(region, 0.0, target.values)
    for p in (1.5, 2.0, 3.0, 4.0):
        s, _ = dirichlet_solve(DirichletProblem(target.with_values(start_vals), region, SolverConfig(p=p)))
        affine[p] = float(np.max(np.abs(s.values - target.values)))
    elapsed = time.perf_counter() - start
    ok = (err2 <= 5e-3 and oracle_gap <= 1e-8 and err4 <= 1e-2
          and all(v <= 1e-6 for v in affine.values()) and elapsed < 120)
    criterion(4, ok, f"p=2 err {err2:.2e}, p=4 err {err4:.2e} (shooting vs closed form {oracle_gap:.1e}), "
              f"affine max {max(affine.values()):.1e} ({elapsed:.1f}s)")
    assert ok


def _pipeline_checks(u, eps, p, exhaustive):
    ut, rep, st = approximate(u, eps, PipelineConfig(p=p))
    delta = rep.delta
    issues = []
    if not rep.sup_dist < eps:
        issues.append("sup")
    if not rep.energy_final <= rep.energy_original:
        issues.append("energy")
    mono = is_monotone(ut, method="exhaustive-window" if exhaustive else "level-component")
    if not mono.monotone:
        issues.append("monotone")
    if not rep.assertions["change_inside_bands_and_strips"]:
        issues.append("support")
    if not sup_distance(st["band"], u) < 2 * delta:
        issues.append("stage-1 sup")
    smoothed = [r for r in rep.smoothing if r.applied and r.case == "TwoSided"]
    if any(not r.kink_after < r.kink_before for r in smoothed):
        issues.append("kink")
    if abs(eps - 0.2) < 1e-12 and rep.p_harmonic_fraction < 0.8:
        issues.append("p-harmonic fraction")
    if not rep.passed:
        issues.append("report assertions")
    return issues, rep, len(smoothed)


def test_criterion_5_pipeline(criterion):
    start = time.perf_counter()
    failures = []
    runs = 0
    smoothed = 0
    for name in ("linear", "radial-annulus", "saddle"):
        for eps in (0.4, 0.2):
            for p in (2.0, 4.0):
                for exhaustive, u in ((True, builtin_nodes(name, 33)), (False, builtin(name, H))):
                    tag = f"{name} eps={eps} p={p:g} {'33x33' if exhaustive else '128'}"
                    runs += 1
                    try:
                        issues, rep, n = _pipeline_checks(u, eps, p, exhaustive)
                        smoothed += n
                    except Exception as exc:  # a stage error is a failed contract
                        issues = [f"{type(exc).__name__}: {exc}"]
                    if issues:
                        failures.append(f"{tag}: {', '.join(issues)}")
    elapsed = time.perf_counter() - start
    if elapsed >= 300:
        failures.append(f"runtime {elapsed:.0f}s")
    ok = criterion(5, not failures, f"pipeline contracts, {runs - len(failures)}/{runs} runs clean, "
                   f"{smoothed} TwoSided interfaces smoothed ({elapsed:.0f}s) " + " | ".join(failures))
    assert ok, failures


def test_criterion_6_smoothing_kernel(criterion):
    start = time.perf_counter()
    n = 99
    h = 3.0 / n
    nx = int(round(1 / h)) + 1
    g = DomainGrid(nx, n + 1, h, (0.0, -1.5), np.ones((n + 1, nx), bool))
    u = sample_analytic(lambda x, y: y + 0 * x, g)
    xs = np.linspace(0, g.x[-1], 65)
    curve = LevelCurve(np.column_stack([xs, np.zeros(65)]), False, True, np.zeros(64, dtype=np.int64))
    chart = build_chart(u, curve, 1.45, t=0.0)
    prof = SmoothingProfile(1.0, 0.5, 1.1, "TwoSided")
    out = apply_smoothing(u, chart, prof, 0.0).values
    y = g.Y
    closed = float(np.max(np.abs(out - y * (0.5 + 0.5 * alpha(np.abs(y))))))
    s = np.abs(np.nan_to_num(chart.y, nan=np.inf)) / prof.beta
    bitwise = bool(np.array_equal(out[s >= 1], u.values[s >= 1]))
    strip = strip_mask(chart, prof)
    both = strip[1:] & strip[:-1]
    slope = float(np.min(((out[1:] - out[:-1]) / h)[both]))
    bound = prof.gamma * (1 - 2 * h / prof.beta)
    elapsed = time.perf_counter() - start
    ok = closed <= 1e-12 and bitwise and slope >= bound and elapsed < 5
    criterion(6, ok, f"closed form err {closed:.1e}, s>=1 bit-identical {bitwise}, "
              f"min slope {slope:.4f} >= {bound:.4f} ({elapsed:.2f}s)")
    assert ok


def test_criterion_7_determinism(criterion, tmp_path):
    commands = [
        ["check-monotone", "--builtin", "bowl-disk", "--resolution", "32"],
        ["levelsets", "--builtin", "saddle", "--levels=-0.1,0,0.1"],
        ["levelsets", "--builtin", "radial-annulus", "--levels", "0.5"],
        ["coarea", "--builtin", "saddle"],
        ["approximate", "--builtin", "radial-annulus", "--eps", "0.2", "--p", "2"],
        ["approximate", "--builtin", "saddle", "--eps", "0.4", "--p", "4", "--resolution", "64"],
    ]
    different = []
    for k, cmd in enumerate(commands):
        dirs = [tmp_path / f"{k}_{r}" for r in range(2)]
        codes = [main([*cmd, "--out", str(d)]) for d in dirs]
        if codes[0] != codes[1]:
            different.append(f"{cmd[0]} exit codes {codes}")
        for f in sorted(dirs[0].iterdir()):
            if f.read_bytes() != (dirs[1] / f.name).read_bytes():
                different.append(f"{cmd[0]} {f.name}")
    ok = criterion(7, not different, f"{len(commands)} commands run twice, reports byte-identical "
                   + "; ".join(different))
    assert ok, different
