"""Solving discrete p-Laplace Dirichlet problems."""

import numpy as np

from monoapprox import DirichletProblem, DomainGrid, SolverConfig, builtin, dirichlet_solve, p_energy
from monoapprox.grid import sample_analytic

# On the annulus 1/4 < r < 1 the radial p-harmonic function with data 0 and 1
# is known in closed form.  For p = 2 it is log(4r)/log(4).
h = 1 / 128
exact = builtin("log-annulus", h)
g = exact.grid
region = g.full_ring_mask & ~g.boundary_mask

# Each solve starts from a constant guess inside and keeps the boundary values.
for p in (2.0, 4.0):
    if p == 4.0:
        # for p = 4 the radial solution grows like r**(2/3)
        r = np.hypot(g.X, g.Y)
        a = 0.25 ** (2 / 3)
        profile = (np.where(g.node_mask, r, 1.0) ** (2 / 3) - a) / (1 - a)
        target = exact.with_values(np.where(g.node_mask, profile, 0.0))
    else:
        target = exact
    init = target.with_values(np.where(region, 0.5, target.values))
    sol, info = dirichlet_solve(DirichletProblem(init, region, SolverConfig(p=p)))
    err = np.max(np.abs(sol.values - target.values)[region])
    print(f"p={p:g}: max nodal error {err:.2e}, energy {p_energy(sol, p):.5f}")

# Affine data are reproduced exactly for every p.
box = DomainGrid.box(0, 1, 0, 1, 1 / 32)
plane = sample_analytic(lambda x, y: 0.3 * x - 0.7 * y, box)
inner = box.full_ring_mask & ~box.boundary_mask
for p in (1.5, 3.0):
    s, _ = dirichlet_solve(DirichletProblem(plane.with_values(np.where(inner, 0, plane.values)), inner,
                                            SolverConfig(p=p)))
    print(f"affine data, p={p:g}: max deviation {np.max(np.abs(s.values - plane.values)):.1e}")
