"""Deciding whether a sampled field is monotone, and finding where it is not."""

import numpy as np

from monoapprox import builtin_nodes, is_monotone

# A field is monotone when, on every window, its extremes sit on the window's
# boundary.  A linear ramp and a saddle qualify; a bowl does not, because its
# minimum is in the middle.
for name in ("linear", "saddle", "bowl-disk"):
    u = builtin_nodes(name, 33)
    rep = is_monotone(u)
    print(f"{name:10s} monotone={rep.monotone}")

# The bowl's report carries a witness window around the offending minimum.
bowl = builtin_nodes("bowl-disk", 33)
w = is_monotone(bowl).witnesses[0]
print("witness window", w.window, "kind", w.kind, "at node", w.node)
print(f"interior value {w.interior_value:.4f} vs boundary value {w.boundary_value:.4f}")

# Two independent algorithms give the same verdicts: a brute-force window
# scan and a check on the connected components of sub- and super-level sets.
for name in ("linear", "saddle", "radial-annulus", "bowl-disk", "log-annulus", "sine-grid"):
    u = builtin_nodes(name, 33)
    a = is_monotone(u, method="exhaustive-window").monotone
    b = is_monotone(u, method="level-component").monotone
    print(f"{name:15s} exhaustive={a!s:5s} level-component={b}")

# A small Gaussian bump on the ramp creates a local maximum and breaks monotonicity.
u = builtin_nodes("linear", 33)
bumped = u.with_values(u.values + 0.1 * np.exp(-((u.grid.X - 0.5) ** 2 + (u.grid.Y - 0.5) ** 2) / 0.005))
print("ramp with a bump:", is_monotone(bumped).monotone)
