"""Smoothing a field across one level curve."""

import numpy as np

from monoapprox.grid import DomainGrid, sample_analytic
from monoapprox.levelset import LevelCurve
from monoapprox.smoothing import SmoothingProfile, apply_smoothing, build_chart

# A field with slope 1 below y=0 and slope 1/2 above has a kink along y=0.
h = 1 / 64
ny = 129
g = DomainGrid(65, ny, h, (0.0, -1.0), np.ones((ny, 65), bool))
u = sample_analytic(lambda x, y: np.where(y < 0, y, 0.5 * y), g)

# The chart gives each node near the curve its offset from the curve.
xs = np.linspace(0, 1, 33)
curve = LevelCurve(np.column_stack([xs, np.zeros_like(xs)]), False, True, np.zeros(32, dtype=np.int64))
chart = build_chart(u, curve, 0.9, t=0.0)

# With the two-sided profile both sides are blended towards the common slope
# gamma = 1/2 inside a strip of half-width beta = 1/2 around the curve.
prof = SmoothingProfile(0.5, 0.5, 0.5, "TwoSided")
out = apply_smoothing(u, chart, prof, 0.0)

col = g.nx // 2
print("  y       before    after")
for j in range(ny // 2 - 48, ny // 2 + 49, 8):
    print(f"{g.y[j]:+.3f}  {u.values[j, col]:+.4f}  {out.values[j, col]:+.4f}")

# Far from the curve nothing changes.
far = np.abs(g.Y) >= prof.beta
print("unchanged outside the strip:", np.array_equal(out.values[far], u.values[far]))
