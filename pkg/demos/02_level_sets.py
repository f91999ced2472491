"""Extracting level curves and classifying them."""

import math

from monoapprox import builtin, extract_level_set

h = 1 / 128

# Off the critical value, the saddle's level sets are two arcs ending on the
# boundary of the square.
saddle = builtin("saddle", h)
for t in (-0.1, 0.1):
    an = extract_level_set(saddle, t)
    print(f"saddle t={t:+.1f}: {an.classification}, total length {an.total_length:.4f}")

# At t=0 the two branches cross, which shows up as a junction.
an = extract_level_set(saddle, 0.0)
print("saddle t=0 junctions:", len(an.junctions))

# On the annulus, the level set r=1/2 is a closed curve of length pi.
ring = extract_level_set(builtin("radial-annulus", h), 0.5)
c = ring.components[0]
print(f"annulus t=0.5: {ring.classification}, length {c.length:.5f} (pi = {math.pi:.5f})")
