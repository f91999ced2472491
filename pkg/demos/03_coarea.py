"""Checking the co-area identity numerically."""

from monoapprox import builtin, coarea_check

# Integrating the length of level sets over all levels should give the
# integral of the gradient norm.  The two sides are computed independently.
for name in ("linear", "radial-annulus", "saddle"):
    rep = coarea_check(builtin(name, 1 / 128), 64)
    print(f"{name:15s} levels integral {rep.lhs:.5f}  gradient integral {rep.rhs:.5f}  "
          f"rel. error {rep.rel_error:.2e}")
