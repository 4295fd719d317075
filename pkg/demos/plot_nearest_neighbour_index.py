"""
Nearest neighbour index on three kinds of pattern
=================================================

The Clark-Evans ratio compares the mean nearest-neighbour distance of a point
set with what a homogeneous Poisson process of the same density would give.
Below one means clumping, near one means random, above one means regular.
"""

import math

import numpy as np

from transitpat import nna

rng = np.random.default_rng(0)

# A uniform scatter over a 10 km square should sit close to R = 1.
uniform = rng.uniform(0, 10_000, size=(3000, 2))

# Six tight clumps of stops, the kind of pattern a city centre produces.
centres = rng.uniform(0, 10_000, size=(6, 2))
clumped = np.vstack([c + rng.normal(0, 80, size=(500, 2)) for c in centres])

# A triangular lattice is as dispersed as a planar pattern gets.
n = 55
lattice = 180.0 * np.array([(i + (j % 2) / 2, j * math.sqrt(3) / 2)
                            for j in range(n) for i in range(n)])

for name, xy in [("uniform", uniform), ("clumped", clumped), ("lattice", lattice)]:
    res = nna.analyse_points(xy, "convex_hull")
    print(f"{name:8s} N={res.N:5d}  R={res.R:6.3f}  z={res.z:9.2f}  "
          f"p={res.p_value_str:>12s}  -> {res.pattern}")

# %%
# The two-tailed p-value is computed in log space, so even extreme patterns
# report a usable number instead of underflowing to zero.
for z in (-3.0, -40.0, -97.691):
    print(f"z = {z:8.3f}   p = {nna.format_log10_p(nna.log10_two_tailed_p(z))}")

# %%
# Working back from summary statistics alone: the density implied by an
# expected distance, then the z statistic and every intermediate.
for key, value in nna.statistic_from_summary(110.225, 642.191, 3142).items():
    print(f"{key:>20s}: {value}")
