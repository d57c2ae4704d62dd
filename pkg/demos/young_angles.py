"""Contact angles reached by a wall-attached set under the Young scheme.

A half box is evolved with a prescribed angle and the angle between the
level curve and the wall is measured at both contacts. At the default size
single contacts scatter by ten degrees or more; ``N = 400000`` with a
longer run time (``T = 0.1``) brings the averaged angle within a few
degrees.

    python demos/young_angles.py [N] [r] [T]
"""

import math
import sys

from medflow.domain import Box, UniformIID, sample
from medflow.evolution import (EvolutionConfig, Evolver, LevelSetField, YoungAngle,
                               contact_angle)
from medflow.kernels import Ball

N = int(float(sys.argv[1])) if len(sys.argv) > 1 else 100_000
r = float(sys.argv[2]) if len(sys.argv) > 2 else 0.03
T = float(sys.argv[3]) if len(sys.argv) > 3 else 0.01

cloud = sample(Box(2), UniformIID(N, seed=0), r)
u = (cloud.positions[:, 1] < 0.5).astype(float)
for alpha in (60, 90, 120):
    cfg = EvolutionConfig(Ball(r), T=T, mode=YoungAngle(math.radians(alpha)))
    final = Evolver(cloud, cfg).run(LevelSetField(cloud, u))[-1]
    contacts = contact_angle(final, 0.5, window=4 * r, smooth=r / 2, degree=1, return_all=True)
    print(f"alpha={alpha:3d}  measured " + "  ".join(
        f"{math.degrees(a):6.1f} at x1={p[0]:.2f}" for p, a in contacts))
