"""Decay of a Fourier mode under the graph heat flow.

The amplitude of ``cos(2 pi x1)`` decays like ``exp(-k2 (2 pi)**2 t)`` in
the continuum limit, with ``k2 = 1/4`` for the disk kernel.

    python demos/heat_decay.py [N] [r]
"""

import sys

import numpy as np

from medflow.domain import Torus, UniformIID, sample
from medflow.heatflow import HeatFlow

N = int(float(sys.argv[1])) if len(sys.argv) > 1 else 50_000
r = float(sys.argv[2]) if len(sys.argv) > 2 else 0.05
tau, steps = 2e-4, 20

cloud = sample(Torus(2), UniformIID(N, seed=0), r)
e = np.cos(2 * np.pi * cloud.positions[:, 0])
flow = HeatFlow(cloud, r)
rate = 0.25 * (2 * np.pi) ** 2
u = e.copy()
print(f"{'time':>7} {'amplitude':>10} {'continuum':>10} {'energy':>9}")
for n in range(steps + 1):
    if n % 5 == 0:
        t = n * tau
        print(f"{t:7.4f} {u @ e / (e @ e):10.5f} {np.exp(-rate * t):10.5f} {flow.energy(u):9.5f}")
    u = flow.step(u, tau)
