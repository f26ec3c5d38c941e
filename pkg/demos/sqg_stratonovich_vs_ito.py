"""
Stochastic QG on one Brownian path: Stratonovich (Heun), Ito with the
double-bracket drift, and Ito without it.

The first two approximate the same solution, so their gap shrinks with dt;
the third converges to a different process.
"""

import numpy as np

from stochgfd.grid import PeriodicGrid
from stochgfd.noise import sample_increments
from stochgfd.sqg import SQGModel, SQGParams, basis_from_config, modes_field

g = PeriodicGrid((64, 64))
model = SQGModel(g, SQGParams(F=1.0, beta=0.5),
                 basis_from_config(g, {"modes": [{"k": [2, 1], "amplitude": 0.15},
                                                 {"k": [1, -2], "amplitude": 0.15, "kind": "cos"}]}))
mu0 = model.project(modes_field(g, [{"k": [1, 0]}, {"k": [0, 1], "kind": "cos"},
                                    {"k": [1, 1], "amplitude": 0.6}]).values)

T = 0.1
fine = sample_increments(seed=2024, K=model.K, dt=1e-4, N=int(round(T / 1e-4)))
norm = lambda c: np.sqrt(np.sum(g._mode_weight * np.abs(c) ** 2))

print(f"{'dt':>8s} {'|heun - ito|':>14s} {'|heun - ito_uncorr|':>20s}")
for factor in (8, 4, 2, 1):
    path = fine.coarsen(factor)
    dt = path.dt
    heun = model.integrate(mu0, path, dt, path.N, "stratonovich")
    ito = model.integrate(mu0, path, dt, path.N, "ito")
    unc = model.integrate(mu0, path, dt, path.N, "ito_uncorrected")
    print(f"{dt:8.1e} {norm(heun - ito) / norm(heun):14.3e} {norm(heun - unc) / norm(heun):20.3e}")
