"""
Circulation around a loop carried by a stochastic 2D flow.

Under Stratonovich transport the circulation stays put up to the time
step error; the Ito experiment driven by the same path drifts by an O(1)
amount that the loop integral of L_w v predicts, with
w = -1/2 sum_j (xi_j . grad) xi_j.
"""

import numpy as np

from stochgfd import forms as fm
from stochgfd import transport as tr
from stochgfd.grid import PeriodicGrid, SpectralScalarField
from stochgfd.noise import sample_increments

g = PeriodicGrid((64, 64))
x, y = g.mesh
u = fm.VectorFieldOnGrid.from_streamfunction(SpectralScalarField(g, 0.3 * np.cos(x + y)))
xi = fm.VectorFieldOnGrid.from_streamfunction(SpectralScalarField(g, 0.5 * np.sin(x) * np.sin(y)))
v0 = fm.DifferentialForm(fm.ONE_FORM, [np.sin(y) + 0.2 * np.cos(2 * y), -np.sin(x) + 0.2 * np.sin(x + y)], g)
loop = tr.MaterialLoop.circle((np.pi, np.pi), 0.8, 256)
flow = tr.FlowSpec(u, [xi], tr.STRATONOVICH, incompressible=True)

path = sample_increments(seed=5, K=1, dt=2e-4, N=1000)
strat = tr.kelvin_check(v0, flow, path, loop, record_every=50)
ito = tr.kelvin_check(v0, flow.with_interpretation(tr.ITO), path, loop, record_every=50)

print(f"initial circulation {strat.initial:.6f}")
print(f"{'t':>6s} {'strat change':>13s} {'ito change':>11s} {'L_w v loop':>11s}")
for t, a, b, c in zip(strat.times, strat.change, ito.change, ito.covariation_term):
    print(f"{t:6.3f} {a:13.2e} {b:11.4f} {c:11.4f}")
