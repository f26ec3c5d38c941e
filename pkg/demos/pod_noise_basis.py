"""
Build a noise basis from data.

A deterministic QG run supplies velocity snapshots; their leading POD
modes, scaled by sqrt(eigenvalue), become stream-function noise for a
stochastic run.
"""

import tempfile
from pathlib import Path

import numpy as np

from stochgfd.forms import VectorFieldOnGrid
from stochgfd.grid import PeriodicGrid, SpectralScalarField
from stochgfd.pod import SnapshotSet, compute_pod, write_basis
from stochgfd.sqg import SQGModel, SQGParams, run

g = PeriodicGrid((64, 64))
config = {
    "grid": {"n": [64, 64]},
    "params": {"F": 1.0, "beta": 2.0},
    "dt": 5e-3, "steps": 400, "scheme": "deterministic",
    "initial": {"modes": [{"k": [1, 2]}, {"k": [2, -1], "kind": "cos"}, {"k": [3, 1], "amplitude": 0.4}]},
    "snapshot_every": 10,
}
result = run(config)
model = SQGModel(g, SQGParams(F=1.0, beta=2.0))
vel = []
for _, mu in result.snapshots:
    psi = model.psi(g.fft(mu))
    vel.append(VectorFieldOnGrid.from_streamfunction(SpectralScalarField.from_coefficients(g, psi)))
data = SnapshotSet.from_fields(vel)
basis = compute_pod(data, 4, center=True)
energy = basis.eigenvalues / basis.eigenvalues.sum()
print("POD energy fractions:", np.array2string(energy, precision=4))

with tempfile.TemporaryDirectory() as tmp:
    write_basis(tmp, basis)
    stoch = dict(config, scheme="stratonovich", steps=100, seed=1, snapshot_every=0, diagnostic_every=25,
                 noise={"pod_basis": str(Path(tmp)), "K": 3, "scale": 0.5})
    out = run(stoch)
for row in out.diagnostics:
    print(f"t={row['time']:.3f}  energy={row['energy']:.5f}  C2={row['C2']:.6f}")
