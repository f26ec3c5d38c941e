"""
Stochastic transport of geometric quantities on periodic grids.

Modules
-------
grid       periodic grids, spectral fields and interpolation
forms      differential forms, Lie derivatives and the Lie-Laplacian
noise      Brownian paths and noise correlation bases
pod        proper orthogonal decomposition by the method of snapshots
sqg        stochastic quasi-geostrophic model
transport  kinematic transport, circulation, helicity and tracers
verify     verification suites
"""

from .grid import PeriodicGrid, SpectralScalarField
from .forms import DifferentialForm, VectorFieldOnGrid
from .noise import NoiseBasis, WienerPath, sample_increments
from .sqg import SQGModel, SQGParams, SQGState

__version__ = "0.1.0"

__all__ = ["PeriodicGrid", "SpectralScalarField", "DifferentialForm", "VectorFieldOnGrid", "NoiseBasis",
           "WienerPath", "sample_increments", "SQGModel", "SQGParams", "SQGState"]
