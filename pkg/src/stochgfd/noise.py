"""
Brownian drivers and spatial noise bases.

Increments come from numpy's counter-based Philox-4x64 bit generator keyed
by the seed, mapped to normals by ``Generator.standard_normal`` and scaled
by ``sqrt(dt)``.  The array is filled row-major as ``(N, K)``, so a path is a
pure function of ``(seed, K, dt, N)``.  Ensemble member ``m`` uses the key
``seed ^ m``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .forms import VectorFieldOnGrid
from .grid import PeriodicGrid, SpectralScalarField

VECTOR = "vector"
QG_STREAMFUNCTION = "qg_streamfunction"


def ensemble_seed(base_seed: int, member: int) -> int:
    return int(base_seed) ^ int(member)


def _generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))


class WienerPath:
    """Read-only Brownian increments ``dW[n, i]`` for ``K`` components.

    Parameters
    ----------
    increments : ndarray, shape (N, K)
    dt : float
    seed : int, optional
        Recorded for provenance only.
    """

    def __init__(self, increments: np.ndarray, dt: float, seed: int | None = None):
        inc = np.array(increments, dtype=float)
        if inc.ndim != 2:
            raise ValueError("increments must have shape (N, K)")
        if dt <= 0:
            raise ValueError("dt must be positive")
        inc.setflags(write=False)
        self.increments = inc
        self.dt = float(dt)
        self.seed = seed

    @property
    def N(self) -> int:
        return self.increments.shape[0]

    @property
    def K(self) -> int:
        return self.increments.shape[1]

    @property
    def T(self) -> float:
        return self.N * self.dt

    def W(self) -> np.ndarray:
        """Path values ``W(t_n)`` for ``n = 0..N``, shape (N+1, K)."""
        out = np.zeros((self.N + 1, self.K))
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out

    def coarsen(self, factor: int) -> "WienerPath":
        """Same Brownian path sampled at ``factor * dt``."""
        factor = int(factor)
        if factor < 1 or self.N % factor:
            raise ValueError(f"cannot coarsen {self.N} steps by {factor}")
        inc = self.increments.reshape(self.N // factor, factor, self.K).sum(axis=1)
        return WienerPath(inc, self.dt * factor, self.seed)

    def truncate(self, steps: int) -> "WienerPath":
        return WienerPath(self.increments[:steps], self.dt, self.seed)

    def __repr__(self):
        return f"WienerPath(N={self.N}, K={self.K}, dt={self.dt:g}, seed={self.seed})"


def sample_increments(seed: int, K: int, dt: float, N: int) -> WienerPath:
    """Independent ``normal(0, dt)`` increments, reproducible from the arguments."""
    if N < 1:
        raise ValueError("N must be at least 1")
    if K < 1:
        raise ValueError("K must be at least 1")
    if not dt > 0:
        raise ValueError("dt must be positive")
    z = _generator(seed).standard_normal((N, K))
    return WienerPath(z * np.sqrt(dt), dt, seed)


def estimate_covariation(path: WienerPath) -> np.ndarray:
    """``sum_n dW_i(n) dW_j(n)`` with a fixed summation order (no BLAS)."""
    inc = path.increments
    K = path.K
    out = np.empty((K, K))
    for i in range(K):
        for j in range(i, K):
            out[i, j] = out[j, i] = np.sum(inc[:, i] * inc[:, j])
    return out


def write_path_csv(path, wp: WienerPath) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# dt={wp.dt!r} seed={wp.seed}\n")
        w = csv.writer(fh)
        w.writerow(["step"] + [f"dW{i + 1}" for i in range(wp.K)])
        for n, row in enumerate(wp.increments):
            w.writerow([n] + [repr(float(v)) for v in row])


def read_path_csv(path) -> WienerPath:
    lines = Path(path).read_text().splitlines()
    meta = dict(tok.split("=") for tok in lines[0].lstrip("# ").split())
    rows = list(csv.reader(lines[2:]))
    inc = np.array([[float(v) for v in r[1:]] for r in rows]).reshape(len(rows), -1)
    seed = None if meta.get("seed") in (None, "None") else int(meta["seed"])
    return WienerPath(inc, float(meta["dt"]), seed)


class NoiseBasis:
    """Ordered noise correlation fields with weights.

    In ``vector`` mode ``fields`` are :class:`VectorFieldOnGrid`; in
    ``qg_streamfunction`` mode they are scalar stream functions whose
    velocities are ``z x grad xi``.  The fields are used as given (already
    weighted); ``weights`` record the amplitudes.
    """

    def __init__(self, fields: Sequence, weights: Sequence[float] | None = None, mode: str = VECTOR,
                 grid: PeriodicGrid | None = None):
        if mode not in (VECTOR, QG_STREAMFUNCTION):
            raise ValueError(f"unknown noise mode {mode!r}")
        self.fields = list(fields)
        self.mode = mode
        self.weights = np.ones(len(self.fields)) if weights is None else np.asarray(weights, dtype=float)
        if self.weights.shape != (len(self.fields),):
            raise ValueError("one weight per field is required")
        self.grid = grid if grid is not None else (self.fields[0].grid if self.fields else None)
        self._vectors = None

    @property
    def K(self) -> int:
        return len(self.fields)

    def __len__(self):
        return self.K

    def vector_fields(self) -> list[VectorFieldOnGrid]:
        if self._vectors is None:
            if self.mode == VECTOR:
                self._vectors = list(self.fields)
            else:
                self._vectors = [VectorFieldOnGrid.from_streamfunction(f) for f in self.fields]
        return self._vectors

    def __repr__(self):
        return f"NoiseBasis(K={self.K}, mode={self.mode})"


def qg_velocity_fields(stream_functions: Sequence[SpectralScalarField],
                       weights: Sequence[float] | None = None) -> NoiseBasis:
    """Vector-mode basis of ``z x grad xi_i = (-d2 xi_i, d1 xi_i)``."""
    vecs = []
    for f in stream_functions:
        if f.grid.dims != 2:
            raise ValueError("stream-function noise needs a 2D grid")
        vecs.append(VectorFieldOnGrid.from_streamfunction(f))
    return NoiseBasis(vecs, weights, VECTOR)


@dataclass
class BasisReport:
    passed: bool
    divergence_residuals: list[float] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)


def validate_basis(basis: NoiseBasis, tol: float = 1e-10) -> BasisReport:
    """Check grid consistency, weight ordering and (vector mode) zero divergence."""
    failures = []
    w = basis.weights
    if np.any(w < 0):
        failures.append("negative weight")
    if np.any(np.diff(w) > 0):
        failures.append("weights not sorted in descending order")
    grids = {f.grid for f in basis.fields}
    if len(grids) > 1 or (basis.grid is not None and grids and grids != {basis.grid}):
        failures.append("fields live on different grids")
    residuals = []
    if basis.mode == VECTOR and len(grids) <= 1:
        for i, f in enumerate(basis.fields):
            r = f.divergence_residual()
            residuals.append(r)
            if r > tol:
                failures.append(f"field {i} has relative divergence {r:.3e}")
    elif basis.mode == QG_STREAMFUNCTION:
        for f in basis.fields:
            if f.grid.dims != 2:
                failures.append("stream-function noise needs a 2D grid")
                break
        else:
            residuals = [v.divergence_residual() for v in basis.vector_fields()]
    return BasisReport(not failures, residuals, failures)
