"""
Proper orthogonal decomposition of velocity snapshots by the method of
snapshots.

For ``M`` snapshots ``u_m`` the correlation operator is

    C xi = (1/M) sum_m u_m <u_m, xi>

and its nonzero spectrum equals that of the ``M x M`` Gram matrix
``G_mn = <u_m, u_n> / M``.  An eigenvector ``a`` of ``G`` lifts to the mode
``xi = sum_m a_m u_m`` normalised in L2.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .forms import VectorFieldOnGrid
from .grid import PeriodicGrid, SpectralScalarField
from .noise import NoiseBasis
from .snapshot import read_components, write_components


@dataclass
class SnapshotSet:
    """``M`` velocity snapshots on one grid; ``data`` has shape (M, d, *shape)."""

    grid: PeriodicGrid
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        d = self.grid.dims
        if self.data.ndim != d + 2 or self.data.shape[1] != d:
            raise ValueError(f"snapshots must have shape (M, {d}, *grid.shape)")
        self.grid.check_values(self.data)

    @classmethod
    def from_fields(cls, fields: list[VectorFieldOnGrid]) -> "SnapshotSet":
        if not fields:
            raise ValueError("grid is unknown for an empty list; construct SnapshotSet directly")
        grid = fields[0].grid
        return cls(grid, np.stack([f.data for f in fields]))

    @property
    def M(self) -> int:
        return self.data.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.M, 1.0 / max(self.M, 1))


@dataclass
class PODBasis:
    grid: PeriodicGrid
    eigenvalues: np.ndarray   # lambda_i^2, descending
    modes: np.ndarray         # (K, d, *shape), L2-orthonormal
    degenerate: bool = False

    @property
    def K(self) -> int:
        return self.modes.shape[0]

    def mode_fields(self) -> list[VectorFieldOnGrid]:
        return [VectorFieldOnGrid(m, False, self.grid) for m in self.modes]


def _inner(grid: PeriodicGrid, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(a * b) / grid.size * grid.volume)


def leray_project(grid: PeriodicGrid, u: np.ndarray) -> np.ndarray:
    """Remove the gradient part of a vector field (spectral Helmholtz projection)."""
    c = grid.fft(u)
    k = grid.wavenumbers
    k2 = grid.k2.copy()
    k2.flat[0] = 1.0
    kc = sum(ka * c[a] for a, ka in enumerate(k))
    c = np.stack([c[a] - ka * kc / k2 for a, ka in enumerate(k)])
    return grid.ifft(c)


def _fix_sign(mode: np.ndarray) -> np.ndarray:
    flat = mode.ravel()
    top = np.abs(flat).max()
    if top == 0:
        return mode
    first = flat[np.argmax(np.abs(flat) > 1e-12 * top)]
    return -mode if first < 0 else mode


def compute_pod(data: SnapshotSet, K: int, center: bool = False, leray: bool = False,
                rank_tol: float = 1e-12) -> PODBasis:
    """Leading ``K`` POD eigenpairs.

    Parameters
    ----------
    center : bool
        Subtract the snapshot mean first.
    leray : bool
        Project snapshots onto divergence-free fields first, so the modes are
        divergence-free.
    rank_tol : float
        Eigenvalues below ``rank_tol * lambda_1^2`` are treated as zero; their
        modes are returned as zero fields and the basis is flagged degenerate.
    """
    grid, M = data.grid, data.M
    if M == 0:
        return PODBasis(grid, np.zeros(0), np.zeros((0, grid.dims) + grid.shape), True)
    if not 1 <= K <= M:
        raise ValueError(f"need 1 <= K <= M, got K={K}, M={M}")
    u = data.data
    if center:
        u = u - u.mean(axis=0)
    if leray:
        u = np.stack([leray_project(grid, s) for s in u])
    G = np.empty((M, M))
    for m in range(M):
        for n in range(m, M):
            G[m, n] = G[n, m] = _inner(grid, u[m], u[n]) / M
    vals, vecs = np.linalg.eigh(G)
    order = np.argsort(vals)[::-1][:K]
    vals, vecs = np.clip(vals[order], 0.0, None), vecs[:, order]
    top = vals[0] if vals.size else 0.0
    modes = np.zeros((K, grid.dims) + grid.shape)
    degenerate = False
    for i in range(K):
        if top == 0 or vals[i] <= rank_tol * top:
            vals[i] = 0.0
            degenerate = True
            continue
        xi = np.tensordot(vecs[:, i], u, axes=1)
        modes[i] = _fix_sign(xi / np.sqrt(_inner(grid, xi, xi)))
    return PODBasis(grid, vals, modes, degenerate)


def scale_modes(basis: PODBasis) -> NoiseBasis:
    """Noise basis of fields ``lambda_i xi_i`` with weights ``lambda_i``."""
    lam = np.sqrt(basis.eigenvalues)
    fields = [VectorFieldOnGrid(l * _fix_sign(m), False, basis.grid) for l, m in zip(lam, basis.modes)]
    return NoiseBasis(fields, lam, grid=basis.grid)


def correlation_residual(data: SnapshotSet, basis: PODBasis, center: bool = False, leray: bool = False) -> float:
    """``max_i ||C xi_i - lambda_i^2 xi_i|| / lambda_1^2``."""
    grid = data.grid
    u = data.data
    if center:
        u = u - u.mean(axis=0)
    if leray:
        u = np.stack([leray_project(grid, s) for s in u])
    if basis.K == 0 or basis.eigenvalues[0] == 0:
        return 0.0
    worst = 0.0
    for lam2, xi in zip(basis.eigenvalues, basis.modes):
        proj = np.array([_inner(grid, s, xi) for s in u])
        r = np.tensordot(proj, u, axes=1) / data.M - lam2 * xi
        worst = max(worst, np.sqrt(_inner(grid, r, r)))
    return worst / basis.eigenvalues[0]


def streamfunction_from_velocity(u: VectorFieldOnGrid) -> SpectralScalarField:
    """2D stream function ``psi`` with ``z x grad psi`` equal to the solenoidal part of ``u``."""
    g = u.grid
    if g.dims != 2:
        raise ValueError("stream functions are defined in 2D only")
    c = u.coeffs
    vort = g.ik[0] * c[1] - g.ik[1] * c[0]
    k2 = g.k2.copy()
    k2.flat[0] = 1.0
    psi = -vort / k2
    psi.flat[0] = 0.0
    return SpectralScalarField(g, g.ifft(psi), _coeffs=psi)


# -- file interfaces -------------------------------------------------------

def read_snapshot_dir(directory) -> SnapshotSet:
    """Load every ``*.json`` sidecar of a directory (sorted by name) as one snapshot."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory} is not a directory")
    sidecars = sorted(directory.glob("*.json"))
    if not sidecars:
        raise ValueError(f"no snapshots found in {directory}")
    grid, arrays = None, []
    for s in sidecars:
        g, comps, _ = read_components(s)
        if grid is None:
            grid = g
        elif g != grid:
            raise ValueError(f"{s.name} is on a different grid")
        if len(comps) != g.dims:
            raise ValueError(f"{s.name} has {len(comps)} components, expected {g.dims}")
        arrays.append(np.stack(comps))
    return SnapshotSet(grid, np.stack(arrays))


def write_basis(directory, basis: PODBasis) -> Path:
    """Write modes as snapshot files and the spectrum as ``eigenvalues.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, m in enumerate(basis.modes):
        write_components(directory, f"mode_{i:03d}", basis.grid, list(m),
                         {"index": i, "eigenvalue": float(basis.eigenvalues[i]), "grade": "vector"})
    out = directory / "eigenvalues.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "eigenvalue", "weight"])
        for i, lam2 in enumerate(basis.eigenvalues):
            w.writerow([i, repr(float(lam2)), repr(float(np.sqrt(lam2)))])
    return out


def read_basis(directory) -> PODBasis:
    directory = Path(directory)
    rows = list(csv.DictReader((directory / "eigenvalues.csv").read_text().splitlines()))
    vals = np.array([float(r["eigenvalue"]) for r in rows])
    modes, grid = [], None
    for i in range(len(rows)):
        grid, comps, _ = read_components(directory / f"mode_{i:03d}.json")
        modes.append(np.stack(comps))
    if grid is None:
        raise ValueError(f"{directory} holds an empty basis")
    return PODBasis(grid, vals, np.stack(modes), bool(np.any(vals == 0)))
