"""
Periodic grids and spectral scalar fields.

Fields live on a uniform grid over a 2D or 3D torus.  Values are indexed
``values[i1, i2(, i3)]`` with ``x_a = i_a * L_a / n_a``.  The spectral
representation is the half spectrum returned by ``numpy.fft.rfftn`` divided
by the number of grid points, so that

    f(x) = sum_k c_k exp(i k.x)

with the sum running over the full (conjugate-symmetric) set of modes.
Wavenumbers are integers scaled by ``2 pi / L_a``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.fft

TWO_PI = 2.0 * np.pi


class GridMismatchError(ValueError):
    """Raised when fields defined on different grids are combined."""


class SolvabilityError(ValueError):
    """Raised when a Helmholtz/Poisson problem has no periodic solution."""


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid on a periodic box.

    Parameters
    ----------
    n : sequence of int
        Points per axis.  Two or three axes, each even and at least 8.
    length : sequence of float, optional
        Edge lengths, default ``2 pi`` per axis.
    """

    n: tuple[int, ...]
    length: tuple[float, ...] = ()

    def __post_init__(self):
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        if len(n) not in (2, 3):
            raise ValueError(f"grid must be 2D or 3D, got {len(n)} axes")
        for v in n:
            if v < 8 or v % 2:
                raise ValueError(f"points per axis must be even and >= 8, got {v}")
        length = tuple(float(v) for v in np.atleast_1d(self.length)) if len(self.length) else (TWO_PI,) * len(n)
        if len(length) != len(n):
            raise ValueError("length must have one entry per axis")
        if any(v <= 0 for v in length):
            raise ValueError("edge lengths must be positive")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "length", length)

    @property
    def dims(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def volume(self) -> float:
        return float(np.prod(self.length))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.length, self.n))

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return self.n[:-1] + (self.n[-1] // 2 + 1,)

    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.arange(n) * (L / n) for n, L in zip(self.n, self.length))

    @cached_property
    def mesh(self) -> tuple[np.ndarray, ...]:
        m = np.meshgrid(*self.coords(), indexing="ij")
        for a in m:
            a.setflags(write=False)
        return tuple(m)

    @cached_property
    def mode_index(self) -> tuple[np.ndarray, ...]:
        """Integer mode numbers per axis, broadcastable to ``spectral_shape``."""
        out = []
        for a, n in enumerate(self.n):
            if a == self.dims - 1:
                idx = np.arange(n // 2 + 1)
            else:
                idx = np.fft.fftfreq(n, d=1.0 / n).astype(int)
            shape = [1] * self.dims
            shape[a] = idx.size
            out.append(idx.reshape(shape))
        return tuple(out)

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        return tuple(TWO_PI / L * m for m, L in zip(self.mode_index, self.length))

    @cached_property
    def ik(self) -> tuple[np.ndarray, ...]:
        """Derivative multipliers ``i k_a`` with the Nyquist mode zeroed."""
        out = []
        for m, k, n in zip(self.mode_index, self.wavenumbers, self.n):
            out.append(np.where(np.abs(m) == n // 2, 0.0, 1j * k))
        return tuple(out)

    @cached_property
    def k2(self) -> np.ndarray:
        return sum(k**2 for k in self.wavenumbers)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """True on modes kept by the two-thirds rule."""
        keep = np.ones(self.spectral_shape, dtype=bool)
        for m, n in zip(self.mode_index, self.n):
            keep &= np.abs(m) <= n // 3
        return keep

    @cached_property
    def _mode_weight(self) -> np.ndarray:
        # multiplicity of each stored half-spectrum mode in Parseval sums
        m = self.mode_index[-1]
        n = self.n[-1]
        w = np.where((m == 0) | (m == n // 2), 1.0, 2.0)
        return np.broadcast_to(w, self.spectral_shape)

    # array-level transforms used by every module
    def fft(self, values: np.ndarray) -> np.ndarray:
        axes = tuple(range(-self.dims, 0))
        return scipy.fft.rfftn(values, axes=axes) / self.size

    def ifft(self, coeffs: np.ndarray) -> np.ndarray:
        axes = tuple(range(-self.dims, 0))
        return scipy.fft.irfftn(coeffs * self.size, s=self.n, axes=axes)

    def check_values(self, values: np.ndarray) -> None:
        if values.shape[-self.dims:] != self.n:
            raise GridMismatchError(f"array shape {values.shape} does not match grid {self.n}")


def _as_grid(n, length=None) -> PeriodicGrid:
    return PeriodicGrid(tuple(n), tuple(length) if length is not None else ())


class SpectralScalarField:
    """Real scalar field on a :class:`PeriodicGrid`.

    Values are stored read-only; the spectral coefficients are computed
    lazily and cached.  Arithmetic with scalars and other fields on the same
    grid acts pointwise on grid values.
    """

    __slots__ = ("grid", "_values", "_coeffs")

    def __init__(self, grid: PeriodicGrid, values, *, _coeffs=None):
        values = np.array(values, dtype=float)
        if values.ndim == 0:
            values = np.full(grid.shape, float(values))
        if values.shape != grid.shape:
            raise GridMismatchError(f"values of shape {values.shape} on grid {grid.shape}")
        values.setflags(write=False)
        self.grid = grid
        self._values = values
        self._coeffs = _coeffs

    @classmethod
    def from_coefficients(cls, grid: PeriodicGrid, coeffs: np.ndarray) -> "SpectralScalarField":
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != grid.spectral_shape:
            raise GridMismatchError(f"coefficients of shape {coeffs.shape}, expected {grid.spectral_shape}")
        # round trip through the inverse transform enforces conjugate symmetry
        values = grid.ifft(coeffs)
        return cls(grid, values)

    @classmethod
    def from_function(cls, grid: PeriodicGrid, func: Callable[..., np.ndarray]) -> "SpectralScalarField":
        return cls(grid, np.broadcast_to(func(*grid.mesh), grid.shape))

    @classmethod
    def zeros(cls, grid: PeriodicGrid) -> "SpectralScalarField":
        return cls(grid, np.zeros(grid.shape))

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def coefficients(self) -> np.ndarray:
        if self._coeffs is None:
            c = self.grid.fft(self._values)
            c.setflags(write=False)
            self._coeffs = c
        return self._coeffs

    def mean(self) -> float:
        return float(self._values.mean())

    def norm(self) -> float:
        """L2 norm over the box."""
        return float(np.sqrt(inner_l2(self, self)))

    def rms(self) -> float:
        return float(np.sqrt(np.mean(self._values**2)))

    def _other(self, other):
        if isinstance(other, SpectralScalarField):
            if other.grid != self.grid:
                raise GridMismatchError("fields live on different grids")
            return other._values
        return other

    def __add__(self, other):
        return SpectralScalarField(self.grid, self._values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return SpectralScalarField(self.grid, self._values - self._other(other))

    def __rsub__(self, other):
        return SpectralScalarField(self.grid, self._other(other) - self._values)

    def __neg__(self):
        return SpectralScalarField(self.grid, -self._values)

    def __mul__(self, other):
        return SpectralScalarField(self.grid, self._values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return SpectralScalarField(self.grid, self._values / self._other(other))

    def __repr__(self):
        return f"SpectralScalarField(grid={self.grid.n}, rms={self.rms():.3e})"


def _check_same(*fields: SpectralScalarField) -> PeriodicGrid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError("fields live on different grids")
    return grid


def transform_forward(f: SpectralScalarField) -> np.ndarray:
    """Half-spectrum Fourier coefficients of ``f`` (normalised by 1/N)."""
    return f.coefficients


def transform_backward(grid: PeriodicGrid, coeffs: np.ndarray) -> SpectralScalarField:
    """Inverse of :func:`transform_forward`."""
    return SpectralScalarField.from_coefficients(grid, coeffs)


def partial(f: SpectralScalarField, axis: int) -> SpectralScalarField:
    """Spectral derivative along one axis."""
    g = f.grid
    c = f.coefficients * g.ik[axis]
    return SpectralScalarField(g, g.ifft(c), _coeffs=c)


def gradient(f: SpectralScalarField) -> tuple[SpectralScalarField, ...]:
    return tuple(partial(f, a) for a in range(f.grid.dims))


def laplacian(f: SpectralScalarField) -> SpectralScalarField:
    g = f.grid
    c = -g.k2 * f.coefficients
    return SpectralScalarField(g, g.ifft(c), _coeffs=c)


def helmholtz_symbol(grid: PeriodicGrid, F: float) -> np.ndarray:
    """Fourier symbol of ``(laplacian - F)`` with the F = 0 zero mode set to 1."""
    sym = -grid.k2 - F
    if F == 0:
        sym = sym.copy()
        sym.flat[0] = 1.0
    return sym


def invert_helmholtz(mu: SpectralScalarField, F: float = 0.0) -> SpectralScalarField:
    """Solve ``(laplacian - F) psi = mu`` on the torus.

    For ``F == 0`` the zero mode of ``psi`` is pinned to zero and ``mu`` must
    have zero mean to relative precision 1e-12.
    """
    if F < 0:
        raise ValueError("F must be nonnegative")
    g = mu.grid
    c = mu.coefficients
    if F == 0:
        scale = mu.rms()
        if abs(c.flat[0].real) > 1e-12 * scale and abs(c.flat[0].real) > 0:
            raise SolvabilityError(f"mean of source is {c.flat[0].real:.3e}; Poisson problem is not solvable")
    out = c / helmholtz_symbol(g, F)
    if F == 0:
        out.flat[0] = 0.0
    return SpectralScalarField(g, g.ifft(out), _coeffs=out)


def dealias(f: SpectralScalarField) -> SpectralScalarField:
    """Zero every mode with some ``|k_a| > floor(n_a / 3)``."""
    g = f.grid
    c = f.coefficients * g.dealias_mask
    return SpectralScalarField(g, g.ifft(c), _coeffs=c)


def inner_l2(f: SpectralScalarField, g: SpectralScalarField) -> float:
    """``integral f g dx`` by the uniform-grid rule (mean times volume)."""
    grid = _check_same(f, g)
    return float(np.mean(f.values * g.values) * grid.volume)


def random_bandlimited(grid: PeriodicGrid, kmax: int, rng: np.random.Generator,
                       amplitude: float = 1.0, zero_mean: bool = False) -> SpectralScalarField:
    """Random real field with modes ``|k_a| <= kmax`` on every axis.

    Coefficients are complex normal with a mild ``1/(1+|k|^2)`` roll-off, so
    products of a few such fields stay below the dealiasing cutoff when
    ``kmax`` is small compared with ``n/3``.
    """
    keep = np.ones(grid.spectral_shape, dtype=bool)
    for m in grid.mode_index:
        keep &= np.abs(m) <= kmax
    m2 = sum(m.astype(float) ** 2 for m in grid.mode_index)
    c = (rng.standard_normal(grid.spectral_shape) + 1j * rng.standard_normal(grid.spectral_shape))
    c = c * keep / (1.0 + m2)
    if zero_mean:
        c.flat[0] = 0.0
    values = grid.ifft(c)
    values *= amplitude / max(np.sqrt(np.mean(values**2)), 1e-300)
    return SpectralScalarField(grid, values)


def mode_field(grid: PeriodicGrid, k: Sequence[float], amplitude: float = 1.0,
               phase: float = 0.0) -> SpectralScalarField:
    """``amplitude * sin(k.x + phase)`` with ``k`` in integer mode units."""
    arg = sum(2 * np.pi / L * kk * x for kk, L, x in zip(k, grid.length, grid.mesh))
    return SpectralScalarField(grid, amplitude * np.sin(arg + phase))


class SpectralInterpolator:
    """Evaluate band-limited fields at arbitrary points by their Fourier series.

    Parameters
    ----------
    grid : PeriodicGrid
    coeffs : ndarray, shape (ncomp, *grid.spectral_shape)
        Half-spectrum coefficients of each component.
    prune : bool
        Restrict the sum to the bounding box of modes whose magnitude exceeds
        ``1e-15`` of the largest one.  Exact up to the pruned round-off.
    """

    def __init__(self, grid: PeriodicGrid, coeffs: np.ndarray, prune: bool = True):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.ndim == grid.dims:
            coeffs = coeffs[None]
        self.grid = grid
        self.ncomp = coeffs.shape[0]
        weighted = coeffs * grid._mode_weight
        kmax = []
        mag = np.abs(weighted).max(axis=0)
        top = mag.max()
        for a, m in enumerate(grid.mode_index):
            if prune and top > 0:
                active = mag > 1e-15 * top
                other = tuple(b for b in range(grid.dims) if b != a)
                along = active.any(axis=other) if other else active
                idx = np.abs(m.ravel())[along]
                kmax.append(int(idx.max()) if idx.size else 0)
            else:
                kmax.append(grid.n[a] // 2)
        self.kmax = tuple(kmax)
        sel = []
        self._m = []
        for a, m in enumerate(grid.mode_index):
            flat_m = m.ravel()
            s = np.nonzero(np.abs(flat_m) <= self.kmax[a])[0]
            sel.append(s)
            self._m.append(flat_m[s])
        self._c = weighted[(slice(None),) + np.ix_(*sel)]

    def _phases(self, x: np.ndarray, a: int) -> np.ndarray:
        # exp(i m k0 x) for the selected integer modes, by repeated multiplication
        m = self._m[a]
        top = self.kmax[a]
        z = np.exp(1j * (TWO_PI / self.grid.length[a]) * x)
        pw = np.ones((x.size, top + 1), dtype=complex)
        if top:
            pw[:, 1:] = np.cumprod(np.broadcast_to(z[:, None], (x.size, top)), axis=1)
        e = pw[:, np.abs(m)]
        neg = m < 0
        e[:, neg] = e[:, neg].conj()
        return e

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Values at ``points`` (shape (P, d)); returns shape (ncomp, P)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        e = [self._phases(pts[:, a], a) for a in range(self.grid.dims)]
        if self.grid.dims == 2:
            t = np.einsum("cab,pb->cpa", self._c, e[1], optimize=True)
            out = np.einsum("cpa,pa->cp", t, e[0])
        else:
            t = np.einsum("cabd,pd->cpab", self._c, e[2], optimize=True)
            t = np.einsum("cpab,pb->cpa", t, e[1])
            out = np.einsum("cpa,pa->cp", t, e[0])
        return out.real


def interpolate(f: SpectralScalarField, points: np.ndarray) -> np.ndarray:
    """Trigonometric interpolation of ``f`` at off-grid ``points``."""
    return SpectralInterpolator(f.grid, f.coefficients)(points)[0]
