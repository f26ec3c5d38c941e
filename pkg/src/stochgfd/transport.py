"""
Kinematic transport under prescribed stochastic flows.

The Eulerian stochastic vector field is ``dx_t = u dt - sum_i xi_i dW_i``.
Forms obey ``dq + L_{dx_t} q = 0``; points and loops move along ``dx_t``.

Interpretations
---------------
``stratonovich``     stochastic Heun for fields and points.
``ito``              Euler-Maruyama; fields carry the drift ``1/2 sum_j L_j L_j q``.
``ito_uncorrected``  Euler-Maruyama without that drift (fields only).

Points always use Euler-Maruyama under either Ito interpretation.  Every
consumer of one realization reads the same :class:`WienerPath`.

When all flow fields are spatially constant the flow is a rigid random
translation; fields are then shifted exactly in spectral space and points
exactly in physical space.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import forms as fm
from .forms import DifferentialForm, VectorFieldOnGrid
from .grid import PeriodicGrid, SpectralInterpolator
from .noise import NoiseBasis, WienerPath

STRATONOVICH = "stratonovich"
ITO = "ito"
ITO_UNCORRECTED = "ito_uncorrected"
INTERPRETATIONS = (STRATONOVICH, ITO, ITO_UNCORRECTED)


@dataclass
class FlowSpec:
    """Steady drift ``u`` plus noise fields ``xi_i`` on one grid."""

    drift: VectorFieldOnGrid | None = None
    basis: NoiseBasis | Sequence[VectorFieldOnGrid] | None = None
    interpretation: str = STRATONOVICH
    incompressible: bool = False
    grid: PeriodicGrid | None = None

    def __post_init__(self):
        if self.interpretation not in INTERPRETATIONS:
            raise ValueError(f"unknown interpretation {self.interpretation!r}")
        if self.basis is None:
            self.noise_fields = []
        elif isinstance(self.basis, NoiseBasis):
            self.noise_fields = self.basis.vector_fields()
        else:
            self.noise_fields = list(self.basis)
        grids = {f.grid for f in self.noise_fields}
        if self.drift is not None:
            grids.add(self.drift.grid)
        if self.grid is not None:
            grids.add(self.grid)
        if len(grids) != 1:
            raise ValueError("flow fields must live on exactly one grid (pass grid= for an empty flow)")
        self.grid = grids.pop()
        if self.drift is None:
            self.drift = VectorFieldOnGrid(np.zeros((self.grid.dims,) + self.grid.shape), False, self.grid)
        if self.incompressible:
            for f in [self.drift] + self.noise_fields:
                r = f.divergence_residual()
                if r > 1e-10:
                    raise ValueError(f"flow field has relative divergence {r:.2e}")

    @property
    def K(self) -> int:
        return len(self.noise_fields)

    def with_interpretation(self, interpretation: str) -> "FlowSpec":
        return FlowSpec(self.drift, self.noise_fields, interpretation, self.incompressible, self.grid)

    def is_constant(self) -> bool:
        return all(f.is_constant() for f in [self.drift] + self.noise_fields)

    def step_field(self, dW: np.ndarray, dt: float) -> VectorFieldOnGrid:
        """``u dt - sum_i xi_i dW_i`` with cached Jacobians combined linearly."""
        return fm.combine([self.drift] + self.noise_fields, [dt] + [-w for w in dW])

    def displacement(self, dW: np.ndarray, dt: float) -> np.ndarray:
        """Rigid displacement of a constant flow over one step."""
        s = self.drift.mean_vector() * dt
        for f, w in zip(self.noise_fields, dW):
            s = s - f.mean_vector() * w
        return s

    def ito_point_drift(self) -> VectorFieldOnGrid:
        """``w = -1/2 sum_i (xi_i . grad) xi_i``: Ito minus Stratonovich point drift."""
        g = self.grid
        total = np.zeros((g.dims,) + g.shape)
        for xi in self.noise_fields:
            total -= 0.5 * np.einsum("j...,ij...->i...", xi.data, xi.jacobian)
        c = g.fft(total) * g.dealias_mask
        return VectorFieldOnGrid(g.ifft(c), False, g, _coeffs=c)


def _check_path(flow: FlowSpec, path: WienerPath | None, steps: int):
    if flow.K and path is None:
        raise ValueError("a Brownian path is required for a noisy flow")
    if path is not None and flow.K and path.K != flow.K:
        raise ValueError(f"path has {path.K} components, flow has {flow.K}")
    if path is not None and path.N < steps:
        raise ValueError("Brownian path is shorter than the requested horizon")


def _steps(path: WienerPath | None, T: float | None, dt: float | None) -> tuple[int, float]:
    dt = path.dt if path is not None else dt
    if dt is None:
        raise ValueError("dt is required without a Brownian path")
    if T is None:
        if path is None:
            raise ValueError("T is required without a Brownian path")
        return path.N, dt
    return int(round(T / dt)), dt


def _increments(flow: FlowSpec, path: WienerPath | None, n: int) -> np.ndarray:
    if not flow.K:
        return np.zeros(0)
    return path.increments[n]


# -- fields ------------------------------------------------------------------

class FormStepper:
    """One-step maps for a form of fixed grade under ``flow``."""

    def __init__(self, flow: FlowSpec, grade: str):
        self.flow = flow
        self.grade = grade
        self.grid = flow.grid
        self.constant = flow.is_constant() and flow.interpretation != ITO_UNCORRECTED

    def lie(self, X: VectorFieldOnGrid, c: np.ndarray) -> np.ndarray:
        g = self.grid
        vals = fm._lie_closed_values(self.grade, g.dims, X.data, X.jacobian, X.divergence,
                                     g.ifft(c), fm._grad_values(g, c))
        return g.fft(vals) * g.dealias_mask

    def lie_laplacian(self, c: np.ndarray) -> np.ndarray:
        out = np.zeros_like(c)
        for xi in self.flow.noise_fields:
            out += self.lie(xi, self.lie(xi, c))
        return out

    def step(self, c: np.ndarray, dW: np.ndarray, dt: float) -> np.ndarray:
        flow = self.flow
        if self.constant:
            s = flow.displacement(dW, dt)
            return c * np.exp(-sum(ik * sa for ik, sa in zip(self.grid.ik, s)))
        X = flow.step_field(dW, dt)
        if flow.interpretation == STRATONOVICH:
            k1 = -self.lie(X, c)
            k2 = -self.lie(X, c + k1)
            return c + 0.5 * (k1 + k2)
        new = c - self.lie(X, c)
        if flow.interpretation == ITO:
            new = new + 0.5 * dt * self.lie_laplacian(c)
        return new


@dataclass
class FormTrajectory:
    times: list[float]
    forms: list[DifferentialForm]

    @property
    def final(self) -> DifferentialForm:
        return self.forms[-1]


def advect_form(q0: DifferentialForm, flow: FlowSpec, path: WienerPath | None = None, T: float | None = None,
                dt: float | None = None, record_every: int = 1) -> FormTrajectory:
    """Solve ``dq + L_{dx_t} q = 0`` from ``q0``; returns recorded states."""
    if q0.grid != flow.grid:
        raise fm.GridMismatchError("form and flow live on different grids")
    steps, dt = _steps(path, T, dt)
    _check_path(flow, path, steps)
    st = FormStepper(flow, q0.grade)
    g = q0.grid
    c = q0.coeffs * g.dealias_mask
    times, out = [0.0], [DifferentialForm.from_coeffs(g, q0.grade, c)]
    for n in range(steps):
        c = st.step(c, _increments(flow, path, n), dt)
        if (n + 1) % record_every == 0 or n + 1 == steps:
            times.append((n + 1) * dt)
            out.append(DifferentialForm.from_coeffs(g, q0.grade, c))
    return FormTrajectory(times, out)


# -- points and loops ------------------------------------------------------------

class PointStepper:
    """Point SDE ``dx = u(x) dt - sum_i xi_i(x) dW_i`` with spectral interpolation."""

    def __init__(self, flow: FlowSpec):
        self.flow = flow
        self.constant = flow.is_constant()
        self.d = flow.grid.dims
        coeffs = np.concatenate([f.coeffs for f in [flow.drift] + flow.noise_fields])
        self.interp = SpectralInterpolator(flow.grid, coeffs)

    def velocity(self, x: np.ndarray, dW: np.ndarray, dt: float) -> np.ndarray:
        vals = self.interp(x).reshape(1 + self.flow.K, self.d, -1)
        v = vals[0] * dt - np.tensordot(dW, vals[1:], axes=1) if self.flow.K else vals[0] * dt
        return v.T

    def step(self, x: np.ndarray, dW: np.ndarray, dt: float) -> np.ndarray:
        if self.constant:
            return x + self.flow.displacement(dW, dt)
        k1 = self.velocity(x, dW, dt)
        if self.flow.interpretation == STRATONOVICH:
            k2 = self.velocity(x + k1, dW, dt)
            return x + 0.5 * (k1 + k2)
        return x + k1


def _loop_derivative(points: np.ndarray) -> np.ndarray:
    """``dx/ds`` for a closed curve sampled uniformly in ``s`` on ``[0, 2 pi)``."""
    P = points.shape[0]
    c = np.fft.rfft(points, axis=0)
    m = np.arange(c.shape[0])
    mult = 1j * m
    if P % 2 == 0:
        mult[-1] = 0.0
    return np.fft.irfft(c * mult[:, None], n=P, axis=0)


def _loop_eval(points: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Trigonometric interpolant of a closed curve evaluated at parameters ``s``."""
    P = points.shape[0]
    c = np.fft.fft(points, axis=0) / P
    m = np.fft.fftfreq(P, d=1.0 / P)
    if P % 2 == 0:
        c[P // 2] *= 0.5
        c = np.concatenate([c, c[P // 2:P // 2 + 1]])
        m = np.concatenate([m, [P // 2]])
    return np.real(np.exp(1j * np.outer(s, m)) @ c)


@dataclass
class MaterialLoop:
    """Closed polyline with unwrapped positions; the closing segment is implicit."""

    points: np.ndarray
    resample_threshold: float = 2.0
    reference_spacing: float | None = None

    def __post_init__(self):
        self.points = np.array(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[0] < 16:
            raise ValueError("a loop needs at least 16 points of shape (P, d)")
        if self.reference_spacing is None:
            self.reference_spacing = float(self.segment_lengths().mean())

    @classmethod
    def circle(cls, center: Sequence[float], radius: float, P: int = 256,
               normal: Sequence[float] | None = None, **kw) -> "MaterialLoop":
        s = 2 * np.pi * np.arange(P) / P
        center = np.asarray(center, dtype=float)
        if center.size == 2:
            pts = center + radius * np.stack([np.cos(s), np.sin(s)], axis=1)
        else:
            n = np.asarray(normal if normal is not None else (0, 0, 1), dtype=float)
            n /= np.linalg.norm(n)
            a = np.cross(n, [1.0, 0, 0] if abs(n[0]) < 0.9 else [0, 1.0, 0])
            a /= np.linalg.norm(a)
            b = np.cross(n, a)
            pts = center + radius * (np.cos(s)[:, None] * a + np.sin(s)[:, None] * b)
        return cls(pts, **kw)

    @property
    def P(self) -> int:
        return self.points.shape[0]

    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.roll(self.points, -1, axis=0) - self.points, axis=1)

    def needs_resampling(self) -> bool:
        return bool(self.segment_lengths().max() > self.resample_threshold * self.reference_spacing)

    def resample(self, oversample: int = 8) -> "MaterialLoop":
        """Redistribute points uniformly in arc length along the trigonometric interpolant.

        The point count grows so that the mean spacing returns to the
        reference spacing.
        """
        P = self.P
        fine = P * oversample
        s = 2 * np.pi * np.arange(fine) / fine
        speed = np.linalg.norm(_loop_eval(_loop_derivative(self.points), s), axis=1)
        arc = np.concatenate([[0.0], np.cumsum(0.5 * (speed + np.roll(speed, -1)))]) * (2 * np.pi / fine)
        length = arc[-1]
        newP = max(P, int(np.ceil(length / self.reference_spacing / 2)) * 2)
        targets = np.arange(newP) * (length / newP)
        s_new = np.interp(targets, arc, np.concatenate([s, [2 * np.pi]]))
        return MaterialLoop(_loop_eval(self.points, s_new), self.resample_threshold, self.reference_spacing)


def loop_circulation_integrand(points: np.ndarray, values: np.ndarray) -> float:
    """``(2 pi / P) sum_p v(x_p) . x'(s_p)`` for point values ``values`` (P, d)."""
    dx = _loop_derivative(points)
    return float(np.sum(values * dx) * (2 * np.pi / points.shape[0]))


def circulation(loop: MaterialLoop | np.ndarray, v: DifferentialForm | VectorFieldOnGrid,
                D: DifferentialForm | None = None) -> float:
    """``closed integral (v / D) . dx`` around the loop.

    ``v`` is interpolated spectrally at the vertices and the line integral
    uses the trapezoidal rule in the loop parameter with spectral tangent
    vectors, which is spectrally accurate for smooth loops.
    """
    pts = loop.points if isinstance(loop, MaterialLoop) else np.asarray(loop, dtype=float)
    vals = SpectralInterpolator(v.grid, v.coeffs)(pts).T
    if D is not None:
        if D.grid != v.grid:
            raise fm.GridMismatchError("v and D live on different grids")
        vals = vals / SpectralInterpolator(D.grid, D.coeffs)(pts)[0][:, None]
    return loop_circulation_integrand(pts, vals)


@dataclass
class LoopTrajectory:
    times: list[float]
    loops: list[MaterialLoop]


def advect_loop(loop: MaterialLoop, flow: FlowSpec, path: WienerPath | None = None, T: float | None = None,
                dt: float | None = None, record_every: int = 1) -> LoopTrajectory:
    """Move every vertex by the point SDE; resample by arc length when stretched."""
    steps, dt = _steps(path, T, dt)
    _check_path(flow, path, steps)
    ps = PointStepper(flow)
    times, loops = [0.0], [loop]
    cur = loop
    for n in range(steps):
        cur = MaterialLoop(ps.step(cur.points, _increments(flow, path, n), dt),
                           cur.resample_threshold, cur.reference_spacing)
        if cur.needs_resampling():
            cur = cur.resample()
        if (n + 1) % record_every == 0 or n + 1 == steps:
            times.append((n + 1) * dt)
            loops.append(cur)
    return LoopTrajectory(times, loops)


# -- Kelvin circulation --------------------------------------------------------

@dataclass
class KelvinReport:
    """Circulation series around a co-moving loop.

    ``double_lie_term`` accumulates ``1/2 closed integral sum_j L_j L_j v . dx dt``
    and ``covariation_term`` accumulates ``closed integral L_w v . dx dt`` with
    ``w = -1/2 sum_j (xi_j . grad) xi_j``, both along the discrete loop.
    """

    interpretation: str
    times: np.ndarray
    circulation: np.ndarray
    double_lie_term: np.ndarray
    covariation_term: np.ndarray
    resamples: int = 0

    @property
    def initial(self) -> float:
        return float(self.circulation[0])

    @property
    def change(self) -> np.ndarray:
        return self.circulation - self.circulation[0]

    @property
    def relative_drift(self) -> float:
        return float(np.abs(self.change).max() / abs(self.circulation[0]))


def kelvin_check(v0: DifferentialForm, flow: FlowSpec, path: WienerPath | None, loop: MaterialLoop,
                 T: float | None = None, dt: float | None = None, predictions: bool | None = None,
                 record_every: int = 1) -> KelvinReport:
    """Co-evolve a one-form and a loop with the same increments and track ``closed integral v``.

    The field follows the flow's interpretation (with the Lie-Laplacian drift
    under ``ito``); the loop follows the matching point scheme.  Circulation
    and the source terms are sampled every ``record_every`` steps; the source
    terms use the left-point rule on that coarser time grid.
    """
    if v0.grade != fm.ONE_FORM:
        raise fm.GradeError("circulation needs a one-form")
    steps, dt = _steps(path, T, dt)
    _check_path(flow, path, steps)
    fst = FormStepper(flow, fm.ONE_FORM)
    pst = PointStepper(flow)
    g = v0.grid
    predictions = flow.interpretation != STRATONOVICH if predictions is None else predictions
    w = flow.ito_point_drift() if predictions else None
    c = v0.coeffs * g.dealias_mask
    pts = loop.points
    ref = loop.reference_spacing
    rec = [0]
    circ, dbl, cov = [], [0.0], [0.0]
    resamples = 0

    def integrate(coeffs, x):
        return loop_circulation_integrand(x, SpectralInterpolator(g, coeffs)(x).T)

    circ.append(integrate(c, pts))
    for n in range(steps):
        if predictions and n % record_every == 0:
            h = dt * min(record_every, steps - n)
            dbl.append(dbl[-1] + 0.5 * h * integrate(fst.lie_laplacian(c), pts))
            cov.append(cov[-1] + h * integrate(fst.lie(w, c), pts))
        dW = _increments(flow, path, n)
        c = fst.step(c, dW, dt)
        pts = pst.step(pts, dW, dt)
        cur = MaterialLoop(pts, loop.resample_threshold, ref)
        if cur.needs_resampling():
            pts = cur.resample().points
            resamples += 1
        if (n + 1) % record_every == 0 or n + 1 == steps:
            rec.append(n + 1)
            circ.append(integrate(c, pts))
    if not predictions:
        dbl = cov = [0.0] * len(rec)
    times = np.array(rec) * dt
    return KelvinReport(flow.interpretation, times, np.array(circ), np.array(dbl), np.array(cov), resamples)


# -- helicity and vorticity flux -------------------------------------------------

@dataclass
class HelicityReport:
    """Helicity series and the accumulated Lie-Laplacian source ``integral v . Delta_Lie omega dt``."""

    interpretation: str
    times: np.ndarray
    helicity: np.ndarray
    lie_laplacian_source: np.ndarray
    realized_covariation: np.ndarray

    @property
    def change(self) -> np.ndarray:
        return self.helicity - self.helicity[0]

    @property
    def relative_drift(self) -> float:
        return float(np.abs(self.change).max() / abs(self.helicity[0])) if self.helicity[0] else float(
            np.abs(self.change).max())


def helicity_check(v0: DifferentialForm, flow: FlowSpec, path: WienerPath | None, T: float | None = None,
                   dt: float | None = None, sources: bool | None = None) -> HelicityReport:
    """Transport a 3D one-form and record ``Lambda = integral v . curl v``.

    With ``sources`` set, also accumulates ``integral v . Delta_Lie curl v dt``
    and the realized quadratic term ``sum_n integral dv_n . curl dv_n`` of the
    increments.
    """
    if v0.grid.dims != 3:
        raise fm.GradeError("helicity needs a 3D one-form")
    steps, dt = _steps(path, T, dt)
    _check_path(flow, path, steps)
    sources = flow.interpretation != STRATONOVICH if sources is None else sources
    fst = FormStepper(flow, fm.ONE_FORM)
    g = v0.grid
    c = v0.coeffs * g.dealias_mask
    lam = np.empty(steps + 1)
    src = np.zeros(steps + 1)
    quad = np.zeros(steps + 1)
    lam[0] = _helicity_c(g, c)
    two = FormStepper(flow, fm.TWO_FORM)
    for n in range(steps):
        if sources:
            omega = fm._curl3_coeffs(g, c)
            src[n + 1] = src[n] + dt * _pair_c(g, c, two.lie_laplacian(omega))
        new = fst.step(c, _increments(flow, path, n), dt)
        if sources:
            quad[n + 1] = quad[n] + _helicity_c(g, new - c)
        c = new
        lam[n + 1] = _helicity_c(g, c)
    return HelicityReport(flow.interpretation, np.arange(steps + 1) * dt, lam, src, quad)


def _pair_c(g: PeriodicGrid, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(g._mode_weight * (a * b.conj()).real) * g.volume)


def _helicity_c(g: PeriodicGrid, c: np.ndarray) -> float:
    return _pair_c(g, c, fm._curl3_coeffs(g, c))


@dataclass
class FluxReport:
    times: np.ndarray
    flux: np.ndarray
    initial_surface_flux: float

    @property
    def relative_drift(self) -> float:
        scale = abs(self.flux[0]) if self.flux[0] else 1.0
        return float(np.abs(self.flux - self.flux[0]).max() / scale)


def surface_flux(omega: DifferentialForm, center: Sequence[float], radius: float, normal: Sequence[float],
                 nr: int = 64, nt: int = 128) -> float:
    """Flux of a 3D two-form through a flat disk by polar Gauss-trapezoid quadrature."""
    n = np.asarray(normal, dtype=float)
    n /= np.linalg.norm(n)
    a = np.cross(n, [1.0, 0, 0] if abs(n[0]) < 0.9 else [0, 1.0, 0])
    a /= np.linalg.norm(a)
    b = np.cross(n, a)
    r, wr = np.polynomial.legendre.leggauss(nr)
    r = 0.5 * radius * (r + 1)
    wr = 0.5 * radius * wr
    t = 2 * np.pi * np.arange(nt) / nt
    R, Tt = np.meshgrid(r, t, indexing="ij")
    pts = np.asarray(center) + R.reshape(-1, 1) * (np.cos(Tt).reshape(-1, 1) * a + np.sin(Tt).reshape(-1, 1) * b)
    vals = SpectralInterpolator(omega.grid, omega.coeffs)(pts).T @ n
    w = (wr[:, None] * R * (2 * np.pi / nt)).reshape(-1)
    return float(np.sum(vals * w))


def vorticity_flux_check(v0: DifferentialForm, flow: FlowSpec, path: WienerPath | None, center: Sequence[float],
                         radius: float, normal: Sequence[float] = (0, 0, 1), P: int = 256,
                         T: float | None = None, dt: float | None = None) -> FluxReport:
    """Flux of ``omega = dv`` through a co-moving disk, via circulation on its boundary."""
    if v0.grid.dims != 3:
        raise fm.GradeError("vorticity flux is checked in 3D")
    loop = MaterialLoop.circle(center, radius, P, normal)
    surf = surface_flux(fm.exterior_derivative(v0), center, radius, normal)
    rep = kelvin_check(v0, flow, path, loop, T, dt, predictions=False)
    return FluxReport(rep.times, rep.circulation, surf)


# -- tracers and potential vorticity along paths -----------------------------------

@dataclass
class TracerEnsemble:
    """Lagrangian points; ``positions`` are kept unwrapped internally."""

    positions: np.ndarray
    carried_values: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.array(self.positions, dtype=float)
        if self.carried_values is not None:
            self.carried_values = np.asarray(self.carried_values, dtype=float)

    @classmethod
    def lattice(cls, grid: PeriodicGrid, m: int, offset: float = 0.37) -> "TracerEnsemble":
        """``m**d`` points on a shifted lattice."""
        axes = [(np.arange(m) + offset) * (L / m) for L in grid.length]
        mesh = np.meshgrid(*axes, indexing="ij")
        return cls(np.stack([x.ravel() for x in mesh], axis=1))

    @property
    def M(self) -> int:
        return self.positions.shape[0]

    def wrapped(self, grid: PeriodicGrid) -> np.ndarray:
        return np.mod(self.positions, np.asarray(grid.length))


@dataclass
class PVPathReport:
    """Potential vorticity sampled along tracer paths.

    ``Q[n, p]`` is ``Q(x_p(t_n), t_n)``.  ``lie_laplacian_rate[n, p]`` is
    ``1/2 Delta_Lie Q`` and ``covariation_rate[n, p]`` is ``w . grad Q`` with
    ``w = -1/2 sum_j (xi_j . grad) xi_j``, both at the tracer positions.
    """

    interpretation: str
    times: np.ndarray
    Q: np.ndarray
    lie_laplacian_rate: np.ndarray | None
    covariation_rate: np.ndarray | None
    positions: np.ndarray

    @property
    def dQ(self) -> np.ndarray:
        return self.Q[-1] - self.Q[0]

    @property
    def max_abs_dQ(self) -> float:
        return float(np.abs(self.Q - self.Q[0]).max())


def pv_along_paths(model, mu0: np.ndarray, tracers: TracerEnsemble, path: WienerPath | None, dt: float,
                   steps: int, interpretation: str, predictions: bool = False) -> PVPathReport:
    """Integrate an SQG field and tracers on one Brownian path.

    ``model`` is an :class:`stochgfd.sqg.SQGModel`; its noise stream functions
    define the tracer noise velocities ``z x grad xi_i``.  Stratonovich uses
    joint Heun for ``(mu, x)``; ``ito`` and ``ito_uncorrected`` use joint
    Euler-Maruyama with the matching field scheme.
    """
    if interpretation not in INTERPRETATIONS:
        raise ValueError(f"unknown interpretation {interpretation!r}")
    g = model.grid
    K = model.K
    if K and (path is None or path.K != K or path.N < steps):
        raise ValueError("Brownian path does not match the model noise or horizon")
    beta, f0 = model.params.beta, model.params.f0
    ik1, ik2 = model.ik1, model.ik2
    xi_vel = np.concatenate([np.stack([-ik2 * x, ik1 * x]) for x in model.xi]) if K else np.zeros((0,) + g.spectral_shape)
    xi_interp = SpectralInterpolator(g, xi_vel) if K else None
    xi_fields = [VectorFieldOnGrid.from_streamfunction(_scalar(g, x)) for x in model.xi]
    flow = FlowSpec(None, xi_fields, STRATONOVICH, grid=g) if K else None
    w = flow.ito_point_drift() if (predictions and K) else None

    def velocity(mu, x, dW):
        psi = model.psi(mu)
        u = SpectralInterpolator(g, np.stack([-ik2 * psi, ik1 * psi]))(x) * dt
        if K:
            xv = xi_interp(x).reshape(K, 2, -1)
            u = u - np.tensordot(dW, xv, axes=1)
        return u.T

    def q_at(mu, x):
        return SpectralInterpolator(g, mu)(x)[0] + f0 + beta * x[:, 1]

    if predictions and K:
        scalar = FormStepper(flow, fm.SCALAR)
        # beta x2 is not periodic: Delta_Lie(beta x2) = beta sum_j xi_j . grad xi_j2
        beta_field = beta * sum(np.einsum("a...,a...->...", xi.data, xi.jacobian[1]) for xi in xi_fields)
        beta_c = g.fft(beta_field) * g.dealias_mask

    def rates(mu, x):
        total = beta_c.copy()
        for xi in xi_fields:
            total += scalar.lie(xi, scalar.lie(xi, mu[None]))[0]
        lap = SpectralInterpolator(g, total)(x)[0]
        gradq = SpectralInterpolator(g, np.stack([ik1 * mu, ik2 * mu]))(x)
        gradq[1] += beta
        wv = SpectralInterpolator(g, w.coeffs)(x)
        return 0.5 * lap, np.sum(wv * gradq, axis=0)

    x = tracers.positions.copy()
    mu = mu0 * model.mask
    Qs = [q_at(mu, x)]
    pos = [x.copy()]
    lr, cr = [], []
    zero = np.zeros(K)
    for n in range(steps):
        dW = path.increments[n] if K else zero
        if predictions and K:
            a, b = rates(mu, x)
            lr.append(a)
            cr.append(b)
        if interpretation == STRATONOVICH:
            k1x = velocity(mu, x, dW)
            k1m = model.increment(mu, dW, dt)
            k2x = velocity(mu + k1m, x + k1x, dW)
            k2m = model.increment(mu + k1m, dW, dt)
            x = x + 0.5 * (k1x + k2x)
            mu = mu + 0.5 * (k1m + k2m)
        else:
            k1x = velocity(mu, x, dW)
            new = mu + model.increment(mu, dW, dt)
            if interpretation == ITO:
                new = new + model.ito_drift(mu) * dt
            x = x + k1x
            mu = new
        Qs.append(q_at(mu, x))
        pos.append(x.copy())
    lr_a = np.array(lr) if lr else None
    cr_a = np.array(cr) if cr else None
    return PVPathReport(interpretation, np.arange(steps + 1) * dt, np.array(Qs), lr_a, cr_a, np.array(pos))


def _scalar(g: PeriodicGrid, c: np.ndarray):
    from .grid import SpectralScalarField
    return SpectralScalarField(g, g.ifft(c), _coeffs=c)
