"""
Stochastic quasigeostrophic model on the doubly periodic beta-plane.

Potential vorticity ``Q = laplacian(psi) - F psi + f0 + beta x2`` and its
periodic anomaly ``mu = Q - f0 - beta x2`` evolve by transport along the
stochastic stream function ``psi dt - sum_i xi_i dW_i``:

    dmu = -[psi dt - sum_i xi_i o dW_i, Q]

with the Jacobian ``[a, b] = d1 a d2 b - d2 a d1 b``.  Because ``beta x2`` is
not periodic, ``[S, beta x2] = beta d1 S`` is applied analytically.

Schemes
-------
``deterministic``  Heun without noise.
``stratonovich``   stochastic Heun (predictor-corrector).
``ito``            Euler-Maruyama with the drift ``1/2 sum_j [xi_j, [xi_j, Q]] dt``.
``ito_uncorrected`` Euler-Maruyama without that drift.

The model works on half-spectrum coefficient arrays; every product is
dealiased by the two-thirds rule.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .grid import PeriodicGrid, SpectralScalarField, helmholtz_symbol
from .noise import QG_STREAMFUNCTION, NoiseBasis, WienerPath, sample_increments
from .pod import streamfunction_from_velocity

log = logging.getLogger(__name__)

SCHEMES = ("deterministic", "stratonovich", "ito", "ito_uncorrected")


class NumericalBlowup(RuntimeError):
    """Raised when the state stops being finite; carries the last good time."""

    def __init__(self, message: str, last_good_time: float):
        super().__init__(message)
        self.last_good_time = last_good_time


@dataclass(frozen=True)
class SQGParams:
    F: float = 0.0
    beta: float = 0.0
    f0: float = 0.0
    nu: float = 0.0          # hyperviscosity coefficient, off by default
    order: int = 4           # hyperviscosity acts as -nu (-laplacian)^order

    def __post_init__(self):
        if self.F < 0:
            raise ValueError("F must be nonnegative")
        if self.nu < 0:
            raise ValueError("hyperviscosity coefficient must be nonnegative")


@dataclass
class SQGState:
    mu: SpectralScalarField
    time: float = 0.0
    params: SQGParams = field(default_factory=SQGParams)

    @property
    def grid(self) -> PeriodicGrid:
        return self.mu.grid

    @property
    def psi(self) -> SpectralScalarField:
        g = self.grid
        c = self.mu.coefficients * _inverse_symbol(g, self.params.F)
        return SpectralScalarField(g, g.ifft(c), _coeffs=c)

    @property
    def Q(self) -> SpectralScalarField:
        p = self.params
        return self.mu + (p.f0 + p.beta * self.grid.mesh[1])


def _inverse_symbol(grid: PeriodicGrid, F: float) -> np.ndarray:
    inv = 1.0 / helmholtz_symbol(grid, F)
    if F == 0:
        inv.flat[0] = 0.0
    return inv


def _stream_coeffs(basis: NoiseBasis | None, grid: PeriodicGrid) -> np.ndarray:
    if basis is None or basis.K == 0:
        return np.zeros((0,) + grid.spectral_shape, dtype=complex)
    if basis.mode == QG_STREAMFUNCTION:
        fields = basis.fields
    else:
        fields = [streamfunction_from_velocity(v) for v in basis.fields]
    for f in fields:
        if f.grid != grid:
            raise ValueError("noise basis lives on a different grid")
    return np.stack([f.coefficients for f in fields]) * grid.dealias_mask


class SQGModel:
    """Coefficient-space right-hand sides and steppers for one grid and basis."""

    def __init__(self, grid: PeriodicGrid, params: SQGParams, basis: NoiseBasis | None = None):
        if grid.dims != 2:
            raise ValueError("the QG model is two-dimensional")
        self.grid = grid
        self.params = params
        self.xi = _stream_coeffs(basis, grid)
        self.inv = _inverse_symbol(grid, params.F)
        self.ik1, self.ik2 = grid.ik
        self.mask = grid.dealias_mask
        if params.nu > 0:
            self.damp_rate = params.nu * grid.k2**params.order
        else:
            self.damp_rate = None

    @property
    def K(self) -> int:
        return self.xi.shape[0]

    def project(self, values: np.ndarray) -> np.ndarray:
        return self.grid.fft(values) * self.mask

    def bracket(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Dealiased Jacobian of two coefficient arrays; its mean is exactly zero."""
        g = self.grid
        grads = g.ifft(np.stack([self.ik1 * a, self.ik2 * a, self.ik1 * b, self.ik2 * b]))
        out = self.project(grads[0] * grads[3] - grads[1] * grads[2])
        out.flat[0] = 0.0
        return out

    def psi(self, mu: np.ndarray) -> np.ndarray:
        return mu * self.inv

    def transport(self, S: np.ndarray, mu: np.ndarray) -> np.ndarray:
        """``-[S, Q]`` for a stream function ``S`` (coefficients)."""
        return -self.bracket(S, mu) - self.params.beta * self.ik1 * S

    def stream(self, mu: np.ndarray, dW: np.ndarray, dt: float) -> np.ndarray:
        S = self.psi(mu) * dt
        if self.K:
            S = S - np.tensordot(dW, self.xi, axes=1)
        return S

    def increment(self, mu: np.ndarray, dW: np.ndarray, dt: float) -> np.ndarray:
        return self.transport(self.stream(mu, dW, dt), mu)

    def ito_drift(self, mu: np.ndarray) -> np.ndarray:
        """``1/2 sum_j [xi_j, [xi_j, Q]]``."""
        out = np.zeros_like(mu)
        beta = self.params.beta
        for x in self.xi:
            inner = self.bracket(x, mu) + beta * self.ik1 * x
            out += self.bracket(x, inner)
        return 0.5 * out

    def _damp(self, mu: np.ndarray, dt: float) -> np.ndarray:
        if self.damp_rate is None:
            return mu
        return mu * np.exp(-self.damp_rate * dt)

    def step(self, mu: np.ndarray, dW: np.ndarray, dt: float, scheme: str) -> np.ndarray:
        if scheme in ("deterministic", "stratonovich"):
            if scheme == "deterministic":
                dW = np.zeros(self.K)
            k1 = self.increment(mu, dW, dt)
            k2 = self.increment(mu + k1, dW, dt)
            new = mu + 0.5 * (k1 + k2)
        elif scheme == "ito":
            new = mu + self.increment(mu, dW, dt) + self.ito_drift(mu) * dt
        elif scheme == "ito_uncorrected":
            new = mu + self.increment(mu, dW, dt)
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
        return self._damp(new, dt)

    def integrate(self, mu0: np.ndarray, path: WienerPath | None, dt: float, steps: int, scheme: str,
                  callback=None, t0: float = 0.0) -> np.ndarray:
        """Advance ``steps`` steps; ``callback(n, t, mu)`` is called after each step."""
        mu = mu0 * self.mask
        zero = np.zeros(self.K)
        if path is not None and self.K and path.K != self.K:
            raise ValueError(f"path has {path.K} components, basis has {self.K}")
        if path is not None and path.N < steps and self.K and scheme != "deterministic":
            raise ValueError("Brownian path is shorter than the run")
        for n in range(steps):
            dW = path.increments[n] if (path is not None and self.K) else zero
            with np.errstate(over="ignore", invalid="ignore"):
                new = self.step(mu, dW, dt, scheme)
            if not np.all(np.isfinite(new)):
                raise NumericalBlowup(f"non-finite state at step {n + 1}", t0 + n * dt)
            mu = new
            if callback is not None:
                callback(n + 1, t0 + (n + 1) * dt, mu)
        return mu


# -- functional interface -----------------------------------------------------

def jacobi_bracket(a: SpectralScalarField, b: SpectralScalarField) -> SpectralScalarField:
    """``d1 a d2 b - d2 a d1 b``, dealiased."""
    g = a.grid
    if b.grid != g:
        raise ValueError("fields live on different grids")
    if g.dims != 2:
        raise ValueError("the Jacobi bracket is defined in 2D")
    m = SQGModel(g, SQGParams())
    c = m.bracket(a.coefficients * m.mask, b.coefficients * m.mask)
    return SpectralScalarField(g, g.ifft(c), _coeffs=c)


def _state_coeffs(state: SQGState, model: SQGModel) -> np.ndarray:
    return state.mu.coefficients * model.mask


def _new_state(state: SQGState, c: np.ndarray, dt: float) -> SQGState:
    g = state.grid
    return SQGState(SpectralScalarField(g, g.ifft(c), _coeffs=c), state.time + dt, state.params)


def rhs_deterministic(state: SQGState, params: SQGParams | None = None) -> SpectralScalarField:
    """``-[psi, mu] - beta d1 psi``."""
    params = params or state.params
    m = SQGModel(state.grid, params)
    c = m.transport(m.psi(_state_coeffs(state, m)), _state_coeffs(state, m))
    return SpectralScalarField(state.grid, state.grid.ifft(c), _coeffs=c)


def strat_step(state: SQGState, params: SQGParams | None, basis: NoiseBasis | None,
               dW: Sequence[float], dt: float) -> SQGState:
    """One stochastic Heun step."""
    params = params or state.params
    m = SQGModel(state.grid, params, basis)
    c = m.step(_state_coeffs(state, m), np.asarray(dW, dtype=float).reshape(m.K), dt, "stratonovich")
    return _new_state(SQGState(state.mu, state.time, params), c, dt)


def ito_step(state: SQGState, params: SQGParams | None, basis: NoiseBasis | None,
             dW: Sequence[float], dt: float, corrected: bool = True) -> SQGState:
    """One Euler-Maruyama step, with the double-bracket drift when ``corrected``."""
    params = params or state.params
    m = SQGModel(state.grid, params, basis)
    scheme = "ito" if corrected else "ito_uncorrected"
    c = m.step(_state_coeffs(state, m), np.asarray(dW, dtype=float).reshape(m.K), dt, scheme)
    return _new_state(SQGState(state.mu, state.time, params), c, dt)


def casimir(state: SQGState, phi: Any) -> float:
    """``integral Phi(Q)``.

    ``phi`` is an integer power ``0..4``, ``{"power": n}``, or
    ``{"table": {"q": [...], "phi": [...]}}`` for a tabulated function
    (piecewise linear, increasing abscissae).
    """
    q = state.Q.values
    g = state.grid
    if isinstance(phi, dict) and "power" in phi:
        phi = phi["power"]
    if isinstance(phi, (int, np.integer)) and not isinstance(phi, bool):
        if not 0 <= phi <= 4:
            raise ValueError(f"unsupported power {phi}")
        vals = q ** int(phi)
    elif isinstance(phi, dict) and "table" in phi:
        xs = np.asarray(phi["table"]["q"], dtype=float)
        ys = np.asarray(phi["table"]["phi"], dtype=float)
        if xs.shape != ys.shape or xs.size < 2 or np.any(np.diff(xs) <= 0):
            raise ValueError("tabulated Phi needs matching increasing abscissae")
        vals = np.interp(q, xs, ys)
    else:
        raise ValueError(f"unsupported Casimir density {phi!r}")
    return float(np.mean(vals) * g.volume)


def energy(state: SQGState, params: SQGParams | None = None) -> float:
    """``1/2 integral (|grad psi|^2 + F psi^2)``, evaluated as ``-1/2 <mu, psi>``."""
    params = params or state.params
    g = state.grid
    c = state.mu.coefficients
    psi = c * _inverse_symbol(g, params.F)
    return float(-0.5 * np.sum(g._mode_weight * (c * psi.conj()).real) * g.volume)


def rossby_frequency(params: SQGParams) -> Any:
    """Linear dispersion relation ``omega(k) = -beta k1 / (|k|^2 + F)``."""
    def omega(k1: float, k2: float) -> float:
        return -params.beta * k1 / (k1**2 + k2**2 + params.F)
    return omega


def measure_wave_frequency(grid: PeriodicGrid, params: SQGParams, k: Sequence[int], amplitude: float = 1e-3,
                           periods: float = 1.0, steps_per_period: int = 400) -> float:
    """Frequency of a small-amplitude plane wave ``amplitude cos(k.x)``.

    The wave is integrated deterministically and ``omega`` is the negative
    slope of the unwrapped phase of its Fourier coefficient, fitted by least
    squares.  ``k`` holds integer mode numbers.
    """
    kw = [2 * np.pi / L * kk for kk, L in zip(k, grid.length)]
    expected = rossby_frequency(params)(*kw)
    if expected == 0:
        raise ValueError("the wave is stationary for these parameters")
    period = 2 * np.pi / abs(expected)
    dt = period / steps_per_period
    steps = int(round(periods * steps_per_period))
    model = SQGModel(grid, params)
    mu = model.project(modes_field(grid, [{"k": list(k), "amplitude": amplitude, "kind": "cos"}]).values)
    # the half spectrum stores k or -k; the coefficient of -k is the conjugate
    sign = 1 if k[-1] >= 0 else -1
    idx = tuple(int(sign * kk) % n for kk, n in zip(k, grid.n))
    phases = [sign * np.angle(mu[idx])]
    model.integrate(mu, None, dt, steps, "deterministic",
                    callback=lambda n, t, c: phases.append(sign * np.angle(c[idx])))
    t = dt * np.arange(steps + 1)
    return float(-np.polyfit(t, np.unwrap(phases), 1)[0])


def cfl_advisory(model: SQGModel, mu: np.ndarray, dt: float) -> dict[str, float]:
    """Advective and noise Courant numbers (reported, never enforced)."""
    g = model.grid
    dx = min(g.spacing)
    psi = model.psi(mu)
    u = g.ifft(np.stack([model.ik1 * psi, model.ik2 * psi]))
    adv = float(np.sqrt((u**2).sum(axis=0)).max()) * dt / dx
    noise = 0.0
    for x in model.xi:
        v = g.ifft(np.stack([model.ik1 * x, model.ik2 * x]))
        noise += float(np.sqrt((v**2).sum(axis=0)).max()) * np.sqrt(dt) / dx
    return {"advective": adv, "noise": noise}


# -- configured runs -------------------------------------------------------------

def modes_field(grid: PeriodicGrid, modes: Sequence[dict]) -> SpectralScalarField:
    """Sum of ``amplitude * sin(k.x + phase)`` (``kind="cos"`` for cosines)."""
    total = np.zeros(grid.shape)
    for m in modes:
        k = m["k"]
        if len(k) != grid.dims:
            raise ValueError(f"mode {k} does not match the grid dimension")
        arg = sum(2 * np.pi / L * kk * x for kk, L, x in zip(k, grid.length, grid.mesh))
        arg = arg + m.get("phase", 0.0)
        total += m.get("amplitude", 1.0) * (np.cos(arg) if m.get("kind", "sin") == "cos" else np.sin(arg))
    return SpectralScalarField(grid, total)


def basis_from_config(grid: PeriodicGrid, noise: dict | None) -> NoiseBasis:
    if not noise:
        return NoiseBasis([], mode=QG_STREAMFUNCTION, grid=grid)
    if "pod_basis" in noise:
        from .pod import read_basis, scale_modes
        pb = read_basis(noise["pod_basis"])
        if pb.grid != grid:
            raise ValueError("POD basis grid differs from the run grid")
        vb = scale_modes(pb)
        K = noise.get("K", vb.K)
        fields = [streamfunction_from_velocity(v) * noise.get("scale", 1.0) for v in vb.fields[:K]]
        return NoiseBasis(fields, vb.weights[:K], QG_STREAMFUNCTION, grid)
    fields = [modes_field(grid, [m]) for m in noise.get("modes", [])]
    K = noise.get("K", len(fields))
    fields = fields[:K]
    weights = [abs(m.get("amplitude", 1.0)) for m in noise.get("modes", [])][:K]
    return NoiseBasis(fields, weights, QG_STREAMFUNCTION, grid)


@dataclass
class RunResult:
    state: SQGState
    diagnostics: list[dict[str, float]]
    snapshots: list[tuple[float, np.ndarray]]
    path: WienerPath | None
    cfl: dict[str, float]


DIAGNOSTIC_COLUMNS = ["time", "energy", "C1", "C2", "C3", "C4", "mean_mu", "max_abs_Q"]


def diagnostics_row(state: SQGState) -> dict[str, float]:
    row = {"time": state.time, "energy": energy(state)}
    for n in range(1, 5):
        row[f"C{n}"] = casimir(state, n)
    row["mean_mu"] = state.mu.mean()
    row["max_abs_Q"] = float(np.abs(state.Q.values).max())
    return row


def run(config: dict, path: WienerPath | None = None) -> RunResult:
    """Fixed-step run described by a configuration dictionary.

    Recognised keys: ``grid`` (``n``, ``length``), ``params`` (``F``, ``beta``,
    ``f0``, ``filter``), ``dt``, ``steps``, ``scheme``, ``seed``, ``noise``,
    ``initial`` (``modes``), ``snapshot_every``, ``diagnostic_every``.
    A Brownian path may be passed in; otherwise it is sampled from ``seed``.
    """
    gcfg = config["grid"]
    grid = PeriodicGrid(tuple(gcfg["n"]), tuple(gcfg.get("length", ())))
    pc = dict(config.get("params", {}))
    filt = pc.pop("filter", None) or {}
    params = SQGParams(F=pc.get("F", 0.0), beta=pc.get("beta", 0.0), f0=pc.get("f0", 0.0),
                       nu=filt.get("nu", 0.0), order=filt.get("order", 4))
    scheme = config.get("scheme", "stratonovich")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    dt, steps = float(config["dt"]), int(config["steps"])
    basis = basis_from_config(grid, config.get("noise"))
    model = SQGModel(grid, params, basis)
    if path is None and model.K and scheme != "deterministic":
        path = sample_increments(int(config.get("seed", 0)), model.K, dt, max(steps, 1))
    mu0 = modes_field(grid, config.get("initial", {}).get("modes", []))
    mu = model.project(mu0.values)
    if params.F == 0:
        mu[(0,) * grid.dims] = 0.0
    snap_every = int(config.get("snapshot_every", 0))
    diag_every = int(config.get("diagnostic_every", 1))
    diags, snaps = [], []

    def emit(n, t, c):
        st = None
        if diag_every and n % diag_every == 0:
            st = _new_state(SQGState(mu0, t, params), c, 0.0)
            diags.append(diagnostics_row(st))
        if snap_every and n % snap_every == 0:
            snaps.append((t, grid.ifft(c)))

    emit(0, 0.0, mu)
    cfl = cfl_advisory(model, mu, dt)
    log.info("CFL advisory: advective %.3g, noise %.3g", cfl["advective"], cfl["noise"])
    with np.errstate(over="ignore", invalid="ignore"):
        mu = model.integrate(mu, path, dt, steps, scheme, callback=emit)
    final = SQGState(SpectralScalarField(grid, grid.ifft(mu), _coeffs=mu), steps * dt, params)
    return RunResult(final, diags, snaps, path, cfl)


def write_diagnostics(path, rows: list[dict[str, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DIAGNOSTIC_COLUMNS)
        for r in rows:
            w.writerow([repr(float(r[c])) for c in DIAGNOSTIC_COLUMNS])


def write_run_outputs(out_dir, result: RunResult) -> list[Path]:
    from .snapshot import write_components
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [out_dir / "diagnostics.csv"]
    write_diagnostics(written[0], result.diagnostics)
    grid = result.state.grid
    for i, (t, values) in enumerate(result.snapshots):
        written += write_components(out_dir / "snapshots", f"mu_{i:05d}", grid, [values],
                                    {"time": t, "grade": "scalar", "field": "mu"})
    return written
