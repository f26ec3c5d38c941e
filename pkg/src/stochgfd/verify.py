"""
Verification suites run at pinned desk-scale settings.

Every suite returns a list of :class:`Check` records.  Checks of kind
``criterion`` decide pass or fail; checks of kind ``diagnostic`` report
related quantities (for example the Ito corrections that the pathwise
analysis predicts) without affecting the outcome.  Tolerances come from the
package file ``tolerances.json`` and can be overridden per run.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass
from importlib.resources import files
from pathlib import Path
from typing import Callable

import numpy as np

from . import forms as fm
from . import transport as tr
from .forms import DifferentialForm, VectorFieldOnGrid
from .grid import PeriodicGrid, SpectralScalarField
from .noise import NoiseBasis, ensemble_seed, estimate_covariation, sample_increments
from .pod import SnapshotSet, compute_pod, correlation_residual
from .sqg import (SQGModel, SQGParams, SQGState, basis_from_config, casimir, measure_wave_frequency, modes_field,
                  rossby_frequency)

log = logging.getLogger(__name__)

CRITERION = "criterion"
DIAGNOSTIC = "diagnostic"


@dataclass
class Check:
    suite: str
    name: str
    property: str
    value: float
    tolerance: float
    relation: str        # "<=" or ">="
    kind: str = CRITERION
    detail: str = ""

    @property
    def passed(self) -> bool:
        if not np.isfinite(self.value):
            return False
        return self.value <= self.tolerance if self.relation == "<=" else self.value >= self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        if self.kind == DIAGNOSTIC:
            status = "info " + status.lower()
        return (f"{status:9s} {self.suite}/{self.name}: {self.property}: "
                f"{self.value:.4g} {self.relation} {self.tolerance:.4g}" + (f" ({self.detail})" if self.detail else ""))


def load_tolerances(overrides: dict | None = None) -> dict:
    """Packaged tolerances, updated suite by suite with ``overrides``."""
    tol = json.loads(files("stochgfd").joinpath("tolerances.json").read_text())
    for suite, values in (overrides or {}).items():
        if suite not in tol or not isinstance(tol[suite], dict):
            raise KeyError(f"unknown tolerance suite {suite!r}")
        for key, v in values.items():
            if key not in tol[suite]:
                raise KeyError(f"unknown tolerance {suite}.{key}")
            tol[suite][key] = float(v)
    return tol


def _slope(dts, errs) -> float:
    errs = np.asarray(errs, dtype=float)
    if np.any(errs <= 0):
        return float("nan")
    return float(np.polyfit(np.log(dts), np.log(errs), 1)[0])


# -- operators -----------------------------------------------------------------

OPERATOR_GRIDS = {2: (64, 64), 3: (32, 32, 32)}
OPERATOR_KMAX = {2: 6, 3: 3}
OPERATOR_SAMPLES = 50
OPERATOR_GRADES = [fm.SCALAR, fm.ONE_FORM, fm.TWO_FORM, fm.DENSITY]


def operator_residuals(dims: int, samples: int = OPERATOR_SAMPLES, seed: int = 0) -> dict[str, float]:
    """Largest relative residual of each operator identity over random inputs."""
    g = PeriodicGrid(OPERATOR_GRIDS[dims])
    k = OPERATOR_KMAX[dims]
    rng = np.random.default_rng([seed, dims])
    worst = dict.fromkeys(["d_squared", "cartan", "adjoint", "diamond", "pairing_identity", "lie_laplacian_d"], 0.0)

    def rel(a, b):
        scale = b.norm()
        return (a - b).norm() / scale if scale else (a - b).norm()

    for i in range(samples):
        grade = OPERATOR_GRADES[i % len(OPERATOR_GRADES)]
        X = fm.random_vector_field(g, k, rng, divergence_free=bool(i % 2))
        q = fm.random_form(g, grade, k, rng)
        p = fm.random_form(g, fm.dual_grade(grade, dims), k, rng)
        Lq = fm.lie_derivative(X, q, "closed")
        worst["cartan"] = max(worst["cartan"], rel(fm.lie_derivative(X, q, "cartan"), Lq))
        scale = p.norm() * Lq.norm()
        ref = fm.pair(p, Lq)
        worst["adjoint"] = max(worst["adjoint"], abs(fm.pair(fm.lie_derivative_transpose(X, p), q) - ref) / scale)
        worst["diamond"] = max(worst["diamond"], abs(fm.pair_vector(fm.diamond(p, q), X) + ref) / scale)
        worst["pairing_identity"] = max(worst["pairing_identity"],
                                        fm.pairing_identity_residual(p, q, X, n_probes=3, rng=rng))
        if grade in (fm.SCALAR, fm.ONE_FORM) or (grade == fm.TWO_FORM and dims == 3):
            dq = fm.exterior_derivative(q)
            if not fm.is_top(dq.grade, dims):
                ddq = fm.exterior_derivative(dq)
                worst["d_squared"] = max(worst["d_squared"], ddq.norm() / dq.norm())
            basis = [fm.random_vector_field(g, k // 2 + 1, rng) for _ in range(2)]
            q_low = fm.random_form(g, grade, k // 2 + 1, rng)
            lhs = fm.exterior_derivative(fm.lie_laplacian(basis, q_low))
            rhs = fm.lie_laplacian(basis, fm.exterior_derivative(q_low))
            worst["lie_laplacian_d"] = max(worst["lie_laplacian_d"], rel(lhs, rhs))
    return worst


def metric_laplacian_residual(dims: int) -> float:
    """``||Delta_Lie f - Delta f|| / ||Delta f||`` for the constant unit basis."""
    g = PeriodicGrid(OPERATOR_GRIDS[dims])
    basis = [VectorFieldOnGrid.constant(g, np.eye(dims)[j]) for j in range(dims)]
    f = fm.random_form(g, fm.SCALAR, 8, np.random.default_rng([1, dims]))
    lap = DifferentialForm.from_coeffs(g, fm.SCALAR, -g.k2 * f.coeffs)
    return (fm.lie_laplacian(basis, f) - lap).norm() / lap.norm()


def check_operator_algebra(tol: dict) -> list[Check]:
    t = tol["operators"]
    out = []
    labels = {
        "d_squared": "d o d = 0",
        "cartan": "Cartan formula agrees with closed-form Lie derivatives",
        "adjoint": "transpose Lie derivative is the pairing adjoint",
        "diamond": "diamond is dual to the Lie derivative",
        "pairing_identity": "momentum-map transport identity",
        "lie_laplacian_d": "Lie-Laplacian commutes with d",
    }
    for dims in (2, 3):
        res = operator_residuals(dims)
        for key, label in labels.items():
            out.append(Check("operators", f"{key}_{dims}d", label, res[key], t["identity_residual"], "<=",
                             detail=f"{OPERATOR_SAMPLES} random inputs on {OPERATOR_GRIDS[dims]}"))
    return out


def check_metric_laplacian(tol: dict) -> list[Check]:
    return [Check("operators", f"metric_laplacian_{dims}d", "Lie-Laplacian of unit constant basis is the Laplacian",
                  metric_laplacian_residual(dims), tol["operators"]["metric_laplacian_residual"], "<=")
            for dims in (2, 3)]


# -- SQG: Stratonovich and Ito -------------------------------------------------

SQG_INITIAL = [{"k": [1, 0], "amplitude": 1.0}, {"k": [0, 1], "amplitude": 1.0, "kind": "cos"},
               {"k": [1, 1], "amplitude": 0.6}]
SQG_NOISE = {"modes": [{"k": [2, 1], "amplitude": 0.15}, {"k": [1, -2], "amplitude": 0.15, "kind": "cos"}]}
STRONG_DTS = [4e-4, 2e-4, 1e-4, 5e-5]
STRONG_T = 0.1
STRONG_SEED = 0


def sqg_setup(n: int = 128, params: SQGParams | None = None) -> tuple[SQGModel, np.ndarray]:
    g = PeriodicGrid((n, n))
    model = SQGModel(g, params or SQGParams(), basis_from_config(g, SQG_NOISE))
    return model, model.project(modes_field(g, SQG_INITIAL).values)


def strong_errors(n: int = 128, seed: int = STRONG_SEED, dts=STRONG_DTS, T: float = STRONG_T) -> dict[str, list[float]]:
    """Relative L2 gap at ``T`` between Heun and each Euler-Maruyama variant on one path."""
    model, mu0 = sqg_setup(n)
    g = model.grid
    norm = lambda c: np.sqrt(np.sum(g._mode_weight * np.abs(c) ** 2))
    fine = sample_increments(seed, model.K, dts[-1], int(round(T / dts[-1])))
    out = {"ito": [], "ito_uncorrected": []}
    for dt in dts:
        path = fine.coarsen(int(round(dt / dts[-1])))
        heun = model.integrate(mu0, path, dt, path.N, "stratonovich")
        for scheme in out:
            em = model.integrate(mu0, path, dt, path.N, scheme)
            out[scheme].append(float(norm(heun - em) / norm(heun)))
    return out


def rossby_errors(F_values=(0.0, 1.0), k=(1, 1), beta: float = 1.0, n: int = 64) -> dict[float, float]:
    g = PeriodicGrid((n, n))
    out = {}
    for F in F_values:
        p = SQGParams(F=F, beta=beta)
        expected = rossby_frequency(p)(*k)
        out[F] = abs(measure_wave_frequency(g, p, k) / expected - 1)
    return out


def covariation_pin() -> dict:
    return json.loads(files("stochgfd").joinpath("data/covariation_pin.json").read_text())


def covariation_check() -> tuple[float, float, bool]:
    """Largest deviation from ``T I``, its bound factor ``T sqrt(2/N)``, and the byte-exact pin result."""
    pin = covariation_pin()
    path = sample_increments(pin["seed"], pin["K"], pin["dt"], pin["N"])
    C = estimate_covariation(path)
    digest = hashlib.sha256(np.ascontiguousarray(path.increments, dtype="<f8").tobytes()).hexdigest()
    stored = np.array([[float.fromhex(v) for v in row] for row in pin["covariation_hex"]])
    exact = digest == pin["increments_sha256"] and np.array_equal(C, stored)
    return float(np.abs(C - path.T * np.eye(path.K)).max()), path.T * np.sqrt(2 / path.N), exact


def check_strat_ito_equivalence(tol: dict) -> list[Check]:
    t = tol["strat-ito"]
    errs = strong_errors()
    det = f"128^2, K=2, T={STRONG_T}, seed {STRONG_SEED}, dt {STRONG_DTS}"
    return [
        Check("strat-ito", "corrected_slope", "Heun and drift-corrected Euler-Maruyama converge pathwise",
              _slope(STRONG_DTS, errs["ito"]), t["corrected_slope_min"], ">=", detail=det),
        Check("strat-ito", "uncorrected_slope", "Euler-Maruyama without the double-bracket drift does not converge",
              _slope(STRONG_DTS, errs["ito_uncorrected"]), t["uncorrected_slope_max"], "<=", detail=det),
    ]


def check_rossby_dispersion(tol: dict) -> list[Check]:
    return [Check("strat-ito", f"rossby_F{F:g}", "Rossby wave frequency matches the dispersion relation",
                  e, tol["strat-ito"]["rossby_relative_error"], "<=", detail="k=(1,1), beta=1, amplitude 1e-3")
            for F, e in rossby_errors().items()]


def check_brownian_covariation(tol: dict) -> list[Check]:
    dev, unit, exact = covariation_check()
    return [
        Check("strat-ito", "covariation", "Brownian quadratic covariation is T times identity (in units of T sqrt(2/N))",
              dev / unit, tol["strat-ito"]["covariation_sigmas"], "<=", detail="K=3, N=1e5"),
        Check("strat-ito", "covariation_pin", "seeded increments and covariation match stored bytes",
              0.0 if exact else 1.0, 0.0, "<="),
    ]


# -- Casimirs ------------------------------------------------------------------

CASIMIR_DTS = [4e-4, 2e-4, 1e-4]
CASIMIR_T = 0.2
CASIMIR_SEEDS = [0, 1, 2]


def casimir_drifts(seed: int, n: int = 128, dts=CASIMIR_DTS, T: float = CASIMIR_T) -> dict[int, list[float]]:
    """Sup-in-time absolute drift of ``C_{Q^2}`` and ``C_{Q^3}`` for each dt, plus initial values (key 0)."""
    model, mu0 = sqg_setup(n)
    g = model.grid

    def C(c, power):
        return casimir(SQGState(SpectralScalarField.from_coefficients(g, c), 0.0, model.params), power)

    c0 = {2: C(mu0, 2), 3: C(mu0, 3)}
    out = {0: [c0[2], c0[3]], 2: [], 3: []}
    fine = sample_increments(seed, model.K, dts[-1], int(round(T / dts[-1])))
    for dt in dts:
        path = fine.coarsen(int(round(dt / dts[-1])))
        worst = {2: 0.0, 3: 0.0}

        def record(n_, t_, c):
            for p in (2, 3):
                worst[p] = max(worst[p], abs(C(c, p) - c0[p]))

        model.integrate(mu0, path, dt, path.N, "stratonovich", callback=record)
        out[2].append(worst[2])
        out[3].append(worst[3])
    return out


def check_casimir_drift(tol: dict) -> list[Check]:
    t = tol["casimirs"]
    out = []
    for seed in CASIMIR_SEEDS:
        d = casimir_drifts(seed)
        for i, p in enumerate((2, 3)):
            rel = np.array(d[p]) / abs(d[0][i])
            ratio = 2.0 ** -_slope(CASIMIR_DTS, rel)
            det = f"seed {seed}, 128^2, T={CASIMIR_T}, dt {CASIMIR_DTS}, drifts {', '.join(f'{v:.3g}' for v in rel)}"
            out.append(Check("casimirs", f"C{p}_ratio_seed{seed}", f"relative drift of C_Q{p} halves with dt",
                             ratio, t["halving_ratio_max"], "<=", detail=det))
            out.append(Check("casimirs", f"C{p}_drift_seed{seed}", f"absolute drift of C_Q{p} at the finest dt",
                             d[p][-1], t["absolute_drift_max"], "<="))
    return out


# -- Kelvin circulation --------------------------------------------------------

KELVIN_T = 0.2
KELVIN_DTS = [8e-4, 4e-4, 2e-4, 1e-4]
KELVIN_SEEDS = list(range(8))
KELVIN_REFERENCE = {"n": 128, "dt": 1e-4, "seed": 0}
KELVIN_LADDER_N = 32


def kelvin_setup(n: int) -> tuple[tr.FlowSpec, DifferentialForm, tr.MaterialLoop]:
    g = PeriodicGrid((n, n))
    x, y = g.mesh
    u = VectorFieldOnGrid.from_streamfunction(SpectralScalarField(g, 0.3 * np.cos(x + y)))
    xi = VectorFieldOnGrid.from_streamfunction(SpectralScalarField(g, 0.5 * np.sin(x) * np.sin(y)))
    v0 = DifferentialForm(fm.ONE_FORM, [np.sin(y) + 0.2 * np.cos(2 * y), -np.sin(x) + 0.2 * np.sin(x + y)], g)
    loop = tr.MaterialLoop.circle((np.pi, np.pi), 0.8, 256)
    return tr.FlowSpec(u, [xi], tr.STRATONOVICH, True), v0, loop


def kelvin_run(n: int, dt: float, seed: int, interpretation: str, T: float = KELVIN_T,
               fine_dt: float | None = None) -> tr.KelvinReport:
    flow, v0, loop = kelvin_setup(n)
    fine_dt = fine_dt or dt
    fine = sample_increments(seed, 1, fine_dt, int(round(T / fine_dt)))
    path = fine.coarsen(int(round(dt / fine_dt)))
    return tr.kelvin_check(v0, flow.with_interpretation(interpretation), path, loop,
                           record_every=max(1, int(round(1e-3 / dt))))


def check_kelvin(tol: dict) -> list[Check]:
    t = tol["kelvin"]
    ref = KELVIN_REFERENCE
    out = []
    r = kelvin_run(ref["n"], ref["dt"], ref["seed"], tr.STRATONOVICH)
    out.append(Check("kelvin", "stratonovich_drift", "circulation conserved on co-moving loops (Stratonovich)",
                     r.relative_drift, t["stratonovich_drift_max"], "<=", detail="128^2, dt=1e-4, P=256"))
    # the ladder runs on a coarse grid: drifts agree with 64^2 to five digits
    drifts = np.array([[kelvin_run(KELVIN_LADDER_N, dt, s, tr.STRATONOVICH, fine_dt=KELVIN_DTS[-1]).relative_drift
                        for dt in KELVIN_DTS] for s in KELVIN_SEEDS])
    rms = np.sqrt(np.mean(drifts**2, axis=0))
    singles = [_slope(KELVIN_DTS, d) for d in drifts]
    out.append(Check("kelvin", "stratonovich_slope", "circulation drift decreases at first order in dt",
                     _slope(KELVIN_DTS, rms), t["stratonovich_slope_min"], ">=",
                     detail=f"RMS over seeds {KELVIN_SEEDS[0]}..{KELVIN_SEEDS[-1]}; single-path slopes "
                            f"{min(singles):.2f}..{max(singles):.2f}"))
    ito = [kelvin_run(KELVIN_LADDER_N, dt, ref["seed"], tr.ITO, fine_dt=KELVIN_DTS[-1]) for dt in KELVIN_DTS]
    changes = [abs(rep.change[-1]) for rep in ito]
    out.append(Check("kelvin", "ito_nonconvergence", "Ito circulation change does not vanish under refinement",
                     _slope(KELVIN_DTS, changes), t["ito_nonconvergence_slope_max"], "<=",
                     detail=f"|change| {', '.join(f'{c:.4g}' for c in changes)}"))
    rep = kelvin_run(ref["n"], ref["dt"], ref["seed"], tr.ITO)
    change, dbl, cov = rep.change[-1], rep.double_lie_term[-1], rep.covariation_term[-1]
    out.append(Check("kelvin", "ito_double_lie_match",
                     "Ito circulation change equals the loop integral of 1/2 sum_j L_xi_j L_xi_j v",
                     abs(change - dbl) / abs(dbl), t["ito_match_relative"], "<=",
                     detail=f"change {change:.5g}, prediction {dbl:.5g}"))
    out.append(Check("kelvin", "ito_point_drift_match",
                     "Ito circulation change equals the loop integral of L_w v, w = -1/2 sum_j (xi_j . grad) xi_j",
                     abs(change - cov) / abs(cov), t["ito_match_relative"], "<=", DIAGNOSTIC,
                     detail=f"change {change:.5g}, prediction {cov:.5g}"))
    return out


# -- helicity ------------------------------------------------------------------

HELICITY_T = 0.2
HELICITY_DTS = [2e-3, 1e-3, 5e-4]
HELICITY_SEED = 0


def helicity_setup(n: int = 32) -> tuple[tr.FlowSpec, DifferentialForm]:
    g = PeriodicGrid((n, n, n))
    x, y, z = g.mesh
    V = lambda a: VectorFieldOnGrid(np.array(a), True, g)
    u = V([0.5 * np.cos(y + z), 0.4 * np.sin(x - z), 0.3 * np.cos(x + y)])
    xis = [V([0.3 * np.sin(y) * np.cos(z), 0.3 * np.sin(z) * np.cos(x), 0.3 * np.sin(x) * np.cos(y)]),
           V([0.2 * np.cos(2 * y), 0.2 * np.sin(2 * z + x), 0.2 * np.cos(x + y)])]
    v0 = DifferentialForm(fm.ONE_FORM, [np.sin(z) + np.cos(y), np.sin(x) + np.cos(z), np.sin(y) + np.cos(x)], g)
    return tr.FlowSpec(u, xis, tr.STRATONOVICH, True), v0


def check_helicity(tol: dict) -> list[Check]:
    t = tol["helicity"]
    flow, v0 = helicity_setup()
    fine = sample_increments(HELICITY_SEED, flow.K, HELICITY_DTS[-1], int(round(HELICITY_T / HELICITY_DTS[-1])))
    paths = [fine.coarsen(int(round(dt / HELICITY_DTS[-1]))) for dt in HELICITY_DTS]
    drifts = [tr.helicity_check(v0, flow, p, sources=False).relative_drift for p in paths]
    out = [
        Check("helicity", "stratonovich_drift", "helicity conserved under Stratonovich transport",
              drifts[-1], t["stratonovich_drift_max"], "<=", detail=f"32^3 ABC, dt={HELICITY_DTS[-1]}"),
        Check("helicity", "stratonovich_refinement", "helicity drift shrinks at every dt halving (largest ratio)",
              max(b / a for a, b in zip(drifts, drifts[1:])), 1.0, "<=",
              detail=f"drifts {', '.join(f'{d:.3g}' for d in drifts)}"),
    ]
    g = v0.grid
    const = tr.FlowSpec(VectorFieldOnGrid.constant(g, [0.2, -0.1, 0.3]),
                        [VectorFieldOnGrid.constant(g, [0.3, 0.2, 0.0]), VectorFieldOnGrid.constant(g, [0.0, 0.1, 0.4])],
                        tr.STRATONOVICH, True)
    out.append(Check("helicity", "constant_noise", "constant noise translates rigidly and keeps helicity exactly",
                     tr.helicity_check(v0, const, paths[0]).relative_drift, t["constant_noise_drift_max"], "<="))
    rep = tr.helicity_check(v0, flow.with_interpretation(tr.ITO), paths[-1], sources=True)
    dev, src, quad = rep.change[-1], rep.lie_laplacian_source[-1], rep.realized_covariation[-1]
    out.append(Check("helicity", "ito_source_match",
                     "Ito helicity deviation equals the accumulated integral of v . Delta_Lie omega",
                     abs(dev - src) / abs(src), t["ito_match_relative"], "<=",
                     detail=f"deviation {dev:.5g}, integral {src:.5g}"))
    out.append(Check("helicity", "ito_decomposition",
                     "Ito deviation minus the realised quadratic covariation equals the integral",
                     abs(dev - quad - src) / abs(src), t["ito_match_relative"], "<=", DIAGNOSTIC,
                     detail=f"realised quadratic term {quad:.5g}"))
    unc = tr.helicity_check(v0, flow.with_interpretation(tr.ITO_UNCORRECTED), paths[-1], sources=True)
    out.append(Check("helicity", "ito_uncorrected_sign",
                     "uncorrected Ito deviation against minus the integral (single path)",
                     abs(unc.change[-1] + unc.lie_laplacian_source[-1]) / abs(unc.lie_laplacian_source[-1]),
                     t["ito_match_relative"], "<=", DIAGNOSTIC,
                     detail=f"deviation {unc.change[-1]:.5g}, integral {unc.lie_laplacian_source[-1]:.5g}"))
    flux = tr.vorticity_flux_check(v0, flow, paths[1], (np.pi, np.pi, np.pi), 0.8, normal=(1, 1, 1), P=128)
    out.append(Check("helicity", "vorticity_flux", "vorticity flux through a co-moving disk is conserved",
                     flux.relative_drift, t["flux_drift_max"], "<=", detail=f"dt={HELICITY_DTS[1]}"))
    return out


# -- potential vorticity along paths --------------------------------------------

PV_BASE_SEED = 1234
PV_REALIZATIONS = 32
PV_STRAT = {"T": 0.1, "dts": (1e-3, 5e-4)}
PV_ITO = {"T": 0.05, "dt": 5e-4}


def pv_setup(n: int = 64) -> tuple[SQGModel, np.ndarray, tr.TracerEnsemble]:
    g = PeriodicGrid((n, n))
    xi = [modes_field(g, [{"k": [2, 1], "amplitude": 0.15}, {"k": [1, -1], "amplitude": 0.1, "kind": "cos"}]),
          modes_field(g, [{"k": [1, -2], "amplitude": 0.15, "kind": "cos"}, {"k": [1, 1], "amplitude": 0.1}])]
    model = SQGModel(g, SQGParams(F=1.0, beta=0.5), NoiseBasis(xi, mode="qg_streamfunction"))
    mu0 = model.project(modes_field(g, SQG_INITIAL).values)
    return model, mu0, tr.TracerEnsemble.lattice(g, 8)


def pv_stratonovich_ratio(realizations: int = PV_REALIZATIONS) -> tuple[float, list[float]]:
    model, mu0, tracers = pv_setup()
    hi, lo = PV_STRAT["dts"]
    T = PV_STRAT["T"]
    maxima = []
    for r in range(realizations):
        fine = sample_increments(ensemble_seed(PV_BASE_SEED, r), model.K, lo, int(round(T / lo)))
        row = []
        for dt in (hi, lo):
            path = fine.coarsen(int(round(dt / lo)))
            row.append(tr.pv_along_paths(model, mu0, tracers, path, dt, path.N, tr.STRATONOVICH).max_abs_dQ)
        maxima.append(row)
    rms = np.sqrt(np.mean(np.square(maxima), axis=0))
    return float(rms[1] / rms[0]), rms.tolist()


def pv_ito_statistics(realizations: int = PV_REALIZATIONS) -> dict[str, np.ndarray]:
    """Per-tracer ensemble mean and standard error of observed minus predicted rates."""
    model, mu0, tracers = pv_setup()
    T, dt = PV_ITO["T"], PV_ITO["dt"]
    steps = int(round(T / dt))
    obs, lie, cov = [], [], []
    for r in range(realizations):
        path = sample_increments(ensemble_seed(PV_BASE_SEED, r), model.K, dt, steps)
        rep = tr.pv_along_paths(model, mu0, tracers, path, dt, steps, tr.ITO, predictions=True)
        obs.append(rep.dQ / T)
        lie.append(rep.lie_laplacian_rate.mean(axis=0))
        cov.append(rep.covariation_rate.mean(axis=0))
    obs, lie, cov = map(np.array, (obs, lie, cov))
    out = {}
    for name, pred in (("lie_laplacian", lie), ("point_drift", cov)):
        d = obs - pred
        out[name] = d.mean(axis=0)
        out[name + "_se"] = d.std(axis=0, ddof=1) / np.sqrt(realizations)
    return out


def check_pv_paths(tol: dict) -> list[Check]:
    t = tol["pv-paths"]
    ratio, rms = pv_stratonovich_ratio()
    out = [Check("pv-paths", "stratonovich_ratio", "PV drift along Stratonovich paths halves with dt",
                 ratio, t["stratonovich_ratio_max"], "<=",
                 detail=f"RMS of per-realisation max|dQ| {rms[0]:.3g} -> {rms[1]:.3g}, 64 tracers")]
    st = pv_ito_statistics()
    for name, kind, label in (("lie_laplacian", CRITERION, "Ito mean PV rate along paths equals 1/2 Delta_Lie Q"),
                              ("point_drift", DIAGNOSTIC, "Ito mean PV rate along paths equals w . grad Q")):
        z = np.abs(st[name]) / st[name + "_se"]
        out.append(Check("pv-paths", f"ito_{name}", label + " (largest |mean|/SE over tracers)",
                         float(z.max()), t["standard_errors"], "<=", kind,
                         detail=f"{int(np.sum(z <= t['standard_errors']))}/64 tracers within bound, "
                                f"{PV_REALIZATIONS} realisations"))
    return out


# -- POD -----------------------------------------------------------------------

def pod_synthetic(n: int = 32, M: int = 16) -> tuple[SnapshotSet, tuple[np.ndarray, np.ndarray]]:
    """Snapshots ``a_m phi_1 + b_m phi_2`` with mean-square coefficients 4 and 1."""
    g = PeriodicGrid((n, n))
    x, y = g.mesh
    p1 = np.array([np.sin(y), 0 * x]) / (np.pi * np.sqrt(2))
    p2 = np.array([np.cos(2 * y), np.sin(x)]) / (2 * np.pi)
    t = 2 * np.pi * np.arange(M) / M
    a, b = np.sqrt(8) * np.cos(t), np.sqrt(2) * np.sin(t)
    return SnapshotSet(g, a[:, None, None, None] * p1 + b[:, None, None, None] * p2), (p1, p2)


def check_pod_pipeline(tol: dict) -> list[Check]:
    t = tol["pod"]
    data, phis = pod_synthetic()
    g = data.grid
    basis = compute_pod(data, 2)
    norm = lambda u: np.sqrt(np.sum(u * u) / g.size * g.volume)
    mode_err = max(min(norm(m - p), norm(m + p)) for m, p in zip(basis.modes, phis))
    gram = np.array([[np.sum(a * b) / g.size * g.volume for b in basis.modes] for a in basis.modes])
    return [
        Check("pod", "eigenvalues", "POD energies 4 and 1 recovered", float(np.abs(basis.eigenvalues - [4, 1]).max()),
              t["eigenvalue_error"], "<="),
        Check("pod", "modes", "POD modes recovered up to sign", mode_err, t["mode_error"], "<="),
        Check("pod", "correlation_residual", "modes are eigenfunctions of the correlation operator (relative to lambda_1^2)",
              correlation_residual(data, basis), t["correlation_residual"], "<="),
        Check("pod", "orthonormality", "modes are L2-orthonormal", float(np.abs(gram - np.eye(2)).max()),
              t["orthonormality"], "<="),
    ]


# criteria in the order they are reported; each suite runs a subset
CRITERIA: dict[str, Callable[[dict], list[Check]]] = {
    "operator-algebra": check_operator_algebra,
    "metric-laplacian": check_metric_laplacian,
    "strat-ito-equivalence": check_strat_ito_equivalence,
    "casimir-drift": check_casimir_drift,
    "kelvin-circulation": check_kelvin,
    "helicity": check_helicity,
    "pv-along-paths": check_pv_paths,
    "pod-pipeline": check_pod_pipeline,
    "rossby-dispersion": check_rossby_dispersion,
    "brownian-covariation": check_brownian_covariation,
}

SUITES: dict[str, list[str]] = {
    "operators": ["operator-algebra", "metric-laplacian"],
    "strat-ito": ["strat-ito-equivalence", "rossby-dispersion", "brownian-covariation"],
    "kelvin": ["kelvin-circulation"],
    "helicity": ["helicity"],
    "pv-paths": ["pv-along-paths"],
    "casimirs": ["casimir-drift"],
    "pod": ["pod-pipeline"],
}


def run_criterion(name: str, overrides: dict | None = None) -> list[Check]:
    return CRITERIA[name](load_tolerances(overrides))


def run_suite(name: str, overrides: dict | None = None) -> list[Check]:
    """Run one suite (or ``all``) and return its checks."""
    if name != "all" and name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(list(SUITES) + ['all'])}")
    tol = load_tolerances(overrides)
    names = list(SUITES) if name == "all" else [name]
    checks = []
    for n in names:
        for crit in SUITES[n]:
            start = time.perf_counter()
            checks += CRITERIA[crit](copy.deepcopy(tol))
            log.info("%s finished in %.1f s", crit, time.perf_counter() - start)
    return checks


def suite_passed(checks: list[Check]) -> bool:
    return all(c.passed for c in checks if c.kind == CRITERION)


def write_checks(path, checks: list[Check]) -> None:
    fields = ["suite", "name", "kind", "property", "value", "relation", "tolerance", "passed", "detail"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for c in checks:
            row = asdict(c)
            row["value"] = repr(float(c.value))
            row["tolerance"] = repr(float(c.tolerance))
            row["passed"] = c.passed
            w.writerow({k: row[k] for k in fields})


def write_summary(path, checks: list[Check]) -> None:
    summary = {
        "passed": suite_passed(checks),
        "failures": [{"check": f"{c.suite}/{c.name}", "property": c.property, "value": c.value,
                      "tolerance": c.tolerance, "relation": c.relation}
                     for c in checks if c.kind == CRITERION and not c.passed],
        "checks": len(checks),
    }
    Path(path).write_text(json.dumps(summary, indent=2) + "\n")
