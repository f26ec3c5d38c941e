import numpy as np
import pytest

from stochgfd import forms as fm
from stochgfd import transport as tr
from stochgfd.forms import DifferentialForm, VectorFieldOnGrid
from stochgfd.grid import PeriodicGrid, SpectralInterpolator, SpectralScalarField
from stochgfd.noise import NoiseBasis, sample_increments
from stochgfd.sqg import SQGModel, SQGParams


@pytest.fixture
def g2():
    return PeriodicGrid((32, 32))


@pytest.fixture(scope="module")
def g3():
    return PeriodicGrid((16, 16, 16))


def scalar(g, values):
    return DifferentialForm(fm.SCALAR, [values], g)


def abc(g, A=1.0, B=1.0, C=1.0):
    x, y, z = g.mesh
    return DifferentialForm(fm.ONE_FORM, [A * np.sin(z) + C * np.cos(y), B * np.sin(x) + A * np.cos(z),
                                          C * np.sin(y) + B * np.cos(x)], g)


def swirl(g, amp=0.3):
    x, y = g.mesh
    return VectorFieldOnGrid.from_streamfunction(SpectralScalarField(g, amp * np.sin(x) * np.sin(y)))


def test_flow_spec_validation(g2):
    x, y = g2.mesh
    with pytest.raises(ValueError):
        tr.FlowSpec(VectorFieldOnGrid(np.array([np.sin(x), 0 * y]), False, g2), incompressible=True)
    with pytest.raises(ValueError):
        tr.FlowSpec(swirl(g2), [swirl(PeriodicGrid((16, 16)))])
    with pytest.raises(ValueError):
        tr.FlowSpec(swirl(g2), interpretation="levy")
    fl = tr.FlowSpec(None, NoiseBasis([swirl(g2)]), incompressible=True)
    assert fl.K == 1 and fl.with_interpretation("ito").interpretation == "ito"


def test_zero_flow_is_identity(g2):
    rng = np.random.default_rng(0)
    q = fm.random_form(g2, fm.ONE_FORM, 5, rng)
    fl = tr.FlowSpec(grid=g2)
    traj = tr.advect_form(q, fl, None, T=0.1, dt=0.01)
    assert np.array_equal(traj.final.coeffs, q.coeffs * g2.dealias_mask)
    loop = tr.MaterialLoop.circle((1.0, 2.0), 0.5, 64)
    assert np.array_equal(tr.advect_loop(loop, fl, None, T=0.1, dt=0.01).loops[-1].points, loop.points)


def test_constant_noise_scalar_exact(g2):
    x, y = g2.mesh
    path = sample_increments(1, 1, 1e-2, 50)
    W = path.W()[-1, 0]
    for interp in ("stratonovich", "ito"):
        fl = tr.FlowSpec(None, [VectorFieldOnGrid.constant(g2, [1.0, 0.0])], interp, grid=g2)
        q = tr.advect_form(scalar(g2, np.sin(x)), fl, path).final
        assert np.abs(q.components[0].values - np.sin(x + W)).max() <= 1e-10
        loop = tr.MaterialLoop.circle((3.0, 3.0), 1.0, 32)
        moved = tr.advect_loop(loop, fl, path).loops[-1]
        assert np.abs(moved.points - (loop.points - [W, 0.0])).max() <= 1e-10


def test_rigid_translation_of_loop(g2):
    fl = tr.FlowSpec(VectorFieldOnGrid.constant(g2, [0.5, -0.25]), grid=g2)
    loop = tr.MaterialLoop.circle((3.0, 3.0), 1.0, 32)
    moved = tr.advect_loop(loop, fl, None, T=1.0, dt=0.1).loops[-1]
    assert np.abs(moved.points - (loop.points + [0.5, -0.25])).max() <= 1e-12


def test_scalar_follows_characteristics():
    g = PeriodicGrid((64, 64))
    x, y = g.mesh
    u = swirl(g, 0.5)
    q0 = scalar(g, np.cos(x) + 0.5 * np.sin(2 * y))
    fl = tr.FlowSpec(u, incompressible=True)
    T, dt = 0.5, 2.5e-3
    q = tr.advect_form(q0, fl, None, T=T, dt=dt).final
    pts0 = np.random.default_rng(3).uniform(0, 2 * np.pi, (40, 2))
    pts = pts0.copy()
    ps = tr.PointStepper(fl)
    for _ in range(int(round(T / dt))):
        pts = ps.step(pts, np.zeros(0), dt)
    carried = np.cos(pts0[:, 0]) + 0.5 * np.sin(2 * pts0[:, 1])
    assert np.abs(SpectralInterpolator(g, q.coeffs)(pts)[0] - carried).max() < 1e-5


def test_density_mass_is_conserved(g2):
    rng = np.random.default_rng(4)
    D = fm.random_form(g2, fm.DENSITY, 5, rng)
    xi = fm.random_vector_field(g2, 3, rng, divergence_free=True)
    path = sample_increments(2, 1, 1e-3, 40)
    for interp in ("stratonovich", "ito", "ito_uncorrected"):
        fl = tr.FlowSpec(swirl(g2), [xi * 0.3], interp, True)
        out = tr.advect_form(D, fl, path).final
        assert abs(out.coeffs[0].flat[0] - D.coeffs[0].flat[0]) <= 1e-12 * np.abs(D.components[0].values).max()
        assert out.grade == fm.DENSITY


def test_circulation_quadrature(g2):
    x, y = g2.mesh
    loop = tr.MaterialLoop.circle((3.0, 2.5), 0.8, 128)
    grad = fm.exterior_derivative(scalar(g2, np.sin(x + 2 * y)))
    assert abs(tr.circulation(loop, grad)) <= 1e-8
    # v = (-sin y, sin x) has curl cos x + cos y; flux through the disk by polar quadrature
    v = DifferentialForm(fm.ONE_FORM, [-np.sin(y), np.sin(x)], g2)
    r, w = np.polynomial.legendre.leggauss(40)
    r, w = 0.4 * (r + 1), 0.4 * w
    t = 2 * np.pi * np.arange(128) / 128
    R, Th = np.meshgrid(r, t, indexing="ij")
    X, Y = 3.0 + R * np.cos(Th), 2.5 + R * np.sin(Th)
    flux = np.sum((np.cos(X) + np.cos(Y)) * R * w[:, None]) * 2 * np.pi / 128
    assert tr.circulation(loop, v) == pytest.approx(flux, rel=1e-10)
    one = DifferentialForm(fm.DENSITY, [np.ones(g2.shape)], g2)
    assert tr.circulation(loop, v, one) == pytest.approx(tr.circulation(loop, v), rel=1e-14)


def test_circulation_converges_in_vertex_count(g2):
    x, y = g2.mesh
    v = DifferentialForm(fm.ONE_FORM, [-np.sin(y), np.sin(x)], g2)
    exact = tr.circulation(tr.MaterialLoop.circle((3.0, 2.5), 0.8, 512), v)
    errs = [abs(tr.circulation(tr.MaterialLoop.circle((3.0, 2.5), 0.8, P), v) - exact) for P in (16, 32)]
    assert errs[1] <= errs[0] / 4 or errs[1] < 1e-12


def test_resampling_preserves_circulation(g2):
    x, y = g2.mesh
    v = DifferentialForm(fm.ONE_FORM, [-np.sin(y) + 0.3 * np.cos(x + y), np.sin(x)], g2)
    s = 2 * np.pi * np.arange(64) / 64
    # nonuniform parametrisation of an ellipse: some segments are long
    phi = s + 0.6 * np.sin(s)
    loop = tr.MaterialLoop(np.stack([3 + 1.2 * np.cos(phi), 3 + 0.6 * np.sin(phi)], axis=1),
                           reference_spacing=0.05)
    assert loop.needs_resampling()
    new = loop.resample()
    assert not new.needs_resampling()
    assert new.P > loop.P
    assert abs(tr.circulation(new, v) - tr.circulation(loop, v)) <= 1e-9


def test_kelvin_deterministic_and_constant_noise(g2):
    x, y = g2.mesh
    v0 = DifferentialForm(fm.ONE_FORM, [np.sin(y) + 0.2 * np.cos(2 * y), -np.sin(x)], g2)
    loop = tr.MaterialLoop.circle((np.pi, np.pi), 0.8, 128)
    fl = tr.FlowSpec(swirl(g2), incompressible=True)
    rep = tr.kelvin_check(v0, fl, None, loop, T=0.2, dt=1e-3, record_every=10)
    assert rep.relative_drift <= 1e-6
    path = sample_increments(5, 2, 1e-2, 30)
    const = [VectorFieldOnGrid.constant(g2, [0.4, 0.1]), VectorFieldOnGrid.constant(g2, [-0.2, 0.3])]
    for interp in ("stratonovich", "ito"):
        fl = tr.FlowSpec(VectorFieldOnGrid.constant(g2, [0.1, 0.0]), const, interp, True)
        rep = tr.kelvin_check(v0, fl, path, loop)
        assert rep.relative_drift <= 1e-8


def test_kelvin_ito_predictions_are_recorded(g2):
    x, y = g2.mesh
    v0 = DifferentialForm(fm.ONE_FORM, [np.sin(y), -np.sin(x) + 0.2 * np.sin(x + y)], g2)
    loop = tr.MaterialLoop.circle((np.pi, np.pi), 0.8, 64)
    fl = tr.FlowSpec(None, [swirl(g2, 0.5)], "ito", True)
    rep = tr.kelvin_check(v0, fl, sample_increments(1, 1, 1e-3, 20), loop, record_every=5)
    assert rep.times.tolist() == pytest.approx([0, 5e-3, 1e-2, 1.5e-2, 2e-2])
    assert rep.double_lie_term.shape == rep.circulation.shape
    assert rep.covariation_term[-1] != 0


def test_helicity_examples(g3):
    x, y, z = g3.mesh
    grad = fm.exterior_derivative(scalar(g3, np.sin(x) * np.cos(y + z)))
    u = VectorFieldOnGrid(np.array([0.3 * np.cos(y + z), 0.2 * np.sin(x - z), 0.1 * np.cos(x + y)]), True, g3)
    rep = tr.helicity_check(grad, tr.FlowSpec(u, incompressible=True), None, T=0.05, dt=0.01)
    assert np.abs(rep.helicity).max() < 1e-12
    path = sample_increments(2, 1, 1e-2, 10)
    fl = tr.FlowSpec(VectorFieldOnGrid.constant(g3, [0.1, 0.2, 0.0]),
                     [VectorFieldOnGrid.constant(g3, [0.0, 0.3, 0.4])], "stratonovich", True)
    rep = tr.helicity_check(abc(g3), fl, path)
    assert rep.relative_drift <= 1e-8
    with pytest.raises(fm.GradeError):
        tr.helicity_check(DifferentialForm(fm.ONE_FORM, [x[:, :, 0] * 0, x[:, :, 0] * 0],
                                           PeriodicGrid((16, 16))), fl, path)


def test_helicity_smooth_drift_conserved():
    g = PeriodicGrid((64, 64, 64))
    x, y, z = g.mesh
    u = VectorFieldOnGrid(np.array([0.3 * np.cos(y + z), 0.2 * np.sin(x - z), 0.1 * np.cos(x + y)]), True, g)
    rep = tr.helicity_check(abc(g), tr.FlowSpec(u, incompressible=True), None, T=0.05, dt=0.01)
    assert rep.relative_drift <= 1e-5


def test_vorticity_flux(g3):
    x, y, z = g3.mesh
    path = sample_increments(3, 1, 1e-2, 10)
    fl = tr.FlowSpec(None, [VectorFieldOnGrid.constant(g3, [0.2, 0.1, 0.3])], "stratonovich", True, grid=g3)
    closed = fm.exterior_derivative(scalar(g3, np.cos(x + y) * np.sin(z)))
    rep = tr.vorticity_flux_check(closed, fl, path, (3.0, 3.0, 3.0), 0.7)
    assert np.abs(rep.flux).max() <= 1e-10
    rep = tr.vorticity_flux_check(abc(g3), fl, path, (3.0, 3.0, 3.0), 0.7, normal=(1, 1, 0))
    assert rep.relative_drift <= 1e-8
    assert rep.flux[0] == pytest.approx(rep.initial_surface_flux, rel=1e-8)


def test_tracer_exactness_constant_noise(g2):
    path = sample_increments(8, 2, 1e-2, 25)
    const = [VectorFieldOnGrid.constant(g2, [0.4, 0.1]), VectorFieldOnGrid.constant(g2, [-0.2, 0.3])]
    start = tr.TracerEnsemble.lattice(g2, 3).positions
    shift = -(path.W()[-1] @ np.array([[0.4, 0.1], [-0.2, 0.3]]))
    for interp in ("stratonovich", "ito"):
        ps = tr.PointStepper(tr.FlowSpec(None, const, interp, True))
        x = start.copy()
        for n in range(path.N):
            x = ps.step(x, path.increments[n], path.dt)
        assert np.abs(x - (start + shift)).max() <= 1e-10


def test_pv_paths_examples(g2):
    x, y = g2.mesh
    tracers = tr.TracerEnsemble.lattice(g2, 4)
    basis = NoiseBasis([SpectralScalarField(g2, 0.2 * np.sin(x + 2 * y))], mode="qg_streamfunction")
    model = SQGModel(g2, SQGParams(f0=1.0), basis)
    path = sample_increments(0, 1, 1e-3, 20)
    rep = tr.pv_along_paths(model, np.zeros(g2.spectral_shape, complex), tracers, path, 1e-3, 20, "ito")
    assert rep.max_abs_dQ == 0
    det = SQGModel(g2, SQGParams(F=0.5, beta=0.3))
    mu0 = det.project(np.sin(x) * np.cos(y) + 0.5 * np.cos(x + 2 * y))
    rep = tr.pv_along_paths(det, mu0, tracers, None, 2e-3, 100, "stratonovich")
    assert rep.max_abs_dQ <= 1e-6
    with pytest.raises(ValueError):
        tr.pv_along_paths(model, mu0, tracers, path, 1e-3, 20, "levy")
    assert np.all(tracers.wrapped(g2) < 2 * np.pi)


def test_pv_paths_predictions_shapes(g2):
    x, y = g2.mesh
    basis = NoiseBasis([SpectralScalarField(g2, 0.2 * np.sin(x + 2 * y) + 0.1 * np.cos(x - y))],
                       mode="qg_streamfunction")
    model = SQGModel(g2, SQGParams(beta=0.5), basis)
    mu0 = model.project(np.sin(x) * np.cos(y))
    rep = tr.pv_along_paths(model, mu0, tr.TracerEnsemble.lattice(g2, 2), sample_increments(0, 1, 1e-3, 5),
                            1e-3, 5, "ito", predictions=True)
    assert rep.lie_laplacian_rate.shape == (5, 4) and rep.covariation_rate.shape == (5, 4)
    assert rep.Q.shape == (6, 4)
