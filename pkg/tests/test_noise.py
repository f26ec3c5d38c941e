import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochgfd.forms import VectorFieldOnGrid
from stochgfd.grid import PeriodicGrid, SpectralScalarField
from stochgfd.noise import (
    NoiseBasis,
    WienerPath,
    ensemble_seed,
    estimate_covariation,
    qg_velocity_fields,
    read_path_csv,
    sample_increments,
    validate_basis,
    write_path_csv,
)


def test_rejects_bad_requests():
    with pytest.raises(ValueError):
        sample_increments(0, 1, 1e-3, 0)
    with pytest.raises(ValueError):
        sample_increments(0, 1, 0.0, 10)
    with pytest.raises(ValueError):
        sample_increments(0, 0, 1e-3, 10)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(1, 4), st.integers(1, 50))
def test_deterministic_and_read_only(seed, K, N):
    a = sample_increments(seed, K, 0.01, N)
    b = sample_increments(seed, K, 0.01, N)
    assert a.increments.tobytes() == b.increments.tobytes()
    assert a.increments.shape == (N, K)
    with pytest.raises(ValueError):
        a.increments[0, 0] = 1.0


def test_prefix_stability_and_ensemble_seeds():
    # a longer path extends a shorter one with the same key
    short = sample_increments(7, 2, 1e-2, 10).increments
    long = sample_increments(7, 2, 1e-2, 30).increments
    assert np.array_equal(short, long[:10])
    assert ensemble_seed(12, 5) == 12 ^ 5
    assert not np.array_equal(sample_increments(ensemble_seed(12, 0), 1, 1, 5).increments,
                              sample_increments(ensemble_seed(12, 1), 1, 1, 5).increments)


def test_sample_variance_within_chi_square_bound():
    dt, N = 1e-3, 10**6
    inc = sample_increments(3, 1, dt, N).increments[:, 0]
    # std of the sample variance is dt sqrt(2/N) ~ 1.4e-3 dt; 1% is ~7 sigma
    assert abs(inc.var() / dt - 1) < 0.01
    assert abs(inc[:10**4].mean()) < 4 * np.sqrt(dt / 10**4)


def test_covariation():
    p = sample_increments(11, 1, 1e-5, 10**5)
    assert estimate_covariation(p)[0, 0] == pytest.approx(1.0, abs=0.02)
    p = sample_increments(11, 3, 1e-5, 10**5)
    C = estimate_covariation(p)
    assert np.allclose(C, C.T)
    assert np.abs(C - np.eye(3)).max() <= 4 * np.sqrt(2 / 1e5)
    one = sample_increments(4, 2, 0.5, 1)
    assert np.array_equal(estimate_covariation(one), np.outer(one.increments[0], one.increments[0]))


def test_coarsen_preserves_path():
    p = sample_increments(2, 2, 1e-3, 64)
    c = p.coarsen(4)
    assert c.N == 16 and c.dt == pytest.approx(4e-3)
    assert np.allclose(c.W()[-1], p.W()[-1], atol=1e-14)
    assert np.allclose(c.W(), p.W()[::4], atol=1e-14)
    with pytest.raises(ValueError):
        p.coarsen(5)


def test_csv_round_trip(tmp_path):
    p = sample_increments(9, 3, 2.5e-3, 20)
    write_path_csv(tmp_path / "w.csv", p)
    back = read_path_csv(tmp_path / "w.csv")
    assert np.array_equal(back.increments, p.increments)
    assert back.dt == p.dt and back.seed == 9
    header = (tmp_path / "w.csv").read_text().splitlines()[1]
    assert header == "step,dW1,dW2,dW3"


def test_wiener_path_validation():
    with pytest.raises(ValueError):
        WienerPath(np.zeros(5), 0.1)
    with pytest.raises(ValueError):
        WienerPath(np.zeros((5, 1)), -0.1)


def test_qg_velocity_fields():
    g = PeriodicGrid((32, 32))
    x, y = g.mesh
    b = qg_velocity_fields([SpectralScalarField(g, 2.0), SpectralScalarField(g, np.sin(y))])
    assert np.abs(b.fields[0].data).max() == 0
    assert np.allclose(b.fields[1].data[0], -np.cos(y), atol=1e-13)
    assert np.abs(b.fields[1].data[1]).max() < 1e-13
    rng = np.random.default_rng(0)
    from stochgfd.grid import random_bandlimited
    b = qg_velocity_fields([random_bandlimited(g, 6, rng)])
    assert b.fields[0].divergence_residual() <= 1e-10
    with pytest.raises(ValueError):
        qg_velocity_fields([SpectralScalarField(PeriodicGrid((8, 8, 8)), 1.0)])


def test_validate_basis():
    g = PeriodicGrid((16, 16))
    x, y = g.mesh
    e1 = VectorFieldOnGrid.constant(g, [1.0, 0.0])
    e2 = VectorFieldOnGrid.constant(g, [0.0, 1.0])
    assert validate_basis(NoiseBasis([e1, e2])).passed
    bad = VectorFieldOnGrid(np.array([np.sin(x), 0 * y]), False, g)
    rep = validate_basis(NoiseBasis([bad]))
    assert not rep.passed and rep.divergence_residuals[0] > 0.1
    assert not validate_basis(NoiseBasis([e1, e2], [1.0, 2.0])).passed
    qg = NoiseBasis([SpectralScalarField(g, np.sin(x) * np.cos(2 * y))], mode="qg_streamfunction")
    rep = validate_basis(qg)
    assert rep.passed and rep.divergence_residuals[0] <= 1e-10


def test_pinned_covariation_regression():
    import hashlib
    import json
    from importlib.resources import files

    pin = json.loads(files("stochgfd").joinpath("data/covariation_pin.json").read_text())
    p = sample_increments(pin["seed"], pin["K"], pin["dt"], pin["N"])
    digest = hashlib.sha256(np.ascontiguousarray(p.increments, dtype="<f8").tobytes()).hexdigest()
    assert digest == pin["increments_sha256"]
    stored = np.array([[float.fromhex(v) for v in row] for row in pin["covariation_hex"]])
    assert np.array_equal(estimate_covariation(p), stored)
