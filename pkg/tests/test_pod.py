import numpy as np
import pytest

from stochgfd.forms import VectorFieldOnGrid
from stochgfd.grid import PeriodicGrid
from stochgfd.pod import (
    SnapshotSet,
    compute_pod,
    correlation_residual,
    leray_project,
    read_basis,
    read_snapshot_dir,
    scale_modes,
    streamfunction_from_velocity,
    write_basis,
)
from stochgfd.snapshot import write_components

TWO_PI = 2 * np.pi


@pytest.fixture
def g():
    return PeriodicGrid((32, 32))


def unit_modes(g):
    x, y = g.mesh
    # orthogonal, divergence-free, unit L2 norm on the 2 pi torus
    p1 = np.array([np.sin(y), 0 * x]) / (np.pi * np.sqrt(2))
    p2 = np.array([np.cos(2 * y), np.sin(x)]) / (2 * np.pi)
    return p1, p2


def two_mode_set(g, M=16):
    p1, p2 = unit_modes(g)
    t = TWO_PI * np.arange(M) / M
    a, b = np.sqrt(8) * np.cos(t), np.sqrt(2) * np.sin(t)
    return SnapshotSet(g, a[:, None, None, None] * p1 + b[:, None, None, None] * p2), (p1, p2)


def norm(g, u):
    return np.sqrt(np.sum(u * u) / g.size * g.volume)


def test_single_mode_oracle(g):
    p1, _ = unit_modes(g)
    data = SnapshotSet(g, np.stack([3.0 * p1] * 4))
    b = compute_pod(data, 1)
    # Gram matrix is 9 ones(4,4)/4, single eigenvalue 9
    assert b.eigenvalues[0] == pytest.approx(9.0, rel=1e-12)
    assert min(norm(g, b.modes[0] - p1), norm(g, b.modes[0] + p1)) < 1e-10


def test_two_mode_spectrum_and_modes(g):
    data, (p1, p2) = two_mode_set(g)
    b = compute_pod(data, 2)
    assert np.abs(b.eigenvalues - [4.0, 1.0]).max() <= 1e-8
    for m, p in zip(b.modes, (p1, p2)):
        assert min(norm(g, m - p), norm(g, m + p)) <= 1e-7
    gram = np.array([[np.sum(a * c) / g.size * g.volume for c in b.modes] for a in b.modes])
    assert np.abs(gram - np.eye(2)).max() <= 1e-8
    assert correlation_residual(data, b) <= 1e-7
    assert not b.degenerate


def test_energy_sum_identity(g):
    rng = np.random.default_rng(0)
    M = 6
    data = SnapshotSet(g, rng.standard_normal((M, 2) + g.shape))
    b = compute_pod(data, M)
    energy = sum(norm(g, u) ** 2 for u in data.data) / M
    assert abs(b.eigenvalues.sum() - energy) <= 1e-8 * energy
    assert np.all(np.diff(b.eigenvalues) <= 0)


def test_errors_and_degenerate_cases(g):
    data, _ = two_mode_set(g, 4)
    with pytest.raises(ValueError):
        compute_pod(data, 5)
    with pytest.raises(ValueError):
        compute_pod(data, 0)
    empty = compute_pod(SnapshotSet(g, np.zeros((0, 2) + g.shape)), 1)
    assert empty.degenerate and empty.K == 0
    assert scale_modes(empty).K == 0
    zero = compute_pod(SnapshotSet(g, np.zeros((3, 2) + g.shape)), 2)
    assert zero.degenerate and np.all(zero.modes == 0) and np.all(zero.eigenvalues == 0)
    rank2 = compute_pod(data, 3)
    assert rank2.degenerate and rank2.eigenvalues[2] == 0


def test_scale_modes(g):
    data, _ = two_mode_set(g)
    nb = scale_modes(compute_pod(data, 2))
    assert np.allclose(nb.weights, [2.0, 1.0])
    assert norm(g, nb.fields[0].data) == pytest.approx(2.0, rel=1e-10)
    for f in nb.fields:
        flat = f.data.ravel()
        assert flat[np.argmax(np.abs(flat) > 1e-12 * np.abs(flat).max())] > 0


def test_centering_and_leray(g):
    x, y = g.mesh
    p1, _ = unit_modes(g)
    grad = np.array([np.cos(x), 0 * y])
    data = SnapshotSet(g, np.stack([p1 + 5.0 + grad, -p1 + 5.0 + grad]))
    b = compute_pod(data, 1, center=True, leray=True)
    m = VectorFieldOnGrid(b.modes[0], False, g)
    assert m.divergence_residual() <= 1e-10
    assert b.eigenvalues[0] == pytest.approx(1.0, rel=1e-10)
    assert np.abs(leray_project(g, grad)).max() < 1e-13


def test_streamfunction_from_velocity(g):
    x, y = g.mesh
    v = VectorFieldOnGrid(np.array([-np.cos(y), 0 * x]), True, g)
    psi = streamfunction_from_velocity(v)
    assert np.abs(psi.values - np.sin(y)).max() < 1e-12


def test_directory_round_trip(tmp_path, g):
    data, _ = two_mode_set(g, 5)
    snaps = tmp_path / "snaps"
    for m, u in enumerate(data.data):
        write_components(snaps, f"u{m:02d}", g, list(u), {"time": m})
    loaded = read_snapshot_dir(snaps)
    assert np.array_equal(loaded.data, data.data)
    b = compute_pod(loaded, 2)
    write_basis(tmp_path / "basis", b)
    back = read_basis(tmp_path / "basis")
    assert np.array_equal(back.modes, b.modes) and np.array_equal(back.eigenvalues, b.eigenvalues)
    (tmp_path / "empty").mkdir()
    with pytest.raises(ValueError):
        read_snapshot_dir(tmp_path / "empty")
