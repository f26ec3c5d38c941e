import json

import numpy as np
import pytest

from stochgfd import cli
from stochgfd.grid import PeriodicGrid
from stochgfd.pod import read_basis
from stochgfd.snapshot import read_components, write_components


def _write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return p


SQG = {
    "grid": {"n": [32, 32]},
    "dt": 1e-3,
    "steps": 10,
    "scheme": "stratonovich",
    "initial": {"modes": [{"k": [1, 0], "amplitude": 1.0}]},
    "params": {"F": 0.0, "beta": 0.0},
    "snapshot_every": 10,
}


def test_run_sqg_steady_state(tmp_path):
    cfg = _write(tmp_path, "c.json", SQG)
    assert cli.main(["run-sqg", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    snaps = sorted((tmp_path / "o" / "snapshots").glob("*.json"))
    _, first, _ = read_components(snaps[0])
    _, last, meta = read_components(snaps[-1])
    assert meta["time"] == pytest.approx(0.01)
    assert np.abs(last[0] - first[0]).max() <= 1e-10


def test_run_sqg_deterministic_bytes(tmp_path):
    cfg = dict(SQG, noise={"modes": [{"k": [2, 1], "amplitude": 0.2}]}, steps=20)
    p = _write(tmp_path, "c.json", cfg)
    for d in ("a", "b"):
        assert cli.main(["run-sqg", "--config", str(p), "--seed", "7", "--serial", "--out", str(tmp_path / d)]) == 0
    a = (tmp_path / "a" / "diagnostics.csv").read_bytes()
    assert a == (tmp_path / "b" / "diagnostics.csv").read_bytes()
    assert (tmp_path / "a" / "brownian_path.csv").exists()
    cli.main(["run-sqg", "--config", str(p), "--seed", "8", "--out", str(tmp_path / "c")])
    assert a != (tmp_path / "c" / "diagnostics.csv").read_bytes()


@pytest.mark.parametrize("bad", [
    {"grid": {"n": [32, 32]}, "dt": 1e-3},
    dict(SQG, unknown_key=1),
    dict(SQG, scheme="rk4"),
    dict(SQG, params={"F": -1.0}),
])
def test_run_sqg_invalid_config(tmp_path, bad):
    assert cli.main(["run-sqg", "--config", str(_write(tmp_path, "c.json", bad))]) == 2


def test_run_sqg_blowup_exit(tmp_path):
    cfg = dict(SQG, dt=50.0, steps=200, initial={"modes": [{"k": [1, 0], "amplitude": 1e3},
                                                           {"k": [3, 2], "amplitude": 1e3}]})
    assert cli.main(["run-sqg", "--config", str(_write(tmp_path, "c.json", cfg)),
                     "--out", str(tmp_path)]) == 3


def test_usage_errors(tmp_path):
    assert cli.main([]) == 2
    assert cli.main(["nonsense"]) == 2
    assert cli.main(["verify", "nonsense", "--out", str(tmp_path)]) == 2
    assert cli.main(["run-sqg", "--config", str(tmp_path / "missing.json")]) == 2


def test_pod_extract(tmp_path):
    g = PeriodicGrid((16, 16))
    x, y = g.mesh
    snaps = tmp_path / "snaps"
    for m, a in enumerate([1.0, -2.0, 0.5]):
        write_components(snaps, f"u_{m}", g, [a * np.sin(y), 0 * x])
    out = tmp_path / "basis"
    assert cli.main(["pod-extract", "--snapshots", str(snaps), "--K", "1", "--out", str(out)]) == 0
    b = read_basis(out)
    assert b.eigenvalues[0] == pytest.approx((1 + 4 + 0.25) / 3 * 2 * np.pi**2)
    before = (out / "eigenvalues.csv").read_bytes()
    assert cli.main(["pod-extract", "--snapshots", str(snaps), "--K", "1", "--out", str(out)]) == 0
    assert (out / "eigenvalues.csv").read_bytes() == before
    (tmp_path / "empty").mkdir()
    assert cli.main(["pod-extract", "--snapshots", str(tmp_path / "empty"), "--K", "1"]) == 2
    assert cli.main(["pod-extract", "--snapshots", str(snaps), "--K", "5"]) == 2


TRANSPORT = {
    "grid": {"n": [32, 32]},
    "T": 0.05,
    "dt": 1e-3,
    "form": {"grade": "one_form", "components": [[{"k": [0, 1], "amplitude": 1.0}], [{"k": [1, 0], "amplitude": -1.0}]]},
    "loop": {"center": [3.0, 3.0], "radius": 0.7, "P": 64},
}


def _transport(tmp_path, cfg):
    out = tmp_path / "t"
    code = cli.main(["transport", "--config", str(_write(tmp_path, "t.json", cfg)), "--out", str(out)])
    return code, (json.loads((out / "transport_summary.json").read_text()) if code == 0 else None)


def test_transport_zero_flow_identity(tmp_path):
    code, s = _transport(tmp_path, TRANSPORT)
    assert code == 0
    assert s["max_relative_change"] <= 1e-14
    assert s["exact_solution_error"] <= 1e-12
    assert s["circulation_relative_drift"] <= 1e-12


def test_transport_constant_noise_exact(tmp_path):
    cfg = dict(TRANSPORT, drift={"constant": [0.3, -0.2]}, noise=[{"constant": [0.5, 0.1]}, {"constant": [0.0, 0.4]}],
               seed=3)
    code, s = _transport(tmp_path, cfg)
    assert code == 0
    assert s["constant_flow"] and s["max_relative_change"] > 1e-3
    assert s["exact_solution_error"] <= 1e-10
    assert s["relative_norm_drift"] <= 1e-12
    assert s["circulation_relative_drift"] <= 1e-8


def test_transport_varying_flow(tmp_path):
    cfg = dict(TRANSPORT, noise=[{"streamfunction": [{"k": [1, 1], "amplitude": 0.3}]}], incompressible=True)
    code, s = _transport(tmp_path, cfg)
    assert code == 0
    assert "exact_solution_error" not in s
    assert s["circulation_relative_drift"] <= 1e-3
    rows = (tmp_path / "t" / "transport.csv").read_text().splitlines()
    assert rows[0] == "time,norm,relative_change,circulation" and len(rows) == 52


@pytest.mark.parametrize("bad", [
    dict(TRANSPORT, form={"grade": "spinor", "components": []}),
    dict(TRANSPORT, drift={"constant": [1.0, 0.0], "streamfunction": []}),
    dict(TRANSPORT, extra=True),
    dict(TRANSPORT, drift={"constant": [1.0, 0.0, 0.0]}),
])
def test_transport_invalid(tmp_path, bad):
    assert _transport(tmp_path, bad)[0] == 2


def test_verify_pod(tmp_path, capsys):
    assert cli.main(["verify", "pod", "--out", str(tmp_path)]) == 0
    assert "pod: PASS" in capsys.readouterr().out
    summary = json.loads((tmp_path / "verify_pod.json").read_text())
    assert summary["passed"] and summary["failures"] == []
    assert (tmp_path / "verify_pod.csv").read_text().startswith("suite,name,kind")


def test_verify_tolerance_override_names_failure(tmp_path, capsys):
    bad = _write(tmp_path, "bad.json", {"pod": {"nope": 1.0}})
    assert cli.main(["verify", "pod", "--tolerances", str(bad), "--out", str(tmp_path)]) == 2
    tol = _write(tmp_path, "neg.json", {"pod": {"orthonormality": -1.0}})
    assert cli.main(["verify", "pod", "--tolerances", str(tol), "--out", str(tmp_path)]) == 1
    summary = json.loads((tmp_path / "verify_pod.json").read_text())
    assert summary["failures"][0]["property"] == "modes are L2-orthonormal"
    assert "FAIL" in capsys.readouterr().out
