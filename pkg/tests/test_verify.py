import math

import numpy as np
import pytest

from stochgfd import verify


def test_tolerances_and_overrides():
    tol = verify.load_tolerances()
    assert set(verify.SUITES) <= set(tol)
    tol = verify.load_tolerances({"pod": {"mode_error": 0.5}})
    assert tol["pod"]["mode_error"] == 0.5
    assert verify.load_tolerances()["pod"]["mode_error"] == 1e-7
    with pytest.raises(KeyError):
        verify.load_tolerances({"pod": {"missing": 1}})
    with pytest.raises(KeyError):
        verify.load_tolerances({"nosuch": {}})


def test_every_suite_criterion_is_registered():
    listed = [c for names in verify.SUITES.values() for c in names]
    assert sorted(listed) == sorted(verify.CRITERIA)


def test_check_relations():
    assert verify.Check("s", "n", "p", 1.0, 2.0, "<=").passed
    assert not verify.Check("s", "n", "p", 1.0, 2.0, ">=").passed
    assert not verify.Check("s", "n", "p", math.nan, 2.0, "<=").passed
    line = verify.Check("s", "n", "p", 3.0, 2.0, "<=", verify.DIAGNOSTIC).line()
    assert line.startswith("info fail")


def test_slope():
    dts = np.array([4e-4, 2e-4, 1e-4])
    assert verify._slope(dts, 3 * dts**1.5) == pytest.approx(1.5)
    assert math.isnan(verify._slope(dts, [1.0, 0.0, 1.0]))


def test_unknown_suite():
    with pytest.raises(KeyError):
        verify.run_suite("nosuch")


def test_pod_suite_and_reports(tmp_path):
    checks = verify.run_suite("pod")
    assert verify.suite_passed(checks)
    verify.write_checks(tmp_path / "c.csv", checks)
    verify.write_summary(tmp_path / "s.json", checks)
    assert len((tmp_path / "c.csv").read_text().splitlines()) == len(checks) + 1


def test_covariation_pin_matches():
    dev, unit, exact = verify.covariation_check()
    assert exact and dev <= 4 * unit
