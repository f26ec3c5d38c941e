"""Acceptance criteria at their pinned settings; one PASS/FAIL line per criterion.

Diagnostic checks are printed for context but only criterion checks decide.
Run with ``pytest tests/test_acceptance.py -v`` (about 7 minutes on one core).
"""

import time

import pytest

from stochgfd import verify

# wall-clock budgets in seconds
BUDGETS = {
    "operator-algebra": 120,
    "metric-laplacian": 30,
    "strat-ito-equivalence": 300,
    "casimir-drift": 300,
    "kelvin-circulation": 180,
    "helicity": 300,
    "pv-along-paths": 360,
    "pod-pipeline": 30,
    "rossby-dispersion": 60,
    "brownian-covariation": 30,
}


@pytest.mark.slow
@pytest.mark.parametrize("criterion", list(verify.CRITERIA))
def test_criterion(criterion, capsys):
    start = time.perf_counter()
    checks = verify.run_criterion(criterion)
    elapsed = time.perf_counter() - start
    failed = [c for c in checks if c.kind == verify.CRITERION and not c.passed]
    in_budget = elapsed <= BUDGETS[criterion]
    ok = not failed and in_budget
    with capsys.disabled():
        print()
        for c in checks:
            print("    " + c.line())
        status = "PASS" if ok else "FAIL"
        reason = "; ".join(f"{c.name} = {c.value:.4g} (needs {c.relation} {c.tolerance:.4g})" for c in failed)
        if not in_budget:
            reason = (reason + "; " if reason else "") + f"runtime over {BUDGETS[criterion]} s"
        print(f"{status} {criterion} [{elapsed:.0f} s]" + (f": {reason}" if reason else ""))
    assert not failed, reason
    assert in_budget, f"{criterion} took {elapsed:.0f} s"
