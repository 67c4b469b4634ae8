"""The ten acceptance criteria, one test each.

Every test prints a single ``[PASS]``/``[FAIL]`` line (also repeated in the
terminal summary). Runtime budgets are checked alongside the tolerances.
"""

import pytest

from oed_sra import validation

SEEDS = range(5)


def _report(capsys, n, res, budget_s, per=1):
    per_unit = res.seconds / per
    in_time = per_unit <= budget_s
    line = f"criterion {n:>2} {res.line()}" + ("" if in_time else f" [over budget: {per_unit:.0f}s > {budget_s}s]")
    validation.ACCEPTANCE_LINES.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert res.passed, res.line()
    assert in_time, line


@pytest.mark.acceptance
def test_c01_example3_reproduction(capsys):
    _report(capsys, 1, validation.check_example3(SEEDS), 300, len(SEEDS))


@pytest.mark.acceptance
def test_c02_example1_reproduction(capsys):
    _report(capsys, 2, validation.check_example1(SEEDS), 30, len(SEEDS))


@pytest.mark.acceptance
def test_c03_example2_reproduction(capsys):
    _report(capsys, 3, validation.check_example2(SEEDS), 180, len(SEEDS))


@pytest.mark.acceptance
def test_c04_example4_behavior(capsys):
    _report(capsys, 4, validation.check_example4(SEEDS), 300, len(SEEDS))


@pytest.mark.acceptance
def test_c05_pruned_is_unbiasedness(capsys):
    _report(capsys, 5, validation.check_unbiasedness(), 60)


@pytest.mark.acceptance
def test_c06_ut_exactness(capsys):
    _report(capsys, 6, validation.check_ut_exactness(), 5)


@pytest.mark.acceptance
def test_c07_gp_correctness(capsys):
    _report(capsys, 7, validation.check_gp(), 30)


@pytest.mark.acceptance
def test_c08_design_points(capsys):
    _report(capsys, 8, validation.check_design_points(), 30)


@pytest.mark.acceptance
def test_c09_double_loop_cross_check(capsys):
    _report(capsys, 9, validation.check_double_loop(), 180)


@pytest.mark.acceptance
def test_c10_determinism_and_replay(capsys):
    _report(capsys, 10, validation.check_determinism(), 300)
