"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

A criterion passes when its numerical checks hold at the stated tolerances
and it finishes inside its runtime budget.
"""
import json

import pytest

from logsob_lab import acceptance

ELAPSED = {}
TOTAL_BUDGET = 15 * 60.0


def _summary(detail, limit=220):
    text = json.dumps(acceptance._jsonable(detail), sort_keys=True)
    return text if len(text) <= limit else text[:limit - 3] + "..."


@pytest.mark.parametrize("number", [c[0] for c in acceptance.CRITERIA],
                         ids=[c[1].replace(" ", "_") for c in acceptance.CRITERIA])
def test_criterion(number, capsys):
    res = acceptance.run_criterion(number)
    ELAPSED[number] = res.elapsed
    in_budget = res.elapsed <= res.budget
    ok = res.passed and in_budget
    status = "PASS" if ok else "FAIL"
    with capsys.disabled():
        print(f"\n[{status}] criterion {number:2d} {res.name}: {res.elapsed:.1f}s "
              f"(budget {res.budget:.0f}s) {_summary(res.detail)}")
    assert res.passed, res.detail
    assert in_budget, f"{res.elapsed:.1f}s exceeds the {res.budget:.0f}s budget"


def test_total_wall_clock(capsys):
    if len(ELAPSED) != len(acceptance.CRITERIA):
        pytest.skip("needs the full acceptance run in the same session")
    total = sum(ELAPSED.values())
    with capsys.disabled():
        print(f"\n[{'PASS' if total <= TOTAL_BUDGET else 'FAIL'}] acceptance total: "
              f"{total:.1f}s (budget {TOTAL_BUDGET:.0f}s)")
    assert total <= TOTAL_BUDGET
