"""Acceptance criteria 1-8, one pass/fail line each.

Each test runs the self-test check of the same number and prints its
one-line summary, so ``pytest -v -s`` or the captured output shows the
measured metrics next to the verdict.
"""

import pytest

from bcinclusion.selftest import run_check

NAMES = {
    1: "operator algebra",
    2: "forward solver",
    3: "inner-product identity",
    4: "volume identity",
    5: "epsilon scaling",
    6: "known-background distance",
    7: "unknown-background smoothness",
    8: "convex hull",
}


@pytest.mark.slow
@pytest.mark.parametrize("criterion", sorted(NAMES), ids=[f"c{k}-{v.replace(' ', '_')}" for k, v in NAMES.items()])
def test_acceptance(criterion, capsys):
    chk = run_check(criterion, seed=42)
    with capsys.disabled():
        print(f"\n{chk.line()}  [{chk.seconds:.1f} s]")
    assert chk.passed, chk.line() + "".join(f"\n  note: {n}" for n in chk.notes)
