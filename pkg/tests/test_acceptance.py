"""One test per acceptance criterion, at the stated tolerances.

Each outcome is also printed as a PASS/FAIL line in the terminal summary.
"""

import pytest

from dvpdsim.acceptance import NAMES, Context, run_check

from conftest import ACCEPTANCE_LINES


@pytest.fixture(scope="module")
def ctx():
    return Context()


@pytest.mark.parametrize("k", sorted(NAMES), ids=[f"c{k:02d}_{NAMES[k].replace(' ', '_')}" for k in sorted(NAMES)])
def test_criterion(ctx, k):
    check = run_check(k, ctx)
    ACCEPTANCE_LINES.append(check.line())
    print(check.line())
    assert check.passed, check.detail
