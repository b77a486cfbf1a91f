"""The eight acceptance criteria, each at its stated tolerance.

Every test prints one PASS/FAIL line; the lines are also collected and shown
in the pytest terminal summary. Run this file directly to print them without
pytest:

    python3 tests/test_acceptance.py
"""

import sys

import pytest

from dbs_traj import validation

CRITERIA = [
    ("waist", validation.waist_check),
    ("gaussian_oracle", validation.gaussian_oracle_check),
    ("fringes", validation.fringe_check),
    ("energy", validation.energy_check),
    ("classical_limit", validation.classical_check),
    ("lens_focus", validation.lens_check),
    ("relativistic", validation.relativistic_check),
    ("stencil_order", validation.stencil_check),
]


@pytest.mark.slow
@pytest.mark.parametrize("check", [c for _, c in CRITERIA], ids=[n for n, _ in CRITERIA])
def test_criterion(check):
    import conftest

    result = check()
    line = result.line()
    print(line)
    conftest.ACCEPTANCE_LINES.append((result.key, line))
    assert result.passed, line


def main() -> int:
    failed = 0
    for _, check in CRITERIA:
        result = check()
        print(result.line(), flush=True)
        failed += not result.passed
    print(f"{len(CRITERIA) - failed}/{len(CRITERIA)} criteria passed")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
