"""Run the acceptance suite and print one pass/fail line per criterion.

    python3 scripts/run_acceptance.py [extra pytest args]

Exit status is pytest's.
"""

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent


if __name__ == "__main__":
    args = [str(ROOT / "tests" / "test_acceptance.py"), "-q", "-p", "no:cacheprovider", *sys.argv[1:]]
    sys.exit(pytest.main(args))
