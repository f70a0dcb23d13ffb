"""Acceptance gate: runs every release criterion at its stated tolerance.

Each criterion prints one [PASS]/[FAIL] line (visible with pytest -s or in
the captured output on failure) and the suite fails if any gate fails.
`qfclab verify` runs the same battery from the command line.
"""

import pytest

from qfclab import acceptance
from qfclab.config import bundled_losses, bundled_model

_MODEL = bundled_model()
_LOSSES = bundled_losses()


@pytest.mark.parametrize("check", acceptance.ALL_CHECKS,
                         ids=lambda c: c.__name__.replace("check_", ""))
def test_acceptance(check):
    result = check(_MODEL, _LOSSES, printer=print)
    assert result.passed, result.detail
