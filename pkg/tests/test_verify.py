import pytest

from qpergodic.verify import SUITES


@pytest.mark.parametrize("suite", sorted(SUITES))
def test_suite_passes(suite):
    checks = SUITES[suite]()
    assert checks
    for c in checks:
        assert c.passed, c.line()
        assert c.line().startswith("PASS")
