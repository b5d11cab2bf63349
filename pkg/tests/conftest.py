import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qtrade.ensemble import RankOnePovm
from qtrade.qstate import PureState, haar_unitary

settings.register_profile(
    "qtrade",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
    derandomize=True,
)
settings.load_profile("qtrade")

BELL = PureState(np.array([1, 0, 0, 1]) / np.sqrt(2), (2, 2))


def random_rank1_povm(d, m, rng):
    """Rank-1 POVM with m outcomes on C^d from a Haar isometry."""
    return RankOnePovm.from_isometry(haar_unitary(m, rng)[:, :d])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE: dict[int, str] = {}


def record_acceptance(number, ok, message):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {message}"
    _ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
