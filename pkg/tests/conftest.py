import numpy as np
import pytest

from orliczfb import orlicz


BUILTIN_IDS = ["p1.5", "p2", "p3", "p4", "t+t^3"]


@pytest.fixture(params=range(5), ids=BUILTIN_IDS)
def builtin_nf(request):
    return orlicz.builtin_nfunctions()[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def cubic():
    """g(t) = t + t^3."""
    return orlicz.make_sum_powers([(1.0, 2.0), (1.0, 4.0)])


@pytest.fixture(scope="session")
def quadratic():
    return orlicz.make_power(2.0)


# ---------------------------------------------------------------------------
# acceptance verdict lines, echoed live and repeated in the terminal summary

_VERDICTS = []


@pytest.fixture
def verdict(capsys):
    def emit(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        _VERDICTS.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return emit


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
