import numpy as np
import pytest
from hypothesis import settings

from roiflood.station import CovariateSchema
from roiflood.synth import SynthConfig, generate_basin

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical checks")


@pytest.fixture(scope="session")
def basin():
    """Thirty-station basin with moderately dependent ragged records."""
    return generate_basin(SynthConfig(m=30, dependence=0.3, seed=11))


@pytest.fixture(scope="session")
def small_basin():
    return generate_basin(SynthConfig(m=12, record_length=(25, 40), seed=4))


@pytest.fixture(scope="session")
def schema():
    return CovariateSchema()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one pass/fail line for the acceptance summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(criterion, passed, detail):
        lines.append(f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
