import numpy as np
import pytest

from ulacal.scenario import ScenarioConfig, build_covariance


@pytest.fixture(scope="session")
def default_cov():
    return build_covariance(ScenarioConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_pd(rng, n, cond_floor=1e-3):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return A @ A.conj().T / n + cond_floor * np.eye(n)


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def verdict(request):
    """Record one PASS/FAIL line per acceptance criterion and assert it."""
    lines = request.config.stash.setdefault(ACCEPTANCE_LINES, [])

    def record(name, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
        lines.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
