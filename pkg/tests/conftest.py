import numpy as np
import pytest

from sucag.objectives import LogisticSuite, generate_synthetic, random_quadratic


@pytest.fixture
def logistic_small():
    ds, _ = generate_synthetic(d=10, N=20, B=3, seed=11)
    return LogisticSuite(ds)


@pytest.fixture
def quadratic_small():
    return random_quadratic(d=6, N=5, kappa=10.0, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance verdict lines collected during the run."""
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)
