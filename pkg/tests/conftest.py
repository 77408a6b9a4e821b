import math

import numpy as np
import pytest
from hypothesis import settings

from dplqg.synthesis import NetworkModel

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE_RESULTS = {}


def golden_network(x_tilde=1.0, wbar=0.0) -> NetworkModel:
    """Scalar a = b = c = q = r = w = 1 with unit output noise variance."""
    return NetworkModel.from_matrices(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, Wbar=[[wbar]], x_tilde=[x_tilde])


@pytest.fixture
def golden():
    return golden_network()


def random_stable(rng, n, radius):
    A = rng.normal(size=(n, n))
    rho = np.max(np.abs(np.linalg.eigvals(A)))
    return A * (radius / rho) if rho > 0 else A


def random_spd(rng, n, floor=0.1):
    G = rng.normal(size=(n, n))
    return G @ G.T + floor * np.eye(n)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split()[0])):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")
