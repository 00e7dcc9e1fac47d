import time

import numpy as np
import pytest

from qpkam.kam_engine import run
from qpkam.vdp import VdpConfig, reduce_to_center

ACCEPTANCE_LINES = []


class RunCache:
    """Engine runs on the van der Pol spec, shared between test modules."""

    def __init__(self):
        self.spec = reduce_to_center(VdpConfig())
        self._runs = {}
        self.seconds = {}

    def __call__(self, spec):
        key = (spec.eps, spec.gamma0, spec.interval)
        if key not in self._runs:
            t0 = time.perf_counter()
            self._runs[key] = run(spec)
            self.seconds[key] = time.perf_counter() - t0
        return self._runs[key]

    def at(self, eps):
        return self(self.spec.with_eps(eps))

    def seconds_at(self, eps):
        self.at(eps)
        s = self.spec
        return self.seconds[(eps, s.gamma0, s.interval)]


@pytest.fixture(scope="session")
def runs():
    return RunCache()


@pytest.fixture(scope="session")
def vdp_spec(runs):
    return runs.spec


@pytest.fixture(scope="session")
def vdp_run(runs):
    return runs.at(1e-6)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
