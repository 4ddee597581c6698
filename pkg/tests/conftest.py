"""Shared fixtures.

Potential tables are expensive to build (a quarter-million-term series per
grid point batch), so anything reusable is session-scoped.  Tests must not
mutate fixture objects; everything handed out is either frozen or treated
as read-only by convention.
"""
import numpy as np
import pytest

from rieszlab import PeriodizedPotential, RieszParams


@pytest.fixture(scope="session")
def params():
    return RieszParams(d=1, s=0.5)


@pytest.fixture(scope="session")
def pp2(params):
    return PeriodizedPotential.build(params, 2)


@pytest.fixture(scope="session")
def pot2(pp2):
    return pp2.tabulate()


@pytest.fixture(scope="session")
def pp3(params):
    return PeriodizedPotential.build(params, 3)


@pytest.fixture(scope="session")
def pot3(pp3):
    return pp3.tabulate()


@pytest.fixture(scope="session")
def pot8(params):
    return PeriodizedPotential.build(params, 8).tabulate()


@pytest.fixture(scope="session")
def pot32(params):
    return PeriodizedPotential.build(params, 32).tabulate()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240816)
