import pytest

from photonest.params import AtomParams
from photonest.records import simulate_record

RABI5 = AtomParams(omega=5.0, delta=0.0, gamma=1.0, eta=1.0)


@pytest.fixture(scope="session")
def rabi5():
    return RABI5


@pytest.fixture(scope="session")
def records_1e4():
    """300 records of 1e4 clicks at the Rabi-5 point, seed == list index.

    Shared by the sampler goodness-of-fit tests and the estimator
    ensembles; building them once keeps the suite runtime sane.
    """
    return [simulate_record(RABI5, n_clicks=10_000, seed=s) for s in range(300)]
