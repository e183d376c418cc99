import numpy as np
import pytest

from stablespde import stable
from stablespde.spectral import SequenceRule, SpectralModel


@pytest.fixture(scope="session")
def table_12():
    return stable.build_density_table(1.2)


@pytest.fixture(scope="session")
def table_15():
    return stable.build_density_table(1.5)


@pytest.fixture(scope="session")
def table_18():
    return stable.build_density_table(1.8)


@pytest.fixture(scope="session")
def table_cauchy():
    return stable.build_density_table(1.0)


@pytest.fixture(scope="session")
def single_mode_15():
    return SpectralModel(
        gamma_rule=SequenceRule.explicit([1.0]),
        beta_rule=SequenceRule.explicit([1.0]),
        truncation=1,
        alpha=1.5,
    )


@pytest.fixture(scope="session")
def two_mode_15():
    return SpectralModel(
        gamma_rule=SequenceRule.explicit([1.0, 2.5]),
        beta_rule=SequenceRule.explicit([1.0, 0.6]),
        truncation=2,
        alpha=1.5,
    )
