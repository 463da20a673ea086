import numpy as np
import pytest

from pdforecast.dataset import SynthConfig, generate_synthetic


@pytest.fixture(scope="session")
def small_cohort():
    """A quick-to-build cohort for pipeline tests."""
    return generate_synthetic(SynthConfig(n_patients=30, n_peptides=20, seed=1))


@pytest.fixture(scope="session")
def default_cohort():
    """The full default synthetic cohort (248 patients, seed 0)."""
    return generate_synthetic(SynthConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(0)
