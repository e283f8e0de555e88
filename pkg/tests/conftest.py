"""
Shared fixtures: the default psi, phi_T instances and small synthetic data.
"""

import numpy as np
import pytest

from geodesum.config import Tolerances
from geodesum.spectra import SpectralDataset, SpectralEntry
from geodesum.testfn import PhiT, build_psi, standard_fixtures
from geodesum.transforms import CoefficientSequence

# Seed for every random fixture in the suite.
SEED = 20240611


@pytest.fixture(scope="session")
def psi():
    """The default admissible bump (half width 1/4, support [-1, 1])."""
    return build_psi()


@pytest.fixture(scope="session")
def phi_t1(psi):
    return PhiT(1.0, psi)


@pytest.fixture(scope="session")
def phi_t4(psi):
    return PhiT(4.0, psi)


@pytest.fixture(scope="session")
def fixtures(psi):
    return standard_fixtures(psi)


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


@pytest.fixture
def tight():
    return Tolerances(1e-13, 1e-12)


@pytest.fixture
def gaussian_coeffs():
    """a_k = exp(-k**2) on [-6, 6]."""
    ks = np.arange(-6, 7)
    return CoefficientSequence(-6, 6, np.exp(-(ks.astype(float) ** 2)), 0.3, 1.0)


@pytest.fixture
def small_dataset():
    """Three principal-series entries for d = 2."""
    return SpectralDataset(
        2,
        (
            SpectralEntry(0.5, 0.8 + 0.1j, 1.0),
            SpectralEntry(1.25, -0.4j, 0.5 + 0.5j),
            SpectralEntry(2.0, 0.3, -0.7),
        ),
        "synthetic",
    )
