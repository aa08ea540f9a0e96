import numpy as np
import pytest

from horomix.spectral_model import Perturbation, SpectralModel


@pytest.fixture(scope="session")
def model_d1():
    """Genus-2, rank-1 model with unit pairing: branch pi * w^2."""
    m = SpectralModel(genus=2, rank_d=1, gram=[[1.0]], gap_delta=0.1)
    m.validate()
    return m


@pytest.fixture(scope="session")
def model_d2():
    """Genus-2, rank-2 identity-pairing model: branch pi * |w|^2."""
    m = SpectralModel(genus=2, rank_d=2, gram=np.eye(2), gap_delta=0.1)
    m.validate()
    return m


@pytest.fixture(scope="session")
def model_d1_quartic():
    m = SpectralModel(
        genus=2, rank_d=1, gram=[[1.0]],
        perturbation=Perturbation("quartic", 1.0), gap_delta=0.1,
    )
    m.validate()
    return m
