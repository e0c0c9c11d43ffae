import numpy as np
import pytest

from accreteflow import ConstitutiveModel, FreeEnergyParams, ViscosityParams

SCENARIOS = __import__("pathlib").Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture
def default_model():
    return ConstitutiveModel(
        free=FreeEnergyParams(alpha=2.0, beta=2.0, z=1.0, b=0.1, c0=1.0, c1=0.5),
        visc=ViscosityParams(mu=0.01, lam=0.005, kappa=0.02),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def central_diff(f, x, h):
    return (f(x + h) - f(x - h)) / (2.0 * h)
