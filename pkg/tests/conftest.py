import numpy as np
import pytest

from ncstab import ContinuousPlant, ShiftedExponentialDelay


@pytest.fixture
def pendulum() -> ContinuousPlant:
    """Inverted-pendulum linearization used throughout: g/r = 49, 1/(M r^2) = 25."""
    return ContinuousPlant(np.array([[0.0, 1.0], [49.0, 0.0]]), np.array([[0.0], [25.0]]))


@pytest.fixture
def roundtrip_model() -> ShiftedExponentialDelay:
    """Shifted-exponential delays with offsets 0.01 and means 0.01 / 0.02."""
    return ShiftedExponentialDelay(eps_up=0.01, eps_dw=0.01, mu_up=0.01, mu_dw=0.02)
