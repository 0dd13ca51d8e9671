from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from bankpide.model import ModelSpec

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

TABLE1 = ModelSpec(A1=100, A2=100, L1=60, L2=70, L12=10, L21=15, R1=0.4, R2=0.45,
                   sigma1=1.0, sigma2=1.0, rho=0.5, theta1=1.0, theta2=1.0, T=1.0)
TABLE2 = TABLE1.replace(lambda1=0.5, lambda2=0.5, lambda12=0.3)


@pytest.fixture
def table1() -> ModelSpec:
    return TABLE1


@pytest.fixture
def table2() -> ModelSpec:
    return TABLE2
