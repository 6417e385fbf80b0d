from dataclasses import dataclass
from typing import Optional

import pytest

from epsistools.chain import ModelParams


@dataclass
class Params:
    lam: float = 1.0
    mu: float = 2.0
    epsilon: float = 0.5
    N: int = 100

    def model(self, N: Optional[int] = None) -> ModelParams:
        return ModelParams(self.lam, self.mu, self.epsilon, self.N if N is None else N)


@pytest.fixture()
def reference_params():
    result = Params(lam=1.0, mu=2.0, epsilon=0.5, N=1000)
    return result


@pytest.fixture()
def small_params():
    result = Params(lam=1.0, mu=2.0, epsilon=0.5, N=50)
    return result


@pytest.fixture()
def two_state_params():
    result = Params(lam=1.0, mu=2.0, epsilon=0.5, N=1)
    return result


@pytest.fixture()
def supercritical_params():
    result = Params(lam=3.0, mu=1.0, epsilon=0.2, N=200)
    return result
