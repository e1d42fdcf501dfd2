import numpy as np
import pytest

from nesschain.model import ChainConfig, ReservoirSpec, harmonic_potential


def harmonic_chain(n=3, d=1, TL=2.0, TR=1.0, lam=0.5, gamma=1.0):
    return ChainConfig(
        n=n,
        d=d,
        onsite=harmonic_potential(),
        interaction=harmonic_potential(),
        left=ReservoirSpec(lam, gamma, TL),
        right=ReservoirSpec(lam, gamma, TR),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
