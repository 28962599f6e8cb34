import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def naive_product(mixers, phases):
    """Left-to-right product of explicitly built diagonal and mixer factors."""
    n = phases.shape[1] + 1
    u = np.eye(n, dtype=complex)
    for j, row in enumerate(phases):
        d = np.diag(np.append(np.exp(1j * row), np.exp(-1j * row.sum())))
        u = u @ d
        if j < len(mixers):
            u = u @ mixers[j]
    return u
