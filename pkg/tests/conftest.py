import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def gram_residual(m, basis=None):
    """``||(M B)*(M B) - B*B||`` computed independently of the package."""
    b = np.eye(m.shape[1]) if basis is None else basis
    mb = m @ b
    return np.linalg.norm(mb.conj().T @ mb - b.conj().T @ b, 2)
