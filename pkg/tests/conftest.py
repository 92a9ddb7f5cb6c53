import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def relative_error(a, b) -> float:
    """Norm-based relative error, robust when both sides are near zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return float(np.linalg.norm(a - b) / denom)
