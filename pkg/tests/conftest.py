import numpy as np
import pytest

from specmap.spectral_core import GridFunction, ProblemTriple, grid


def triple(q, h=0.0, H=0.0, M=1024):
    """ProblemTriple from a callable or constant potential on M intervals."""
    x = grid(M)
    values = q(x) if callable(q) else np.full(M + 1, q, dtype=complex)
    return ProblemTriple(GridFunction(np.asarray(values, dtype=complex)), h, H)


@pytest.fixture(scope="session")
def make_triple():
    return triple
