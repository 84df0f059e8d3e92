"""Shared oracles for the test suite.

The dense coupling matrices are rebuilt here, independently of any package
code, so sparse-vs-dense comparisons never share the implementation under
test.
"""

import numpy as np
import pytest

from reservoir_lab.ensemble import SymmetricDistribution, WeightEnsemble, uniform


def dense_shift(m: int, d: int) -> np.ndarray:
    """Materialized block superdiagonal shift."""
    P = np.zeros((m * d, m * d))
    for i in range(m - 1):
        P[i * d : (i + 1) * d, (i + 1) * d : (i + 2) * d] = np.eye(d)
    return P


def dense_embed(m: int, d: int) -> np.ndarray:
    """Materialized last-block embed."""
    Q = np.zeros((m * d, d))
    Q[(m - 1) * d :, :] = np.eye(d)
    return Q


def zero_ensemble(n: int, m: int, d: int) -> WeightEnsemble:
    """Degenerate all-zero weights (not samplable from the bounded laws)."""
    return WeightEnsemble(
        W=np.zeros((n, m * d)),
        b=np.zeros(n),
        n=n,
        m=m,
        d=d,
        source=uniform(0.5),
        seed=0,
    )


@pytest.fixture(scope="session")
def dist() -> SymmetricDistribution:
    return uniform(0.5)
