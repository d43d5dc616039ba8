import numpy as np
import pytest

from irjbd import SparseMatrix, StackedOperator, jbd_expand, jbd_init
from irjbd.stackedls import LsqrConfig


def gaussian_pair(rng, m, p, n):
    """Dense Gaussian pair plus sparse wrappers; regular with probability 1."""
    Ad = rng.standard_normal((m, n))
    Ld = rng.standard_normal((p, n))
    return Ad, Ld, SparseMatrix.from_dense(Ad), SparseMatrix.from_dense(Ld)


def expanded_state(rng, m, p, n, k, seed_vec=None):
    """A fresh k-step run on a random Gaussian pair."""
    Ad, Ld, A, L = gaussian_pair(rng, m, p, n)
    op = StackedOperator(A, L)
    u1 = seed_vec if seed_vec is not None else rng.standard_normal(m)
    u1 = u1 / np.linalg.norm(u1)
    state = jbd_init(op, u1, LsqrConfig(), capacity=k)
    jbd_expand(state, op, k, LsqrConfig())
    return state, op, Ad, Ld


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
