import numpy as np
import pytest
import scipy.sparse as sparse

import chainstab as cs


def countable_kernel(rows, name="inline"):
    """Kernel from a dict/list of per-state (points, masses) rows."""
    table = {
        int(i): cs.TransitionRow(points=np.asarray(p, float),
                                 masses=np.asarray(m, float))
        for i, (p, m) in enumerate(rows)
    }

    def row_fn(x, horizon):
        return table[int(x)]

    return cs.Kernel(space=cs.COUNTABLE, row_fn=row_fn, name=name)


def finite_from_matrix(P):
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    grid = cs.GridScheme(cs.COUNTABLE, float(n))
    return cs.FiniteKernel(grid=grid, matrix=sparse.csr_matrix(P),
                           escape=1.0 - P.sum(axis=1))


def dense_minimal_oracle(P, target_mask, g, rate=1.0):
    """Independent oracle: solve (I - r*H) f = g densely, H = P with target
    columns zeroed.  Valid whenever the restricted spectral radius < 1/r."""
    P = np.asarray(P, dtype=float)
    H = P * (~np.asarray(target_mask, bool))[None, :]
    n = P.shape[0]
    return np.linalg.solve(np.eye(n) - rate * H, np.asarray(g, float))


@pytest.fixture
def chain3():
    """0 -> 1 -> {0 w.p. 1/2, 2 w.p. 1/2}, 2 -> 0.  E tau_0 = (2.5, 1.5, 1)."""
    P = np.array([[0.0, 1.0, 0.0], [0.5, 0.0, 0.5], [1.0, 0.0, 0.0]])
    return finite_from_matrix(P)


@pytest.fixture
def chain3_kernel():
    return countable_kernel(
        [([1.0], [1.0]), ([0.0, 2.0], [0.5, 0.5]), ([0.0], [1.0])],
        name="chain3",
    )


@pytest.fixture
def chain2_geometric():
    """0 -> 1, 1 -> {0 w.p. q, 1 w.p. 1-q} with q = 1/2: E_0 tau = 3."""
    P = np.array([[0.0, 1.0], [0.5, 0.5]])
    return finite_from_matrix(P)
