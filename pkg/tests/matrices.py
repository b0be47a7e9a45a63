# Shared test matrices.
import numpy as np

# Simple random walk on {0,1,2,3} absorbed at both ends
ABSORBED_SRW = np.array([
    [1.0, 0.0, 0.0, 0.0],
    [0.5, 0.0, 0.5, 0.0],
    [0.0, 0.5, 0.0, 0.5],
    [0.0, 0.0, 0.0, 1.0],
])
ABSORBED_SRW_DIAGONAL = np.diag([0.0, 1.0, 1.0, 0.0])

# Two extremal columns, one mixture, one duplicate
CONE_H = np.array([
    [2.0, 0.0, 1.0, 0.0],
    [0.0, 2.0, 1.0, 2.0],
])
CONE_L = np.array([
    [-1.0, 1.0],
    [1.0, -1.0],
])

TWO_STATE_L = np.array([
    [-2.0, 2.0],
    [1.0, -1.0],
])


def random_stochastic(rng: np.random.Generator, n: int) -> np.ndarray:
    P = rng.random((n, n))
    return P / P.sum(axis=1, keepdims=True)


def random_monotone(rng: np.random.Generator, n: int) -> np.ndarray:
    """Rows with upper tails increasing in the row index"""
    # sorting rows then columns keeps the rows sorted
    U = -np.sort(-rng.random((n, n - 1)), axis=1)
    U = np.sort(U, axis=0)
    tails = np.hstack([np.ones((n, 1)), U, np.zeros((n, 1))])
    return tails[:, :-1] - tails[:, 1:]
