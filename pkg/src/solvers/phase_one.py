"""Chebyshev-ball LP used for region emptiness tests and feasible starting points."""
import logging
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import linprog

from config import Config

logger = logging.getLogger(__name__)


class ChebyshevBall(NamedTuple):
    radius: float
    center: Optional[np.ndarray]
    feasible: bool


def chebyshev_ball(
    A: np.ndarray,
    b: np.ndarray,
    A_eq: Optional[np.ndarray] = None,
    b_eq: Optional[np.ndarray] = None,
    radius_cap: float = 1.0,
) -> ChebyshevBall:
    """
    Largest ball (radius capped) inside {x : A x <= b, A_eq x = b_eq}.

    Solves max r s.t. A x + r ||A_i|| <= b, A_eq x = b_eq, 0 <= r <= radius_cap.
    A lower-dimensional but nonempty set yields radius 0 with a feasible center.

    Returns:
        ChebyshevBall; feasible is False when the LP is infeasible or fails
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    dim = A.shape[1]
    norms = np.sqrt(np.sum(A * A, axis=1))
    cost = np.zeros(dim + 1)
    cost[-1] = -1.0
    A_ub = np.hstack([A, norms[:, None]]) if A.shape[0] else None
    b_ub = b if A.shape[0] else None
    eq_matrix = None
    eq_rhs = None
    if A_eq is not None and np.atleast_2d(A_eq).shape[0]:
        A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
        eq_matrix = np.hstack([A_eq, np.zeros((A_eq.shape[0], 1))])
        eq_rhs = np.asarray(b_eq, dtype=float).reshape(-1)
    bounds = [(None, None)] * dim + [(0.0, radius_cap)]

    result = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=eq_matrix, b_eq=eq_rhs, bounds=bounds, method="highs")
    if result.status == 2:
        return ChebyshevBall(0.0, None, False)
    if result.status != 0:
        logger.warning(f"Phase-1 LP failed ({result.message}); treating the set as empty")
        return ChebyshevBall(0.0, None, False)
    return ChebyshevBall(float(result.x[-1]), result.x[:dim], True)


def prune_region(E: np.ndarray, K: np.ndarray, eps: Optional[float] = None) -> bool:
    """
    Decide whether {chi : E chi <= K} has a nonempty interior.

    Returns:
        True iff the Chebyshev radius exceeds eps (Config.INTERIOR_TOL by default)
    """
    eps = Config.INTERIOR_TOL if eps is None else eps
    E = np.atleast_2d(np.asarray(E, dtype=float))
    K = np.asarray(K, dtype=float).reshape(-1)
    if E.shape[0] == 0:
        return True
    zero_rows = np.all(np.abs(E) <= 1e-14, axis=1)
    if np.any(K[zero_rows] <= eps):
        return False
    E, K = E[~zero_rows], K[~zero_rows]
    if E.shape[0] == 0:
        return True
    ball = chebyshev_ball(E, K)
    return ball.feasible and ball.radius > eps
