"""Dense linear-algebra helpers shared by the builders, solvers and verification code."""
import logging
from typing import List, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from config import Config
from errors import ConfigError

logger = logging.getLogger(__name__)

WeightLike = Union[float, int, Sequence[float], Sequence[Sequence[float]], np.ndarray]


def rank_tolerance(matrix: np.ndarray, sigma_max: float, exponent: Optional[int] = None) -> float:
    """Singular-value cutoff: max-dim * sigma_max * 2^-exponent."""
    exponent = Config.RANK_EXPONENT if exponent is None else exponent
    return max(matrix.shape) * sigma_max * 2.0 ** (-exponent)


def numerical_rank(matrix: np.ndarray, exponent: Optional[int] = None) -> int:
    """
    Numerical rank from singular values with a relative threshold.

    Args:
        matrix: Any 2-D array (empty arrays have rank 0)
        exponent: Override of the configured threshold exponent

    Returns:
        Number of singular values above the threshold
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.size == 0:
        return 0
    singular_values = np.linalg.svd(matrix, compute_uv=False)
    if singular_values[0] == 0.0:
        return 0
    tol = rank_tolerance(matrix, singular_values[0], exponent)
    return int(np.sum(singular_values > tol))


def has_full_row_rank(matrix: np.ndarray) -> bool:
    return numerical_rank(matrix) == np.atleast_2d(matrix).shape[0]


def independent_rows(matrix: np.ndarray) -> List[int]:
    """
    Indices of a maximal set of linearly independent rows.

    QR with column pivoting on the transpose ranks the rows; the kept indices are
    returned sorted so the original row order survives.
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.shape[0] == 0:
        return []
    rank = numerical_rank(matrix)
    if rank == matrix.shape[0]:
        return list(range(matrix.shape[0]))
    _, _, pivots = scipy.linalg.qr(matrix.T, mode="economic", pivoting=True)
    return sorted(int(i) for i in pivots[:rank])


def is_symmetric(matrix: np.ndarray, tol: float = 1e-10) -> bool:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(matrix))) if matrix.size else 1.0)
    return bool(np.allclose(matrix, matrix.T, atol=tol * scale, rtol=0.0))


def min_eigenvalue(matrix: np.ndarray) -> float:
    """Smallest eigenvalue of the symmetric part."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.size == 0:
        return np.inf
    return float(np.linalg.eigvalsh(0.5 * (matrix + matrix.T))[0])


def is_psd(matrix: np.ndarray, tol: float = 1e-10) -> bool:
    matrix = np.asarray(matrix, dtype=float)
    scale = max(1.0, float(np.max(np.abs(matrix))) if matrix.size else 1.0)
    return is_symmetric(matrix) and min_eigenvalue(matrix) >= -tol * scale


def is_pd(matrix: np.ndarray) -> bool:
    return is_symmetric(matrix) and min_eigenvalue(matrix) > 0.0


def as_weight_matrix(value: WeightLike, dim: int, name: str) -> np.ndarray:
    """
    Expand a configured weight into a dim x dim matrix.

    Scalars are multiples of the identity, flat lists are diagonals and nested
    lists are taken as full matrices.

    Raises:
        ConfigError: If the value does not fit the requested dimension
    """
    array = np.asarray(value, dtype=float)
    if array.ndim == 0:
        return float(array) * np.eye(dim)
    if array.ndim == 1:
        if array.shape[0] != dim:
            raise ConfigError(f"{name} diagonal has {array.shape[0]} entries, expected {dim}")
        return np.diag(array)
    if array.shape != (dim, dim):
        raise ConfigError(f"{name} has shape {array.shape}, expected ({dim}, {dim})")
    return array.copy()


def as_vector(value: Union[float, Sequence[float], np.ndarray], dim: int, name: str) -> np.ndarray:
    """Broadcast a scalar or check a list against the requested length."""
    array = np.asarray(value, dtype=float)
    if array.ndim == 0:
        return np.full(dim, float(array))
    array = array.reshape(-1)
    if array.shape[0] != dim:
        raise ConfigError(f"{name} has {array.shape[0]} entries, expected {dim}")
    return array


def readonly(array: np.ndarray) -> np.ndarray:
    """Float copy of an array with the write flag cleared."""
    result = np.array(array, dtype=float, copy=True)
    result.flags.writeable = False
    return result
