"""Block-Hankel matrices, persistency of excitation and DD-PC slices."""
import logging

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from control.models import HankelView, PersistencyReport, TrajectoryData
from errors import ConfigError, InsufficientDataError, PersistencyError
from utils.linalg import numerical_rank

logger = logging.getLogger(__name__)


def _as_sequence(seq: np.ndarray) -> np.ndarray:
    seq = np.asarray(seq, dtype=float)
    if seq.ndim == 1:
        seq = seq.reshape(-1, 1)
    if seq.ndim != 2:
        raise ConfigError(f"expected a sequence of vectors, got shape {seq.shape}")
    return seq


def build_hankel(seq: np.ndarray, depth: int) -> np.ndarray:
    """
    Block-Hankel matrix with `depth` block rows.

    Entry (block row i, column j) is sample i+j of the sequence.

    Args:
        seq: N samples, either a flat array or an N x eta array
        depth: Number of block rows L

    Returns:
        (eta * L) x (N - L + 1) matrix
    """
    seq = _as_sequence(seq)
    length, eta = seq.shape
    if depth < 1:
        raise ConfigError(f"Hankel depth must be at least 1, got {depth}")
    if depth > length:
        raise InsufficientDataError(f"Hankel depth {depth} exceeds sequence length {length}")
    # windows[j, r, i] = seq[i + j, r]
    windows = sliding_window_view(seq, depth, axis=0)
    return np.ascontiguousarray(windows.transpose(2, 1, 0).reshape(depth * eta, length - depth + 1))


def check_persistency(seq: np.ndarray, order: int) -> PersistencyReport:
    """Test whether rank(H_order(seq)) equals eta * order."""
    seq = _as_sequence(seq)
    eta = seq.shape[1]
    required = eta * order
    if order < 1 or seq.shape[0] < order:
        return PersistencyReport(persistent=False, rank=0, required_rank=required, order=order)
    rank = numerical_rank(build_hankel(seq, order))
    return PersistencyReport(persistent=rank == required, rank=rank, required_rank=required, order=order)


def slice_hankel(
    data: TrajectoryData,
    L: int,
    n: int,
    require_persistency: bool = True,
) -> HankelView:
    """
    Build the depth L+n Hankel matrices used by every DD-PC variant.

    Args:
        data: Recorded trajectory
        L: Prediction horizon
        n: System order upper bound
        require_persistency: Reject inputs that are not persistently exciting
            of order L+2n

    Raises:
        InsufficientDataError: N < L+n
        PersistencyError: Input rank below m(L+2n)
    """
    if L < 1 or n < 1:
        raise ConfigError(f"L and n must be positive, got L={L}, n={n}")
    if data.N < L + n:
        raise InsufficientDataError(f"trajectory has {data.N} samples, need at least L+n={L + n}")

    if require_persistency:
        report = check_persistency(data.u, L + 2 * n)
        if not report.persistent:
            raise PersistencyError(
                f"input is not persistently exciting of order {L + 2 * n}: "
                f"rank {report.rank} < {report.required_rank} (N={data.N}, "
                f"at least {data.min_length(L, n)} samples needed)",
                achieved_rank=report.rank,
                required_rank=report.required_rank,
            )

    view = HankelView(
        Hu=build_hankel(data.u, L + n),
        Hy=build_hankel(data.y, L + n),
        L=L,
        n=n,
        m=data.m,
        p=data.p,
    )
    logger.info(f"Built Hankel view L={L}, n={n}, n_alpha={view.n_alpha}")
    return view


def is_noiseless(view: HankelView) -> bool:
    """
    True when the stacked input/output Hankel matrix is row-rank deficient.

    Exact LTI data have rank at most m(L+n) + n_x, so any rank drop signals
    noise-free samples (provided p(L+n) exceeds the true order).
    """
    stacked = np.vstack([view.Hu, view.Hy])
    return numerical_rank(stacked) < min(stacked.shape)
