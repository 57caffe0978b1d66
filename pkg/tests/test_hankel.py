"""Tests for Hankel construction, persistency of excitation and DD-PC slices."""
import numpy as np
import pytest

from control.models import TrajectoryData
from data.hankel import build_hankel, check_persistency, is_noiseless, slice_hankel
from errors import InsufficientDataError, PersistencyError


def test_build_hankel_scalar_sequence():
    """Test that entry (i, j) is sample i+j."""
    H = build_hankel(np.arange(1.0, 6.0), 2)
    assert H.shape == (2, 4)
    np.testing.assert_array_equal(H, [[1, 2, 3, 4], [2, 3, 4, 5]])


def test_build_hankel_vector_sequence():
    """Test block-row layout for a two-channel sequence."""
    seq = np.array([[1.0, 10.0], [2.0, 20.0], [3.0, 30.0]])
    H = build_hankel(seq, 2)
    np.testing.assert_array_equal(H, [[1, 2], [10, 20], [2, 3], [20, 30]])


def test_build_hankel_depth_too_large():
    """Test that a depth beyond the sequence length is rejected."""
    with pytest.raises(InsufficientDataError):
        build_hankel(np.ones(3), 4)


def test_persistency_of_short_impulse():
    """Test the rank-2 depth-2 Hankel of [0, 0, 0, 1, 0]."""
    report = check_persistency(np.array([0.0, 0.0, 0.0, 1.0, 0.0]), 2)
    assert report.persistent
    assert report.rank == 2


def test_constant_sequence_not_persistent():
    """Test that a constant sequence is not persistently exciting of order 2."""
    report = check_persistency(np.ones(4), 2)
    assert not report.persistent
    assert report.rank == 1
    assert report.required_rank == 2


def test_slice_hankel_blocks(siso_noiseless):
    """Test the past, future and terminal slices of the depth L+n matrices."""
    hv = slice_hankel(siso_noiseless.data, L=2, n=2)
    assert hv.n_alpha == 100 - 4 + 1
    assert hv.HuP.shape == (2, hv.n_alpha)
    assert hv.HuF.shape == (2, hv.n_alpha)
    assert hv.HyP.shape == (4, hv.n_alpha)
    assert hv.HyT.shape == (4, hv.n_alpha)
    # Column 0 starts at sample 0; block row n+k is predicted step k
    u = siso_noiseless.data.u
    np.testing.assert_array_equal(hv.Hu_k(0)[:, 0], u[2])
    np.testing.assert_array_equal(hv.Hu_k(1)[:, 5], u[8])


def test_slice_hankel_rejects_short_record():
    """Test that fewer than L+n samples fail."""
    data = TrajectoryData(u=np.ones(3), y=np.ones(3))
    with pytest.raises(InsufficientDataError):
        slice_hankel(data, L=2, n=2, require_persistency=False)


def test_slice_hankel_rejects_non_persistent_input():
    """Test that a constant input fails the persistency check with its ranks attached."""
    data = TrajectoryData(u=np.ones(40), y=np.zeros(40))
    with pytest.raises(PersistencyError) as exc_info:
        slice_hankel(data, L=2, n=1)
    assert exc_info.value.achieved_rank == 1
    assert exc_info.value.required_rank == 4


def test_slice_hankel_minimal_length_without_check():
    """Test that exactly L+n samples give a single column when the check is off."""
    rng = np.random.default_rng(0)
    data = TrajectoryData(u=rng.standard_normal(4), y=rng.standard_normal(4))
    hv = slice_hankel(data, L=2, n=2, require_persistency=False)
    assert hv.n_alpha == 1


def test_build_hankel_shift_structure():
    """Test that block (i+1, j) equals block (i, j+1) everywhere."""
    seq = np.random.default_rng(3).standard_normal((12, 3))
    H = build_hankel(seq, 4)
    blocks = H.reshape(4, 3, -1)
    for i in range(3):
        np.testing.assert_array_equal(blocks[i + 1, :, :-1], blocks[i, :, 1:])
    np.testing.assert_array_equal(blocks[:, :, 0].reshape(-1), seq[:4].reshape(-1))


def test_hankel_rank_grows_with_record_length():
    """Test rank <= min(depth * channels, columns) and rank non-decreasing in N."""
    seq = np.random.default_rng(4).uniform(-5, 5, (30, 2))
    depth = 4
    ranks = []
    for N in range(depth, seq.shape[0] + 1):
        H = build_hankel(seq[:N], depth)
        rank = np.linalg.matrix_rank(H)
        assert rank <= min(2 * depth, N - depth + 1)
        ranks.append(rank)
    assert all(later >= earlier for earlier, later in zip(ranks, ranks[1:]))
    assert ranks[-1] == 2 * depth


def test_persistency_is_monotone_in_order():
    """Test that excitation of order L implies every lower order."""
    seq = np.random.default_rng(5).uniform(-5, 5, 100)
    assert check_persistency(seq, 6).persistent
    for order in range(1, 6):
        assert check_persistency(seq, order).persistent


def test_slices_tile_the_hankel_matrices(siso_noiseless):
    """Test that past and future slices stack back to Hu, Hy and the terminal slice ends HuF, HyF."""
    hv = slice_hankel(siso_noiseless.data, L=2, n=2)
    np.testing.assert_array_equal(np.vstack([hv.HuP, hv.HuF]), hv.Hu)
    np.testing.assert_array_equal(np.vstack([hv.HyP, hv.HyF]), hv.Hy)
    np.testing.assert_array_equal(hv.HuT, hv.HuF[-hv.n * hv.m:])
    np.testing.assert_array_equal(hv.HyT, hv.HyF[-hv.n * hv.p:])


def test_noise_detection(siso_noiseless, siso_noisy):
    """Test that exact LTI data drop rank and noisy data do not."""
    assert is_noiseless(slice_hankel(siso_noiseless.data, L=2, n=2))
    assert not is_noiseless(slice_hankel(siso_noisy.data, L=2, n=2))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
