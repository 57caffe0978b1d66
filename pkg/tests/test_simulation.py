"""Tests for plant simulation, closed-loop runs and metrics."""
import numpy as np
import pytest

from builders.problem_builder import ProblemBuilder
from control.models import ClosedLoopResult
from data.hankel import slice_hankel
from errors import DimensionMismatchError, NoRegionError
from services.controller_service import ControllerService
from services.simulation_service import (
    ExplicitController,
    ImplicitController,
    InitialWindow,
    generate_dataset,
    initial_window,
    measured_snr,
    metric_J,
    metric_rmse,
    run_closed_loop,
    sample_gaussian,
    simulate_step,
)
from solvers.qp_oracle import solve_qp


def test_simulate_step_from_unit_state(siso_plant):
    """Test one noiseless step of the SISO plant from x = (1, 0)."""
    x_next, y = simulate_step(siso_plant.system, np.array([1.0, 0.0]), np.zeros(1))
    np.testing.assert_allclose(x_next, [0.7326, 0.1722])
    np.testing.assert_allclose(y, [1.0, 0.0])


def test_simulate_step_at_rest(siso_plant):
    """Test that zero state and zero input stay at zero."""
    x_next, y = simulate_step(siso_plant.system, np.zeros(2), np.zeros(1))
    np.testing.assert_array_equal(x_next, 0.0)
    np.testing.assert_array_equal(y, 0.0)


def test_simulate_step_rejects_wrong_sizes(siso_plant):
    """Test that a state of the wrong size is rejected."""
    with pytest.raises(DimensionMismatchError):
        simulate_step(siso_plant.system, np.zeros(3), np.zeros(1))


def test_four_tank_operating_point(four_tank_plant):
    """Test that the steady state of u = (1, 1) is a fixed point near the nominal levels."""
    sys_ = four_tank_plant.system.model_copy(update={"Delta": np.zeros((4, 4)), "Upsilon": np.zeros((2, 2))})
    u_s = np.ones(2)
    x_s = sys_.steady_state(u_s)
    x_next, y = simulate_step(sys_, x_s, u_s)
    np.testing.assert_allclose(x_next, x_s, atol=1e-12)
    np.testing.assert_allclose(y, [0.65, 0.77], atol=0.03)


def _four_tank_rest(plant):
    """Exact steady state of u = (1, 1) and the robust spec regulated to it."""
    sys_ = plant.system
    u_s = np.ones(2)
    x_s = sys_.steady_state(u_s)
    y_s = np.asarray(sys_.C) @ x_s
    spec = plant.spec.model_copy(update={"u_s": u_s.tolist(), "y_s": y_s.tolist()})
    return u_s, x_s, y_s, spec


def test_four_tank_rest_window_needs_no_slack(four_tank_plant):
    """Test sigma = 0 and u = u_s for the robust QP at the equilibrium window of exact data."""
    u_s, _, y_s, spec = _four_tank_rest(four_tank_plant)
    data = generate_dataset(four_tank_plant.system, 400, -1.0, 1.0, seed=0, noisy=False).data
    hv = slice_hankel(data, L=spec.L, n=spec.n)
    qp = ProblemBuilder(spec, hv).build()
    window = np.concatenate([np.tile(u_s, spec.n), np.tile(y_s, spec.n)])
    solution = solve_qp(qp, np.concatenate([window, window]))
    assert solution.status == "optimal"
    sigma = solution.alpha[hv.n_alpha:]
    assert np.max(np.abs(sigma)) <= 1e-6
    np.testing.assert_allclose(qp.U_map[:2] @ solution.alpha, u_s, atol=1e-6)


def test_four_tank_law_holds_the_operating_point(four_tank_plant):
    """Test that the robust law started at rest stays at rest on the noiseless plant."""
    u_s, x_s, y_s, spec = _four_tank_rest(four_tank_plant)
    data = generate_dataset(four_tank_plant.system, 400, -1.0, 1.0, seed=0, noisy=False).data
    outcome = ControllerService(spec).synthesize(data)
    window = InitialWindow(past_u=np.tile(u_s, (spec.n, 1)), past_y=np.tile(y_s, (spec.n, 1)), x0=x_s)
    result = run_closed_loop(four_tank_plant.system, ExplicitController(outcome.law), outcome.spec, 20, window)
    assert not result.aborted
    np.testing.assert_allclose(result.u_traj, np.tile(u_s, (20, 1)), atol=1e-6)
    np.testing.assert_allclose(result.y_traj, np.tile(y_s, (result.y_traj.shape[0], 1)), atol=1e-6)
    assert result.J == pytest.approx(0.0, abs=1e-8)


def test_four_tank_record_has_measurement_noise_only(four_tank_plant):
    """Test that the default four-tank training record follows the noiseless state path."""
    assert not four_tank_plant.process_noise_in_data
    noisy = generate_dataset(four_tank_plant.system, 80, -1.0, 1.0, seed=3, process_noise=False)
    clean = generate_dataset(four_tank_plant.system, 80, -1.0, 1.0, seed=3, noisy=False)
    np.testing.assert_allclose(noisy.states, clean.states, atol=1e-12)
    np.testing.assert_allclose(noisy.clean_y, clean.data.y, atol=1e-12)
    assert np.max(np.abs(noisy.data.y - noisy.clean_y)) > 0.0


def test_sample_gaussian_handles_singular_covariance():
    """Test the eigenvalue fallback on a rank-one covariance."""
    cov = np.array([[1.0, 1.0], [1.0, 1.0]])
    draw = sample_gaussian(cov, np.random.default_rng(0))
    assert draw[0] == pytest.approx(draw[1])


def test_dataset_is_reproducible(four_tank_plant):
    """Test that the same seed reproduces excitation and noise."""
    first = generate_dataset(four_tank_plant.system, 50, -1.0, 1.0, seed=5)
    second = generate_dataset(four_tank_plant.system, 50, -1.0, 1.0, seed=5)
    np.testing.assert_array_equal(first.data.y, second.data.y)
    np.testing.assert_array_equal(first.states, second.states)


def test_snr_calibration(siso_plant):
    """Test that the measured SNR is within 1 dB of the requested level."""
    dataset = generate_dataset(siso_plant.system, 2000, -5.0, 5.0, seed=2, snr_db=20.0)
    assert abs(measured_snr(dataset.clean_y, dataset.data.y) - 20.0) <= 1.0


def test_noiseless_dataset_has_no_noise(four_tank_plant):
    """Test that noisy=False switches process and measurement noise off."""
    dataset = generate_dataset(four_tank_plant.system, 30, -1.0, 1.0, seed=0, noisy=False)
    np.testing.assert_array_equal(dataset.data.y, dataset.clean_y)
    np.testing.assert_array_equal(dataset.Upsilon, 0.0)


def test_initial_window_ends_in_state(siso_plant):
    """Test that the past window propagates to the requested state."""
    sys_ = siso_plant.system
    window = initial_window(sys_, [1.0, 1.0], 2)
    assert window.past_u.shape == (2, 1)
    # outputs are the state for this plant
    np.testing.assert_allclose(sys_.A @ window.past_y[-1], [1.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(sys_.A @ window.past_y[0], window.past_y[1], atol=1e-12)


def test_rmse_of_identical_trajectories():
    """Test that identical trajectories have zero RMSE."""
    y = np.random.default_rng(0).standard_normal((10, 2))
    assert metric_rmse(y, y) == 0.0


def test_rmse_averages_channels():
    """Test that an offset d on one of two channels gives d/2."""
    y = np.zeros((10, 2))
    ref = y.copy()
    ref[:, 0] = 0.4
    assert metric_rmse(y, ref) == pytest.approx(0.2)
    assert metric_rmse(y, ref, channels=[1]) == 0.0


def test_rmse_rejects_mismatched_shapes():
    """Test that trajectories must have equal shapes."""
    with pytest.raises(DimensionMismatchError):
        metric_rmse(np.zeros((5, 1)), np.zeros((4, 1)))


def test_cost_index_at_equilibrium_and_scaling():
    """Test J = 0 when pinned at the equilibrium and linearity in Q."""
    result = ClosedLoopResult(
        u_traj=np.ones((5, 1)),
        y_traj=np.full((5, 1), 2.0),
        x_traj=np.zeros((6, 1)),
    )
    Q, R = np.eye(1), np.zeros((1, 1))
    assert metric_J(result, Q, R, np.ones(1), np.full(1, 2.0)) == 0.0
    base = metric_J(result, Q, R, np.zeros(1), np.zeros(1))
    assert base == pytest.approx(20.0)
    assert metric_J(result, 2.0 * Q, R, np.zeros(1), np.zeros(1)) == pytest.approx(2.0 * base)


def test_equilibrium_is_invariant(siso_plant, siso_noiseless):
    """Test that the explicit law keeps the plant at rest."""
    outcome = ControllerService(siso_plant.spec).synthesize(siso_noiseless.data)
    window = InitialWindow(past_u=np.zeros((2, 1)), past_y=np.zeros((2, 2)), x0=np.zeros(2))
    result = run_closed_loop(
        siso_plant.system, ExplicitController(outcome.law), outcome.spec, 20, window
    )
    assert not result.aborted
    assert np.max(np.abs(result.y_traj)) <= 1e-8
    assert result.J == pytest.approx(0.0, abs=1e-12)


def test_explicit_and_implicit_loops_agree(siso_plant, siso_noisy):
    """Test that the law and the online solve produce the same closed loop."""
    outcome = ControllerService(siso_plant.spec).synthesize(siso_noisy.data)
    window = initial_window(siso_plant.system, siso_plant.test_state, 2)
    explicit = run_closed_loop(siso_plant.system, ExplicitController(outcome.law), outcome.spec, 30, window)
    implicit = run_closed_loop(siso_plant.system, ImplicitController(outcome.qp), outcome.spec, 30, window)
    assert explicit.steps == implicit.steps == 30
    np.testing.assert_allclose(explicit.u_traj, implicit.u_traj, atol=1e-6)
    assert metric_rmse(explicit.y_traj, implicit.y_traj) <= 1e-6
    assert all(index >= 0 for index in explicit.region_ids)
    assert np.all(np.abs(explicit.u_traj) <= 2.0 + 1e-9)


def test_noisy_loop_is_seed_deterministic(four_tank_plant):
    """Test that the same seed reproduces a noisy closed loop."""
    sys_ = four_tank_plant.system
    spec = four_tank_plant.spec

    def controller(chi):
        return np.ones(2), -1

    window = initial_window(sys_, np.zeros(4), spec.n)
    first = run_closed_loop(sys_, controller, spec, 15, window, seed=3, noisy=True)
    second = run_closed_loop(sys_, controller, spec, 15, window, seed=3, noisy=True)
    np.testing.assert_array_equal(first.y_traj, second.y_traj)
    third = run_closed_loop(sys_, controller, spec, 15, window, seed=4, noisy=True)
    assert not np.array_equal(first.y_traj, third.y_traj)


def test_missing_region_aborts_run(siso_plant):
    """Test that a controller without a region ends the run early."""
    calls = []

    def controller(chi):
        calls.append(chi)
        if len(calls) > 3:
            raise NoRegionError("outside")
        return np.zeros(1), 0

    window = initial_window(siso_plant.system, [1.0, 0.0], 2)
    result = run_closed_loop(siso_plant.system, controller, siso_plant.spec, 10, window)
    assert result.aborted
    assert result.steps == 3
    assert result.x_traj.shape == (4, 2)


def test_divergence_is_flagged(siso_plant):
    """Test that a huge input is reported as an unstable run."""
    window = initial_window(siso_plant.system, [0.0, 0.0], 2)
    result = run_closed_loop(
        siso_plant.system, lambda chi: (np.array([1e9]), 0), siso_plant.spec, 10, window
    )
    assert not result.stable
    assert not result.aborted
    assert result.steps < 10


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
