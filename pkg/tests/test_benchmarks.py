"""Tests for cross-validation, timing and the benchmark studies.

The full studies take minutes; they run only with REDDPC_RUN_BENCHMARKS=true.
"""
import math
from unittest.mock import patch

import numpy as np
import pytest

from config import Config
from errors import CrossValidationError, SynthesisError
from services.benchmark_service import (
    BenchmarkService,
    CVProtocol,
    benchmark_timing,
    box_sampler,
    controller_target,
    cross_validate_rho,
)
from services.controller_service import ControllerService
from services.simulation_service import (
    ExplicitController,
    ImplicitController,
    generate_dataset,
    initial_window,
    metric_rmse,
    run_closed_loop,
)

slow = pytest.mark.skipif(not Config.RUN_BENCHMARKS, reason="set REDDPC_RUN_BENCHMARKS=true to run")


def test_single_candidate_is_selected(siso_plant, siso_noisy):
    """Test that a one-point grid returns its only weight."""
    cv = generate_dataset(siso_plant.system, 100, -5.0, 5.0, seed=9, snr_db=20.0)
    result = cross_validate_rho(
        siso_plant.system, siso_noisy, cv, [5.0], siso_plant.spec, CVProtocol(horizon=10, n_windows=2)
    )
    assert result.best_rho == 5.0
    assert math.isfinite(result.best_score)
    assert len(result.scores) == 1


def test_failed_candidates_score_infinity(siso_plant, siso_noisy):
    """Test that candidates whose synthesis fails are ranked last."""
    real_synthesize = ControllerService.synthesize

    def flaky(self, data, *args, **kwargs):
        if self.spec.rho_alpha < 1.0:
            raise SynthesisError("forced failure")
        return real_synthesize(self, data, *args, **kwargs)

    cv = generate_dataset(siso_plant.system, 100, -5.0, 5.0, seed=9, snr_db=20.0)
    with patch.object(ControllerService, "synthesize", flaky):
        result = cross_validate_rho(
            siso_plant.system, siso_noisy, cv, [0.1, 5.0], siso_plant.spec, CVProtocol(horizon=10, n_windows=1)
        )
    assert result.best_rho == 5.0
    assert result.scores[0].score == math.inf
    assert "forced failure" in result.scores[0].diagnostics


def test_every_candidate_failing(siso_plant, siso_noisy):
    """Test that a grid without any finite score raises with diagnostics."""
    with patch.object(ControllerService, "synthesize", side_effect=SynthesisError("no law")):
        with pytest.raises(CrossValidationError) as exc_info:
            cross_validate_rho(siso_plant.system, siso_noisy, siso_noisy, [1.0, 2.0], siso_plant.spec)
    assert set(exc_info.value.diagnostics) == {1.0, 2.0}


def test_empty_grid(siso_plant, siso_noisy):
    """Test that an empty grid is refused."""
    with pytest.raises(CrossValidationError):
        cross_validate_rho(siso_plant.system, siso_noisy, siso_noisy, [], siso_plant.spec)


def test_timing_report_fields(siso_plant, siso_noisy):
    """Test a one-sample timing run."""
    outcome = ControllerService(siso_plant.spec).synthesize(siso_noisy.data)
    report = benchmark_timing(outcome.law, outcome.qp, 1, box_sampler([-1.0] * 6, [1.0] * 6))
    assert report.samples == 1
    assert report.explicit_worst == report.explicit_mean
    assert report.law_bytes > 0
    assert report.implicit_bytes == outcome.qp.storage_bytes()


def test_chi_sampler_centres_on_equilibrium(four_tank_plant):
    """Test that four-tank windows are drawn around the operating point."""
    sampler = BenchmarkService(four_tank_plant, seed=0).chi_sampler()
    rng = np.random.default_rng(0)
    chi = np.array([sampler(rng) for _ in range(50)])
    assert chi.shape == (50, 16)
    assert np.all(np.abs(chi[:, :8] - 1.0) <= 1.0)
    assert np.all(np.abs(chi[:, 8:] - np.tile([0.65, 0.77], 4)) <= 0.5)


def test_controller_target_only_for_tracking(siso_plant):
    """Test that only tracking problems carry a reference segment."""
    assert controller_target(siso_plant.spec, 1, 2) is None
    tracking = siso_plant.spec.model_copy(update={"variant": "tracking", "u_s": 0.5})
    target = controller_target(tracking, 1, 2)
    assert target.u_r == [0.5]
    assert target.y_r == [0.0, 0.0]


def test_monte_carlo_needs_two_runs(siso_plant):
    """Test the run-count guard of the Monte Carlo study."""
    with pytest.raises(ValueError):
        BenchmarkService(siso_plant).monte_carlo_study([20.0], 1)


def test_four_tank_explicit_matches_implicit(four_tank_plant):
    """Test that the single-region law reproduces the online solve in closed loop."""
    dataset = generate_dataset(four_tank_plant.system, 400, -1.0, 1.0, seed=0)
    outcome = ControllerService(four_tank_plant.spec).synthesize(dataset.data)
    window = initial_window(four_tank_plant.system, np.zeros(4), 4)
    explicit = run_closed_loop(
        four_tank_plant.system, ExplicitController(outcome.law), outcome.spec, 60, window
    )
    implicit = run_closed_loop(
        four_tank_plant.system, ImplicitController(outcome.qp), outcome.spec, 60, window
    )
    assert metric_rmse(explicit.y_traj, implicit.y_traj) <= 1e-6


def test_four_tank_law_is_smaller_than_implicit_data(four_tank_plant):
    """Test that the stored law takes fewer bytes than the matrices of the online solve."""
    dataset = generate_dataset(four_tank_plant.system, 400, -1.0, 1.0, seed=0, process_noise=False)
    outcome = ControllerService(four_tank_plant.spec).synthesize(dataset.data)
    sampler = BenchmarkService(four_tank_plant, seed=0).chi_sampler()
    report = benchmark_timing(outcome.law, outcome.qp, 5, sampler)
    assert report.explicit_misses == 0
    assert report.implicit_failures == 0
    assert report.law_bytes < report.implicit_bytes


@slow
def test_siso_study(siso_plant):
    """
    Test the SISO benchmark: 20 dB training and CV records, rho_alpha picked by
    cross-validation, law checked against the online solve on 1000 sampled
    windows, then 50 noiseless closed-loop steps from x0 = (1, 1) compared with
    the law built from noiseless data.
    """
    report = BenchmarkService(siso_plant, seed=0).siso_study(n_samples=1000)
    assert report.oracle_misses == 0
    u_scale = 1.0 + float(np.max(np.abs(report.closed_loop.u_traj)))
    assert report.oracle_discrepancy <= 1e-6 * u_scale
    assert report.closed_loop.steps == 50
    assert 0.005 <= report.rmse_o <= 0.06


@slow
def test_four_tank_study(four_tank_plant):
    """
    Test the four-tank study: 30 training records with measurement noise only,
    600 noiseless closed-loop steps each, and timing over 10000 windows.
    """
    report = BenchmarkService(four_tank_plant, seed=0, max_workers=4).four_tank_study(runs=30, n_timing=10_000)
    assert report.timing.samples == 10_000
    assert report.n_regions == 1
    assert report.failures == 0
    assert report.unstable_pct == 0.0
    assert abs(report.J_mean - 9.0) <= 0.15 * 9.0
    assert report.J_std <= 0.5
    assert report.rmse_ie <= 1e-6
    assert report.timing.explicit_mean * 100 <= report.timing.implicit_mean
    assert report.timing.law_bytes < report.timing.implicit_bytes
    assert report.timing.explicit_misses == 0


@slow
def test_monte_carlo_noise_levels(siso_plant):
    """
    Test rho_alpha and RMSE_O over 40, 30, 20 and 10 dB with 30 runs per level:
    both means grow as the SNR drops and the 20 dB level sits in its band.
    """
    levels = [40.0, 30.0, 20.0, 10.0]
    rows = BenchmarkService(siso_plant, seed=0, max_workers=4).monte_carlo_study(levels, 30)
    assert [row.snr_db for row in rows] == levels
    rho_means = [row.rho_mean for row in rows]
    rmse_means = [row.rmse_mean for row in rows]
    assert all(later >= earlier for earlier, later in zip(rho_means, rho_means[1:]))
    assert all(later >= earlier for earlier, later in zip(rmse_means, rmse_means[1:]))
    twenty = rows[2]
    assert twenty.failures == 0
    assert 3.0 <= twenty.rho_mean <= 10.0
    assert 0.005 <= twenty.rmse_mean <= 0.06


@slow
def test_monte_carlo_noiseless_level(siso_plant):
    """Test that noiseless records reproduce the oracle closed loop."""
    rows = BenchmarkService(siso_plant, seed=0, max_workers=4).monte_carlo_study([None], 5)
    assert rows[0].rmse_mean <= 1e-3


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
