"""Tests for QP assembly of the nominal, tracking, robust and relaxed problems."""
import numpy as np
import pytest
from pydantic import ValidationError

from builders.problem_builder import ProblemBuilder, assemble_parameter, lyapunov_terminal_weight
from control.models import DDPCSpec, EquilibriumTarget, ReferenceTarget, TrajectoryData
from data.hankel import slice_hankel
from errors import ConfigError, DimensionMismatchError
from solvers.qp_oracle import solve_qp


def _view(L=3, n=1, m=1, p=1, N=40, seed=0):
    rng = np.random.default_rng(seed)
    data = TrajectoryData(u=rng.uniform(-1, 1, (N, m)), y=rng.standard_normal((N, p)))
    return slice_hankel(data, L=L, n=n, require_persistency=False)


def _horizon_cost(hv, alpha, Q, R, rho, u_s, y_s):
    u = hv.HuF @ alpha - np.tile(u_s, hv.L)
    y = hv.HyF @ alpha - np.tile(y_s, hv.L)
    return 0.5 * (Q * y @ y + R * u @ u + rho * alpha @ alpha)


def test_nominal_dimensions():
    """Test decision, equality and parameter sizes of the nominal QP."""
    hv = _view()
    spec = DDPCSpec(L=3, n=1, u_min=-1.0, u_max=1.0)
    qp = ProblemBuilder(spec, hv).build()
    assert qp.variant == "nominal"
    assert qp.n_d == hv.n_alpha
    assert qp.n_eq == 2 * 1 * (1 + 1)
    assert qp.n_chi == 4
    assert qp.layout == {"chi0": (0, 2), "chiL": (2, 4)}
    assert qp.n_in == 2 * 3


def test_nominal_objective_matches_horizon_cost():
    """Test that the QP objective differs from the half horizon cost by a constant."""
    hv = _view()
    spec = DDPCSpec(L=3, n=1, Q=2.0, R=0.5, rho_alpha=0.3, u_s=0.4, y_s=-0.2, ridge_center="origin")
    qp = ProblemBuilder(spec, hv).build()
    chi = np.zeros(qp.n_chi)
    rng = np.random.default_rng(1)
    offsets = []
    for _ in range(3):
        alpha = rng.standard_normal(hv.n_alpha)
        cost = _horizon_cost(hv, alpha, 2.0, 0.5, 0.3, [0.4], [-0.2])
        offsets.append(qp.objective(alpha, chi) - cost)
    np.testing.assert_allclose(offsets, offsets[0], atol=1e-9)


def test_centered_ridge_objective():
    """Test that the default ridge penalizes the distance to the equilibrium alpha."""
    hv = _view()
    spec = DDPCSpec(L=3, n=1, Q=2.0, R=0.5, rho_alpha=0.3, u_s=0.4, y_s=-0.2)
    builder = ProblemBuilder(spec, hv)
    qp = builder.build()
    alpha_s = builder.equilibrium_alpha()
    chi = np.zeros(qp.n_chi)
    rng = np.random.default_rng(1)
    offsets = []
    for _ in range(3):
        alpha = rng.standard_normal(hv.n_alpha)
        cost = _horizon_cost(hv, alpha, 2.0, 0.5, 0.0, [0.4], [-0.2]) + 0.15 * np.sum((alpha - alpha_s) ** 2)
        offsets.append(qp.objective(alpha, chi) - cost)
    np.testing.assert_allclose(offsets, offsets[0], atol=1e-9)


def test_ridge_centers_agree_at_zero_equilibrium():
    hv = _view()
    centered = ProblemBuilder(DDPCSpec(L=3, n=1, rho_alpha=0.7), hv).build()
    origin = ProblemBuilder(DDPCSpec(L=3, n=1, rho_alpha=0.7, ridge_center="origin"), hv).build()
    np.testing.assert_array_equal(centered.c0, origin.c0)
    np.testing.assert_array_equal(centered.W, origin.W)


def test_alpha_norm_shrinks_with_ridge_weight():
    """Test that |alpha| of the solved nominal problem is non-increasing in rho_alpha."""
    hv = _view(L=4, n=2, N=60, seed=3)
    chi = np.concatenate([[0.5, -0.3], [1.0, 0.8], np.zeros(4)])
    norms = []
    for rho in [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0]:
        spec = DDPCSpec(L=4, n=2, Q=1.0, R=0.1, rho_alpha=rho, u_min=-1.5, u_max=1.5)
        solution = solve_qp(ProblemBuilder(spec, hv).build(), chi)
        assert solution.status == "optimal"
        norms.append(np.linalg.norm(solution.alpha))
    assert all(later <= earlier * (1 + 1e-8) + 1e-9 for earlier, later in zip(norms, norms[1:]))
    assert norms[-1] < norms[0]


def test_weight_is_symmetric_and_ridge_bounded():
    """Test that W is symmetric with eigenvalues at least rho_alpha."""
    hv = _view()
    qp = ProblemBuilder(DDPCSpec(L=3, n=1, rho_alpha=0.7), hv).build()
    np.testing.assert_array_equal(qp.W, qp.W.T)
    assert np.linalg.eigvalsh(qp.W).min() >= 0.7 - 1e-9


def test_robust_adds_output_slack():
    """Test that the robust QP carries one slack per output sample."""
    hv = _view(L=3, n=1, p=2)
    spec = DDPCSpec(variant="robust", L=3, n=1, rho_sigma=100.0)
    qp = ProblemBuilder(spec, hv).build()
    assert qp.n_d == hv.n_alpha + 2 * (3 + 1)
    # slack block of W is rho_sigma on the diagonal
    slack = qp.W[hv.n_alpha:, hv.n_alpha:]
    assert np.all(np.diag(slack) >= 100.0)


def test_robust_requires_slack_weight():
    """Test that the robust variant needs rho_sigma."""
    hv = _view()
    with pytest.raises(ConfigError):
        ProblemBuilder(DDPCSpec(variant="robust", L=3, n=1), hv).build()


def test_relaxed_requires_terminal_weight():
    """Test that the relaxed variant needs P."""
    hv = _view()
    with pytest.raises(ConfigError):
        ProblemBuilder(DDPCSpec(variant="relaxed", L=3, n=1), hv).build()


def test_relaxed_keeps_initial_equalities_only():
    """Test that the relaxed QP is parameterized by chi0 alone."""
    hv = _view()
    spec = DDPCSpec(variant="relaxed", L=3, n=1, P=1.0)
    qp = ProblemBuilder(spec, hv).build()
    assert qp.n_eq == 2
    assert qp.layout == {"chi0": (0, 2)}


def test_tracking_layout():
    """Test the decision vector and parameter layout of the tracking QP."""
    hv = _view(L=3, n=1, m=1, p=2)
    spec = DDPCSpec(variant="tracking", L=3, n=1, Psi=1.0, Phi=[1.0, 2.0], us_min=-1.0, us_max=1.0)
    qp = ProblemBuilder(spec, hv).build()
    assert qp.n_d == hv.n_alpha + 1 + 2
    assert qp.layout == {"chi0": (0, 3), "u_r": (3, 4), "y_r": (4, 6)}
    assert qp.n_eq == 2 * 3
    # u^s bounds are the last two inequality rows
    assert qp.n_in == 2
    np.testing.assert_array_equal(qp.G_in[:, hv.n_alpha], [1.0, -1.0])


def test_builder_rejects_mismatched_view():
    """Test that a view built with another horizon is rejected."""
    hv = _view(L=3, n=1)
    with pytest.raises(DimensionMismatchError):
        ProblemBuilder(DDPCSpec(L=4, n=1), hv)


def test_builder_rejects_indefinite_weights():
    """Test that R must be positive definite."""
    hv = _view()
    with pytest.raises(ConfigError):
        ProblemBuilder(DDPCSpec(L=3, n=1, R=0.0), hv)


def test_spec_rejects_short_horizon():
    """Test that L < n is invalid."""
    with pytest.raises(ValidationError):
        DDPCSpec(L=1, n=2)


def test_spec_rejects_unknown_keys():
    """Test that misspelled settings are not silently ignored."""
    with pytest.raises(ValidationError):
        DDPCSpec(L=2, n=1, horizon=5)


def test_assemble_parameter_order():
    """Test chi = [u window; y window; target]."""
    past_u = np.array([[1.0], [2.0], [3.0]])
    past_y = np.array([[10.0, 11.0], [20.0, 21.0], [30.0, 31.0]])
    chi = assemble_parameter(past_u, past_y, 2, EquilibriumTarget(u_s=[0.5], y_s=[1.0, 2.0]))
    np.testing.assert_array_equal(chi.chi, [2, 3, 20, 21, 30, 31, 0.5, 0.5, 1, 2, 1, 2])
    start, stop = chi.layout["chiL"]
    np.testing.assert_array_equal(chi.chi[start:stop], [0.5, 0.5, 1, 2, 1, 2])


def test_assemble_parameter_reference():
    """Test that a reference target appends (u^r, y^r)."""
    chi = assemble_parameter(np.zeros(2), np.ones(2), 2, ReferenceTarget(u_r=[1.0], y_r=[3.0]))
    assert chi.layout == {"chi0": (0, 4), "u_r": (4, 5), "y_r": (5, 6)}
    np.testing.assert_array_equal(chi.chi[4:], [1.0, 3.0])


def test_assemble_parameter_short_window():
    """Test that a window shorter than n is rejected."""
    with pytest.raises(DimensionMismatchError):
        assemble_parameter(np.zeros(1), np.zeros(1), 2)


def test_freeze_matches_full_parameter():
    """Test that freezing chiL gives the same objective and constraints."""
    hv = _view()
    spec = DDPCSpec(L=3, n=1, u_min=-1.0, u_max=1.0)
    builder = ProblemBuilder(spec, hv)
    qp = builder.build()
    frozen = qp.freeze("chiL", builder.terminal_stack())
    assert frozen.n_chi == 2
    assert "chiL" in frozen.frozen_segments

    chi0 = np.array([0.3, -0.1])
    chi = np.concatenate([chi0, builder.terminal_stack()])
    alpha = np.random.default_rng(2).standard_normal(hv.n_alpha)
    assert frozen.objective(alpha, chi0) == pytest.approx(qp.objective(alpha, chi))
    np.testing.assert_allclose(frozen.equality_rhs(chi0), qp.equality_rhs(chi))
    np.testing.assert_allclose(frozen.inequality_rhs(chi0), qp.inequality_rhs(chi))


def test_lyapunov_terminal_weight_solves_equation():
    """Test A'PA - P + Q = 0 for a stable matrix."""
    A = np.array([[0.5, 0.1], [0.0, 0.8]])
    Q = np.eye(2)
    P = lyapunov_terminal_weight(A, Q)
    np.testing.assert_allclose(A.T @ P @ A - P + Q, 0.0, atol=1e-10)


def test_lyapunov_terminal_weight_rejects_unstable():
    """Test that an unstable predictor has no Lyapunov weight."""
    with pytest.raises(ConfigError):
        lyapunov_terminal_weight(np.array([[1.2]]), np.eye(1))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
