"""
Comparison between the data-driven problem and its model-based twin.

The model-based side uses one-step predictors fitted on the same data:
x+ = B_hat u + A_hat x when the outputs are the state, or the same recursion
on the non-minimal state z_k = [u_{k-n}; ...; u_{k-1}; y_{k-n}; ...; y_{k-1}]
otherwise. Everything here is verification code run by the `verify` command
and the test-suite; none of it sits on the controller path.
"""
import logging
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, Field

from builders.problem_builder import ProblemBuilder, lyapunov_terminal_weight
from config import Config
from control.models import (
    CompactQP,
    DataMatrices,
    DDPCSpec,
    HalfspaceSet,
    HankelView,
    Predictor,
    SelectionMaps,
    TrajectoryData,
    WeightMapping,
)
from data.hankel import is_noiseless, slice_hankel
from errors import ConfigError, DimensionMismatchError, InsufficientDataError, RankDeficientError, VerificationError
from solvers.qp_oracle import solve_qp
from utils.linalg import numerical_rank

logger = logging.getLogger(__name__)

Kind = Literal["state", "output"]

MODEL_TOL = 1e-8
COST_TOL = 1e-10
PROBLEM_TOL = 1e-6


def build_nonminimal_state(u: np.ndarray, y: np.ndarray, n: int, k: int) -> np.ndarray:
    """
    Stack the n input/output pairs preceding time k, oldest first: inputs, then outputs.

    Raises:
        InsufficientDataError: k < n or k beyond the record
    """
    u = np.asarray(u, dtype=float).reshape(len(u), -1)
    y = np.asarray(y, dtype=float).reshape(len(y), -1)
    if k < n:
        raise InsufficientDataError(f"non-minimal state at k={k} needs n={n} past samples")
    if k > min(u.shape[0], y.shape[0]):
        raise InsufficientDataError(f"non-minimal state at k={k} reaches past the {u.shape[0]}-sample record")
    return np.concatenate([u[k - n:k].reshape(-1), y[k - n:k].reshape(-1)])


def build_data_matrices(data: TrajectoryData, n: int, kind: Kind) -> DataMatrices:
    """
    Time-aligned snapshots for the one-step predictor, starting at sample n.

    In the state case the outputs are the state: columns k = n..N-2 hold
    (u_k, y_k, y_{k+1}). In the output case columns k = n..N-1 hold
    (u_k, z_k, z_{k+1}).
    """
    if kind == "state":
        columns = range(n, data.N - 1)
        X0 = data.y[n:data.N - 1].T
        X1 = data.y[n + 1:].T
    else:
        columns = range(n, data.N)
        X0 = np.column_stack([build_nonminimal_state(data.u, data.y, n, k) for k in columns])
        X1 = np.column_stack([build_nonminimal_state(data.u, data.y, n, k + 1) for k in columns])
    if len(columns) == 0:
        raise InsufficientDataError(f"{data.N} samples leave no snapshot column for n={n}")
    return DataMatrices(
        kind=kind,
        U=data.u[list(columns)].T,
        X0=X0,
        X1=X1,
        n=n,
        m=data.m,
        p=data.p,
    )


def data_predictor(dm: DataMatrices, require_full_rank: bool = True) -> Predictor:
    """
    Fit [B_hat, A_hat] = X1 [U; X0]^+ with a minimum-norm right inverse.

    Raises:
        RankDeficientError: [U; X0] is row-rank deficient and require_full_rank is set
    """
    stacked = np.vstack([dm.U, dm.X0])
    rank = numerical_rank(stacked)
    if rank < stacked.shape[0]:
        message = f"[U; X0] has rank {rank} < {stacked.shape[0]} rows"
        if require_full_rank:
            raise RankDeficientError(message)
        logger.warning(f"{message}; using the minimum-norm right inverse")
    rcond = max(stacked.shape) * 2.0 ** (-Config.RANK_EXPONENT)
    M = dm.X1 @ np.linalg.pinv(stacked, rcond=rcond)
    residual = float(np.max(np.abs(dm.X1 - M @ stacked))) if dm.X1.size else 0.0
    logger.info(f"Data predictor ({dm.kind}): rank {rank}, residual {residual:.2e}")
    return Predictor(kind=dm.kind, B_hat=M[:, : dm.m], A_hat=M[:, dm.m:], rank=rank, residual=residual)


def build_selection_maps(n: int, m: int, p: int, predictor: Optional[Predictor] = None) -> SelectionMaps:
    """
    V picks (u_{k-1}, y_{k-1}) out of z_k, Tcal shifts the stored window by one
    sample and, with a state predictor, T rebuilds x_k = B_hat u_{k-1} + A_hat y_{k-1}.
    """
    size = n * (m + p)
    u_last = slice((n - 1) * m, n * m)
    y_last = slice(n * m + (n - 1) * p, size)

    V = np.zeros((m + p, size))
    V[:m, u_last] = np.eye(m)
    V[m:, y_last] = np.eye(p)

    Tcal = np.zeros((size, size))
    Tcal[: (n - 1) * m, m: n * m] = np.eye((n - 1) * m)
    Tcal[n * m: n * m + (n - 1) * p, n * m + p:] = np.eye((n - 1) * p)

    T = None
    if predictor is not None and predictor.kind == "state":
        n_x = predictor.A_hat.shape[0]
        if predictor.A_hat.shape[1] != p:
            raise DimensionMismatchError("state predictor needs the outputs to be the full state")
        T = np.zeros((n_x, size))
        T[:, u_last] = predictor.B_hat
        T[:, y_last] = predictor.A_hat
    return SelectionMaps(V=V, Tcal=Tcal, T=T)


def _propagate(predictor: Predictor, s0: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    states = [s0]
    for u in inputs:
        states.append(predictor.A_hat @ states[-1] + predictor.B_hat @ u)
    return np.asarray(states)


def verify_model_equivalence(
    hv: HankelView,
    dm: DataMatrices,
    trials: int = 20,
    seed: int = 0,
    predictor: Optional[Predictor] = None,
) -> float:
    """
    Largest deviation between Hankel trajectories and the iterated one-step predictor.

    Each trial draws a random alpha, reads the trajectory spanned by the Hankel
    matrices, starts the predictor from the first n pairs and compares the L
    predicted steps (states in the state case, non-minimal states otherwise).
    """
    predictor = predictor or data_predictor(dm, require_full_rank=dm.kind == "state")
    maps = build_selection_maps(hv.n, hv.m, hv.p, predictor)
    rng = np.random.default_rng(seed)
    n, L = hv.n, hv.L
    worst = 0.0
    for _ in range(trials):
        alpha = rng.standard_normal(hv.n_alpha) / np.sqrt(hv.n_alpha)
        u = (hv.Hu @ alpha).reshape(L + n, hv.m)
        y = (hv.Hy @ alpha).reshape(L + n, hv.p)
        z0 = build_nonminimal_state(u, y, n, n)
        if dm.kind == "state":
            predicted = _propagate(predictor, maps.T @ z0, u[n:])[:L]
            actual = y[n:]
        else:
            predicted = _propagate(predictor, z0, u[n:])
            actual = np.vstack([build_nonminimal_state(u, y, n, n + k) for k in range(L + 1)])
        worst = max(worst, float(np.max(np.abs(predicted - actual))))
    return worst


def map_weights(
    kind: Kind,
    Q: np.ndarray,
    R: np.ndarray,
    maps: SelectionMaps,
    P: Optional[np.ndarray] = None,
    P_tilde: Optional[np.ndarray] = None,
) -> WeightMapping:
    """
    Weights of the model-based problem matching the relaxed data-driven one.

    State case: Q~ = Q, R~ = R, P = T'P~T (a data-side P is first projected
    through the pseudo-inverse of T). Output case: Q~ = V'diag(R, Q)V, R~ = 0,
    P~ = P + Q~.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if P is None and P_tilde is None:
        raise ConfigError("either P or P_tilde is needed to map the terminal weight")
    if kind == "state":
        if maps.T is None:
            raise ConfigError("state-case weight mapping needs the reconstruction map T")
        if P_tilde is None:
            T_pinv = np.linalg.pinv(maps.T)
            P_tilde = T_pinv.T @ P @ T_pinv
        P_tilde = 0.5 * (P_tilde + P_tilde.T)
        return WeightMapping(
            kind=kind, Q=Q, R=R, P=maps.T.T @ P_tilde @ maps.T, Q_tilde=Q, R_tilde=R, P_tilde=P_tilde
        )
    Q_tilde = maps.V.T @ scipy.linalg.block_diag(R, Q) @ maps.V
    R_tilde = np.zeros_like(R)
    if P_tilde is None:
        P_tilde = P + Q_tilde
    else:
        P = P_tilde - Q_tilde
    return WeightMapping(kind=kind, Q=Q, R=R, P=P, Q_tilde=Q_tilde, R_tilde=R_tilde, P_tilde=P_tilde)


def terminal_weight_from_data(
    kind: Kind,
    Q: np.ndarray,
    R: np.ndarray,
    predictor: Predictor,
    maps: SelectionMaps,
) -> WeightMapping:
    """
    Terminal weight from the discrete Lyapunov equation of the data predictor.

    The output case falls back to P = 0 when the non-minimal predictor is not
    Schur stable.
    """
    if kind == "state":
        P_tilde = lyapunov_terminal_weight(predictor.A_hat, Q)
        return map_weights(kind, Q, R, maps, P_tilde=P_tilde)
    Q_tilde = maps.V.T @ scipy.linalg.block_diag(np.atleast_2d(R), np.atleast_2d(Q)) @ maps.V
    try:
        P_tilde = lyapunov_terminal_weight(predictor.A_hat, Q_tilde)
    except ConfigError as e:
        logger.warning(f"{e}; terminal weight set to zero")
        P_tilde = Q_tilde
    return map_weights(kind, Q, R, maps, P_tilde=P_tilde)


def resolve_weights(spec: DDPCSpec, maps: SelectionMaps, predictor: Optional[Predictor], m: int, p: int) -> WeightMapping:
    """Weight mapping for a relaxed spec; without a given P the terminal weight comes from data."""
    kind: Kind = "state" if spec.state_measured else "output"
    Q, R = spec.matrix("Q", p), spec.matrix("R", m)
    if spec.terminal_weight == "lyapunov" or spec.P is None:
        if predictor is None:
            raise ConfigError("a data predictor is needed for the lyapunov terminal weight")
        return terminal_weight_from_data(kind, Q, R, predictor, maps)
    return map_weights(kind, Q, R, maps, P=spec.matrix("P", spec.n * (m + p)))


def build_predictor_qp(
    spec: DDPCSpec,
    predictor: Predictor,
    maps: SelectionMaps,
    weights: WeightMapping,
) -> CompactQP:
    """
    Condensed model-based problem over the input sequence, parameterized by chi0.

    The predicted states s_0..s_L start at T chi0 (state case) or chi0 itself
    (output case) and are stacked as Gamma s_0 + Xi u. The horizon weight is
    blockdiag(Q~, ..., Q~, P~); input and output constraints are the same sets
    as in the data-driven problem.
    """
    L, n = spec.L, spec.n
    m = predictor.B_hat.shape[1]
    p = maps.V.shape[0] - m
    n_s = predictor.A_hat.shape[0]
    n_chi = n * (m + p)
    M0 = maps.T if weights.kind == "state" else np.eye(n_chi)
    if M0 is None:
        raise ConfigError("state-case predictor problem needs the reconstruction map T")

    Gamma = np.zeros(((L + 1) * n_s, n_s))
    Xi = np.zeros(((L + 1) * n_s, L * m))
    Gamma[:n_s] = np.eye(n_s)
    for k in range(L):
        rows, prev = slice((k + 1) * n_s, (k + 2) * n_s), slice(k * n_s, (k + 1) * n_s)
        Gamma[rows] = predictor.A_hat @ Gamma[prev]
        Xi[rows] = predictor.A_hat @ Xi[prev]
        Xi[rows, k * m:(k + 1) * m] = predictor.B_hat

    Qs = scipy.linalg.block_diag(*([weights.Q_tilde] * L + [weights.P_tilde]))
    R_stack = np.kron(np.eye(L), weights.R_tilde)
    u_s, y_s = spec.equilibrium(m, p)
    window_target = np.concatenate([np.tile(u_s, n), np.tile(y_s, n)])
    if weights.kind == "state":
        target = np.concatenate([np.tile(y_s, L), maps.T @ window_target])
    else:
        target = np.tile(window_target, L + 1)

    W = Xi.T @ Qs @ Xi + R_stack
    C_par = Xi.T @ Qs @ Gamma @ M0
    c0 = -(Xi.T @ Qs @ target + R_stack @ np.tile(u_s, L))

    rows: List[np.ndarray] = []
    phis: List[np.ndarray] = []
    bounds: List[np.ndarray] = []
    input_set = spec.input_set(m)
    if input_set.size:
        rows.append(np.kron(np.eye(L), input_set.A))
        phis.append(np.zeros((L * input_set.size, n_chi)))
        bounds.append(np.tile(input_set.b, L))
    output_set = spec.output_set(p)
    if output_set.size:
        V_y = maps.V[m:] if weights.kind == "output" else np.eye(n_s)
        for k in range(L):
            step = k + 1 if weights.kind == "output" else k
            block = slice(step * n_s, (step + 1) * n_s)
            rows.append(output_set.A @ V_y @ Xi[block])
            phis.append(-output_set.A @ V_y @ Gamma[block] @ M0)
            bounds.append(output_set.b)
    G_in = np.vstack(rows) if rows else np.zeros((0, L * m))
    phi = np.vstack(phis) if phis else np.zeros((0, n_chi))
    beta = np.concatenate(bounds) if bounds else np.zeros(0)

    return CompactQP(
        W=0.5 * (W + W.T),
        c0=c0,
        C_par=C_par,
        H_eq=np.zeros((0, L * m)),
        S_eq=np.zeros((0, n_chi)),
        h_eq=np.zeros(0),
        G_in=G_in,
        beta=beta,
        phi=phi,
        U_map=np.eye(L * m),
        m=m,
        variant=f"predictor-{weights.kind}",
        layout={"chi0": (0, n_chi)},
    )


def data_windows(data: TrajectoryData, n: int, count: int, seed: int = 0) -> List[np.ndarray]:
    """Parameter samples chi0 cut from the record itself, so they are consistent with the data."""
    rng = np.random.default_rng(seed)
    candidates = np.arange(n, data.N + 1)
    picks = rng.choice(candidates, size=min(count, candidates.shape[0]), replace=False)
    return [build_nonminimal_state(data.u, data.y, n, int(k)) for k in sorted(picks)]


def verify_problem_equivalence(
    spec: DDPCSpec,
    hv: HankelView,
    dm: DataMatrices,
    chi_samples: Sequence[np.ndarray],
    rho_alpha: Optional[float] = None,
) -> float:
    """
    Largest first-input discrepancy between the relaxed data-driven problem and
    the model-based problem with mapped weights, both solved by the oracle.

    Samples where either problem is infeasible are skipped and logged.
    """
    if spec.variant != "relaxed":
        spec = spec.model_copy(update={"variant": "relaxed"})
    if rho_alpha is not None:
        spec = spec.model_copy(update={"rho_alpha": rho_alpha})
    predictor = data_predictor(dm, require_full_rank=dm.kind == "state")
    maps = build_selection_maps(hv.n, hv.m, hv.p, predictor)
    weights = resolve_weights(spec, maps, predictor, hv.m, hv.p)
    data_spec = spec.model_copy(update={"P": weights.P.tolist(), "terminal_weight": "given"})
    data_qp = ProblemBuilder(data_spec, hv).build_relaxed()
    model_qp = build_predictor_qp(spec, predictor, maps, weights)

    worst, skipped = 0.0, 0
    for chi in chi_samples:
        data_solution = solve_qp(data_qp, chi)
        model_solution = solve_qp(model_qp, chi)
        if data_solution.status != "optimal" or model_solution.status != "optimal":
            skipped += 1
            continue
        gap = data_qp.first_input(data_solution.alpha) - model_qp.first_input(model_solution.alpha)
        worst = max(worst, float(np.max(np.abs(gap))))
    if skipped:
        logger.warning(f"Skipped {skipped} of {len(chi_samples)} samples where a problem was infeasible")
    return worst


def cost_identity_gap(
    u: np.ndarray,
    y: np.ndarray,
    weights: WeightMapping,
    n: int,
    L: int,
    maps: Optional[SelectionMaps] = None,
) -> float:
    """
    |model-side cost - data-side cost| on one concrete trajectory of n+L samples.

    The data-side cost keeps the constant terms of the initial window that the
    model-side stage weights pick up (the pair at time -1 in the output case,
    the state at time 0 in the state case).
    """
    u = np.asarray(u, dtype=float).reshape(n + L, -1)
    y = np.asarray(y, dtype=float).reshape(n + L, -1)
    Q, R, P = weights.Q, weights.R, weights.P
    z = [build_nonminimal_state(u, y, n, n + k) for k in range(L + 1)]
    data_side = sum(y[n + k] @ Q @ y[n + k] + u[n + k] @ R @ u[n + k] for k in range(L)) + z[L] @ P @ z[L]
    if weights.kind == "output":
        model_side = sum(z[k] @ weights.Q_tilde @ z[k] for k in range(L)) + z[L] @ weights.P_tilde @ z[L]
        data_side += u[n - 1] @ R @ u[n - 1] + y[n - 1] @ Q @ y[n - 1]
    else:
        if maps is None or maps.T is None:
            raise ConfigError("state-case cost identity needs the reconstruction map T")
        x_L = maps.T @ z[L]
        model_side = sum(
            y[n + k] @ weights.Q_tilde @ y[n + k] + u[n + k] @ weights.R_tilde @ u[n + k] for k in range(L)
        ) + x_L @ weights.P_tilde @ x_L
    return float(abs(model_side - data_side))


def lift_constraints(input_set: HalfspaceSet, output_set: HalfspaceSet, n: int) -> HalfspaceSet:
    """The set U^n x Y^n written as halfspaces on the non-minimal state."""
    m, p = input_set.dim, output_set.dim
    A = np.zeros((n * (input_set.size + output_set.size), n * (m + p)))
    A[: n * input_set.size, : n * m] = np.kron(np.eye(n), input_set.A)
    A[n * input_set.size:, n * m:] = np.kron(np.eye(n), output_set.A)
    b = np.concatenate([np.tile(input_set.b, n), np.tile(output_set.b, n)])
    return HalfspaceSet(A=A, b=b)


def lifted_membership_agrees(
    z: np.ndarray,
    lifted: HalfspaceSet,
    input_set: HalfspaceSet,
    output_set: HalfspaceSet,
    n: int,
) -> bool:
    """True when z in the lifted set exactly when each of its (u, y) blocks is admissible."""
    m, p = input_set.dim, output_set.dim
    z = np.asarray(z, dtype=float)
    u_blocks = z[: n * m].reshape(n, m)
    y_blocks = z[n * m:].reshape(n, p)
    blockwise = all(input_set.contains(u, 0.0) for u in u_blocks) and all(
        output_set.contains(y, 0.0) for y in y_blocks
    )
    return lifted.contains(z, 0.0) == blockwise


def initial_state_residual(data: TrajectoryData, maps: SelectionMaps, n: int) -> float:
    """Largest |T z_k - x_k| over the record (state case, outputs are the state)."""
    if maps.T is None:
        raise ConfigError("initial-state check needs the reconstruction map T")
    residuals = [
        np.max(np.abs(maps.T @ build_nonminimal_state(data.u, data.y, n, k) - data.y[k]))
        for k in range(n, data.N)
    ]
    return float(max(residuals)) if residuals else 0.0


class EquivalenceReport(BaseModel):
    """Residuals of every equivalence check on one dataset."""

    kind: Kind
    noiseless: bool
    predictor_rank: int
    predictor_residual: float
    model_residual: float
    initial_state_residual: Optional[float] = None
    cost_identity_gap: float
    lifted_sets_agree: bool
    problem_discrepancy: float
    samples: int
    rho_alpha: float
    failures: List[str] = Field(default_factory=list)


class EquivalenceService:
    """Runs the full set of equivalence checks for a relaxed spec and a dataset."""

    def __init__(self, spec: DDPCSpec, data: TrajectoryData, require_persistency: bool = True):
        self.spec = spec
        self.data = data
        self.kind: Kind = "state" if spec.state_measured else "output"
        self.hv = slice_hankel(data, spec.L, spec.n, require_persistency=require_persistency)
        self.dm = build_data_matrices(data, spec.n, self.kind)
        self.predictor = data_predictor(self.dm, require_full_rank=self.kind == "state")
        self.maps = build_selection_maps(spec.n, data.m, data.p, self.predictor)
        self.weights = resolve_weights(spec, self.maps, self.predictor, data.m, data.p)

    def run(self, n_samples: int = 20, seed: int = 0, rho_alpha: float = 1e-8) -> EquivalenceReport:
        """Compute every residual; on noiseless data each one is compared with its tolerance."""
        n, L = self.spec.n, self.spec.L
        noiseless = is_noiseless(self.hv)
        scale = 1.0 + float(np.max(np.abs(self.data.y)))
        rng = np.random.default_rng(seed)

        model_residual = verify_model_equivalence(self.hv, self.dm, trials=n_samples, seed=seed, predictor=self.predictor)
        state_residual = initial_state_residual(self.data, self.maps, n) if self.kind == "state" else None

        start = int(rng.integers(0, self.data.N - n - L + 1))
        window = slice(start, start + n + L)
        gap = cost_identity_gap(self.data.u[window], self.data.y[window], self.weights, n, L, self.maps)

        input_set, output_set = self.spec.input_set(self.data.m), self.spec.output_set(self.data.p)
        lifted = lift_constraints(input_set, output_set, n)
        samples = data_windows(self.data, n, n_samples, seed)
        sets_agree = all(lifted_membership_agrees(z, lifted, input_set, output_set, n) for z in samples)

        discrepancy = verify_problem_equivalence(self.spec, self.hv, self.dm, samples, rho_alpha=rho_alpha)

        failures: List[str] = []
        if noiseless:
            checks: List[Tuple[str, Optional[float], float]] = [
                ("model equivalence residual", model_residual, MODEL_TOL * scale),
                ("initial-state residual", state_residual, MODEL_TOL * scale),
                ("cost identity gap", gap, COST_TOL * scale ** 2),
                ("problem equivalence discrepancy", discrepancy, PROBLEM_TOL),
            ]
            failures = [
                f"{name} {value:.3e} exceeds {tol:.1e}" for name, value, tol in checks if value is not None and value > tol
            ]
        if not sets_agree:
            failures.append("lifted constraint set disagrees with blockwise membership")

        report = EquivalenceReport(
            kind=self.kind,
            noiseless=noiseless,
            predictor_rank=self.predictor.rank,
            predictor_residual=self.predictor.residual,
            model_residual=model_residual,
            initial_state_residual=state_residual,
            cost_identity_gap=gap,
            lifted_sets_agree=sets_agree,
            problem_discrepancy=discrepancy,
            samples=len(samples),
            rho_alpha=rho_alpha,
            failures=failures,
        )
        logger.info(
            f"Equivalence ({self.kind}, noiseless={noiseless}): model {model_residual:.2e}, "
            f"cost gap {gap:.2e}, input discrepancy {discrepancy:.2e}"
        )
        return report

    def check(self, report: EquivalenceReport) -> None:
        """
        Raises:
            VerificationError: A strict check failed
        """
        if report.failures:
            raise VerificationError("; ".join(report.failures))
