"""Plant simulation, closed-loop execution and performance metrics."""
import logging
import time
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from builders.problem_builder import assemble_parameter
from control.models import (
    ClosedLoopResult,
    CompactQP,
    DDPCSpec,
    EquilibriumTarget,
    ExplicitLaw,
    LTISystem,
    ReferenceTarget,
    TrajectoryData,
)
from data.trajectory import generate_excitation
from errors import DimensionMismatchError, NoRegionError, SolverError
from solvers.explicit_mpqp import evaluate
from solvers.qp_oracle import implicit_control

logger = logging.getLogger(__name__)

DIVERGENCE_THRESHOLD = 1e6

Controller = Callable[[np.ndarray], Tuple[np.ndarray, int]]


class InitialWindow(BaseModel):
    """Past n input/output pairs (oldest first) and the plant state at time 0."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    past_u: np.ndarray
    past_y: np.ndarray
    x0: np.ndarray


class SimulatedDataset(BaseModel):
    """Recorded trajectory together with the hidden states and noise level that produced it."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    data: TrajectoryData
    states: np.ndarray
    clean_y: np.ndarray
    Upsilon: np.ndarray


def sample_gaussian(cov: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    Draw from N(0, cov) through a Cholesky factor.

    Near-singular covariances fall back to a square root with clipped eigenvalues.
    """
    cov = np.asarray(cov, dtype=float)
    try:
        factor = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        eigvals, eigvecs = np.linalg.eigh(0.5 * (cov + cov.T))
        factor = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
    return factor @ rng.standard_normal(cov.shape[0])


def simulate_step(
    sys: LTISystem,
    x: np.ndarray,
    u: np.ndarray,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    One plant step: x+ = Ax + Bu + w, y = Cx + Du + v.

    Zero covariances draw nothing, so noiseless plants stay deterministic.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if x.shape[0] != sys.n_x or u.shape[0] != sys.m:
        raise DimensionMismatchError(f"state/input sizes {x.shape[0]}/{u.shape[0]} do not fit the plant")
    x_next = sys.A @ x + sys.B @ u
    y = sys.C @ x + sys.D @ u
    if np.any(sys.Delta):
        x_next = x_next + sample_gaussian(sys.Delta, rng)
    if np.any(sys.Upsilon):
        y = y + sample_gaussian(sys.Upsilon, rng)
    return x_next, y


def simulate(
    sys: LTISystem,
    u_seq: np.ndarray,
    x0: Optional[np.ndarray] = None,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Open-loop run; returns states (N+1 rows) and outputs (N rows)."""
    u_seq = np.asarray(u_seq, dtype=float).reshape(len(u_seq), -1)
    x = np.zeros(sys.n_x) if x0 is None else np.asarray(x0, dtype=float)
    states = [x]
    outputs = []
    for u in u_seq:
        x, y = simulate_step(sys, x, u, rng)
        states.append(x)
        outputs.append(y)
    return np.asarray(states), np.asarray(outputs)


def noiseless(sys: LTISystem) -> LTISystem:
    return sys.model_copy(update={"Delta": np.zeros_like(sys.Delta), "Upsilon": np.zeros_like(sys.Upsilon)})


def snr_covariance(y_clean: np.ndarray, snr_db: float) -> np.ndarray:
    """Diagonal measurement covariance giving the requested per-channel SNR."""
    variance = np.var(np.asarray(y_clean, dtype=float), axis=0)
    return np.diag(variance / 10.0 ** (snr_db / 10.0))


def measured_snr(y_clean: np.ndarray, y_noisy: np.ndarray) -> float:
    """Channel-averaged sample SNR in dB."""
    y_clean = np.asarray(y_clean, dtype=float)
    noise = np.asarray(y_noisy, dtype=float) - y_clean
    ratios = np.var(y_clean, axis=0) / np.var(noise, axis=0)
    return float(np.mean(10.0 * np.log10(ratios)))


def generate_dataset(
    sys: LTISystem,
    N: int,
    low: float,
    high: float,
    seed: int,
    snr_db: Optional[float] = None,
    noisy: bool = True,
    x0: Optional[np.ndarray] = None,
    process_noise: bool = True,
) -> SimulatedDataset:
    """
    Excite the plant with uniform inputs and record the (noisy) response.

    Process noise comes from sys.Delta unless process_noise is False. Measurement
    noise comes from snr_db when given, otherwise from sys.Upsilon; noisy=False
    switches both off.
    """
    u = generate_excitation(N, low, high, sys.m, seed)
    rng = np.random.default_rng([seed, 1])
    process_only = sys.model_copy(update={"Upsilon": np.zeros_like(sys.Upsilon)})
    if not process_noise:
        process_only = process_only.model_copy(update={"Delta": np.zeros_like(sys.Delta)})
    if not noisy:
        process_only = noiseless(sys)
    states, clean_y = simulate(process_only, u, x0, rng)

    if not noisy:
        upsilon = np.zeros_like(sys.Upsilon)
    elif snr_db is not None:
        upsilon = snr_covariance(clean_y, snr_db)
    else:
        upsilon = np.array(sys.Upsilon)
    y = clean_y.copy()
    if np.any(upsilon):
        y += np.vstack([sample_gaussian(upsilon, rng) for _ in range(N)])
    return SimulatedDataset(
        data=TrajectoryData(u=u, y=y),
        states=states,
        clean_y=clean_y,
        Upsilon=upsilon,
    )


def initial_window(sys: LTISystem, x0: Sequence[float], n: int) -> InitialWindow:
    """
    Window of n past zero-input samples that ends in state x0.

    States are propagated backwards through A, so A must be invertible.
    """
    x0 = np.asarray(x0, dtype=float)
    states = [x0]
    for _ in range(n):
        states.append(np.linalg.solve(sys.A, states[-1]))
    past_states = states[1:][::-1]
    past_u = np.zeros((n, sys.m))
    past_y = np.vstack([sys.C @ x for x in past_states])
    return InitialWindow(past_u=past_u, past_y=past_y, x0=x0)


class ExplicitController:
    """Region lookup on a synthesized law."""

    def __init__(self, law: ExplicitLaw):
        self.law = law

    def __call__(self, chi: np.ndarray) -> Tuple[np.ndarray, int]:
        return evaluate(self.law, chi)


class ImplicitController:
    """Online QP solve at every step."""

    def __init__(self, qp: CompactQP):
        self.qp = qp

    def __call__(self, chi: np.ndarray) -> Tuple[np.ndarray, int]:
        return implicit_control(self.qp, chi), -1


def run_closed_loop(
    sys: LTISystem,
    controller: Controller,
    spec: DDPCSpec,
    N_v: int,
    window: InitialWindow,
    seed: int = 0,
    noisy: bool = False,
    target: Optional[Union[EquilibriumTarget, ReferenceTarget]] = None,
) -> ClosedLoopResult:
    """
    Receding-horizon simulation over N_v steps.

    At each step chi is assembled from the rolling window (plus target entries),
    the controller returns u, and the plant advances. A missing region or a
    failed solve aborts the run with a partial result.
    """
    plant = sys if noisy else noiseless(sys)
    rng = np.random.default_rng(seed)
    n = spec.n
    past_u = np.array(window.past_u, dtype=float).reshape(n, sys.m)
    past_y = np.array(window.past_y, dtype=float).reshape(n, sys.p)
    x = np.array(window.x0, dtype=float)

    inputs: List[np.ndarray] = []
    outputs: List[np.ndarray] = []
    states: List[np.ndarray] = [x]
    region_ids: List[int] = []
    step_times: List[float] = []
    stable, aborted, message = True, False, None

    for t in range(N_v):
        chi = assemble_parameter(past_u, past_y, n, target).chi
        started = time.perf_counter()
        try:
            u, region_id = controller(chi)
        except (NoRegionError, SolverError) as e:
            aborted, message = True, f"step {t}: {e}"
            logger.warning(f"Closed loop aborted at {message}")
            break
        step_times.append(time.perf_counter() - started)
        x, y = simulate_step(plant, x, u, rng)
        inputs.append(np.asarray(u, dtype=float))
        outputs.append(y)
        states.append(x)
        region_ids.append(region_id)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > DIVERGENCE_THRESHOLD:
            stable, message = False, f"output diverged at step {t}"
            logger.warning(message)
            break
        past_u = np.vstack([past_u[1:], u])
        past_y = np.vstack([past_y[1:], y])

    result = ClosedLoopResult(
        u_traj=np.asarray(inputs).reshape(-1, sys.m),
        y_traj=np.asarray(outputs).reshape(-1, sys.p),
        x_traj=np.asarray(states),
        region_ids=region_ids,
        step_times=step_times,
        stable=stable,
        aborted=aborted,
        message=message,
    )
    u_s, y_s = spec.equilibrium(sys.m, sys.p)
    result.J = metric_J(result, spec.matrix("Q", sys.p), spec.matrix("R", sys.m), u_s, y_s)
    return result


def metric_rmse(
    y_traj: np.ndarray,
    y_ref_traj: np.ndarray,
    horizon: Optional[int] = None,
    channels: Optional[Sequence[int]] = None,
) -> float:
    """
    Channel-averaged root mean squared deviation between two output trajectories.

    Raises:
        DimensionMismatchError: Trajectories differ in length or width
    """
    y = np.asarray(y_traj, dtype=float)
    ref = np.asarray(y_ref_traj, dtype=float)
    if y.ndim == 1:
        y, ref = y.reshape(-1, 1), ref.reshape(-1, 1)
    if y.shape != ref.shape:
        raise DimensionMismatchError(f"trajectories have shapes {y.shape} and {ref.shape}")
    if horizon is not None:
        y, ref = y[:horizon], ref[:horizon]
    if channels is not None:
        y, ref = y[:, list(channels)], ref[:, list(channels)]
    return float(np.mean(np.sqrt(np.mean((y - ref) ** 2, axis=0))))


def metric_J(
    result: ClosedLoopResult,
    Q: np.ndarray,
    R: np.ndarray,
    u_s: np.ndarray,
    y_s: np.ndarray,
) -> float:
    """Sum over the run of ||y_t - y_s||_Q^2 + ||u_t - u_s||_R^2."""
    dy = result.y_traj - np.asarray(y_s, dtype=float)
    du = result.u_traj - np.asarray(u_s, dtype=float)
    return float(np.einsum("ti,ij,tj->", dy, Q, dy) + np.einsum("ti,ij,tj->", du, R, du))
