"""Cross-validation of the ridge weight, Monte Carlo studies, timing and the two benchmark studies."""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from config import Config
from control.models import ClosedLoopResult, CompactQP, DDPCSpec, ExplicitLaw, LTISystem, ReferenceTarget
from errors import CrossValidationError, NoRegionError, ReddpcError, SolverError
from services.controller_service import ControllerService
from services.plants import BuiltinPlant
from services.simulation_service import (
    ExplicitController,
    ImplicitController,
    InitialWindow,
    SimulatedDataset,
    generate_dataset,
    initial_window,
    metric_rmse,
    run_closed_loop,
)
from solvers.explicit_mpqp import evaluate
from solvers.qp_oracle import implicit_control, solve_qp
from storage.law_repository import LawRepository

logger = logging.getLogger(__name__)

DEFAULT_RHO_GRID = [1e-2, 5e-2, 0.1, 0.2, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0, 15.0, 20.0, 30.0, 50.0]
ORACLE_RHO = 1e-6

ChiSampler = Callable[[np.random.Generator], np.ndarray]


def controller_target(spec: DDPCSpec, m: int, p: int) -> Optional[ReferenceTarget]:
    """Reference segment appended to chi: the spec's equilibrium for tracking problems, nothing otherwise."""
    if spec.variant != "tracking":
        return None
    u_s, y_s = spec.equilibrium(m, p)
    return ReferenceTarget(u_r=u_s.tolist(), y_r=y_s.tolist())


def box_sampler(lower: Sequence[float], upper: Sequence[float]) -> ChiSampler:
    """Uniform parameter samples in an axis-aligned box."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    return lambda rng: rng.uniform(lower, upper)


class CVProtocol(BaseModel):
    """Closed-loop experiment used to score one candidate ridge weight."""

    horizon: int = Field(50, ge=1, description="Steps per closed-loop run")
    n_windows: int = Field(5, ge=1, description="Initial windows cut from the CV record")
    noisy: bool = Field(True, description="Run the plant with the CV record's measurement noise")


class CandidateScore(BaseModel):
    rho_alpha: float
    score: float
    n_regions: int = 0
    diagnostics: Optional[str] = None


class CrossValidationResult(BaseModel):
    best_rho: float
    best_score: float
    scores: List[CandidateScore]


def _cv_windows(cv: SimulatedDataset, n: int, count: int, horizon: int) -> List[InitialWindow]:
    last = max(n, cv.data.N - horizon)
    starts = np.unique(np.linspace(n, last, count).astype(int))
    return [
        InitialWindow(past_u=cv.data.u[k - n:k], past_y=cv.data.y[k - n:k], x0=cv.states[k])
        for k in starts
    ]


def cross_validate_rho(
    sys: LTISystem,
    train: SimulatedDataset,
    cv: SimulatedDataset,
    candidate_rhos: Sequence[float],
    spec: DDPCSpec,
    protocol: Optional[CVProtocol] = None,
    seed: int = 0,
) -> CrossValidationResult:
    """
    Pick the ridge weight whose law does best in closed loop on the CV record.

    Every candidate's law is synthesized from the training record, run from
    initial windows cut from the CV record on the plant carrying the CV noise
    level, and scored by the summed cost index J. Failed runs score inf; ties
    go to the smallest weight.

    Raises:
        CrossValidationError: No candidate produced a finite score
    """
    if not candidate_rhos:
        raise CrossValidationError("candidate grid is empty", diagnostics={})
    protocol = protocol or CVProtocol()
    plant = sys.model_copy(update={"Upsilon": cv.Upsilon})
    windows = _cv_windows(cv, spec.n, protocol.n_windows, protocol.horizon)
    target = controller_target(spec, sys.m, sys.p)

    scores: List[CandidateScore] = []
    for rho in sorted(candidate_rhos):
        try:
            outcome = ControllerService(spec.model_copy(update={"rho_alpha": rho})).synthesize(train.data)
        except ReddpcError as e:
            scores.append(CandidateScore(rho_alpha=rho, score=math.inf, diagnostics=f"synthesis failed: {e}"))
            continue
        controller = ExplicitController(outcome.law)
        total, diagnostics = 0.0, None
        for i, window in enumerate(windows):
            result = run_closed_loop(
                plant, controller, outcome.spec, protocol.horizon, window,
                seed=seed + i, noisy=protocol.noisy, target=target,
            )
            if result.aborted or not result.stable:
                total, diagnostics = math.inf, result.message
                break
            total += result.J
        scores.append(
            CandidateScore(rho_alpha=rho, score=total, n_regions=len(outcome.law.regions), diagnostics=diagnostics)
        )
        logger.debug(f"rho_alpha={rho:g}: score {total:.4g}")

    finite = [s for s in scores if math.isfinite(s.score)]
    if not finite:
        raise CrossValidationError(
            "every candidate ridge weight failed in closed loop",
            diagnostics={s.rho_alpha: s.diagnostics or "non-finite score" for s in scores},
        )
    best = min(finite, key=lambda s: (s.score, s.rho_alpha))
    logger.info(f"Cross-validation picked rho_alpha={best.rho_alpha:g} (score {best.score:.4g})")
    return CrossValidationResult(best_rho=best.rho_alpha, best_score=best.score, scores=scores)


class TimingReport(BaseModel):
    """Online cost of the explicit law against the implicit solve."""

    samples: int
    explicit_mean: float
    explicit_worst: float
    implicit_mean: float
    implicit_worst: float
    law_bytes: int
    implicit_bytes: int
    explicit_misses: int = 0
    implicit_failures: int = 0


def benchmark_timing(
    law: ExplicitLaw,
    qp: CompactQP,
    n_samples: int,
    chi_sampler: ChiSampler,
    seed: int = 0,
) -> TimingReport:
    """
    Time region lookup against the active-set solve on the same random parameters.

    Storage compares the serialized law with every matrix the implicit
    controller must hold.
    """
    rng = np.random.default_rng(seed)
    explicit_times: List[float] = []
    implicit_times: List[float] = []
    misses = failures = 0
    for _ in range(n_samples):
        chi = chi_sampler(rng)
        started = time.perf_counter()
        try:
            evaluate(law, chi)
        except NoRegionError:
            misses += 1
        explicit_times.append(time.perf_counter() - started)

        started = time.perf_counter()
        if solve_qp(qp, chi).status != "optimal":
            failures += 1
        implicit_times.append(time.perf_counter() - started)

    law_bytes = len(LawRepository().dumps(law).encode())
    report = TimingReport(
        samples=n_samples,
        explicit_mean=float(np.mean(explicit_times)),
        explicit_worst=float(np.max(explicit_times)),
        implicit_mean=float(np.mean(implicit_times)),
        implicit_worst=float(np.max(implicit_times)),
        law_bytes=law_bytes,
        implicit_bytes=qp.storage_bytes(),
        explicit_misses=misses,
        implicit_failures=failures,
    )
    logger.info(
        f"Timing over {n_samples} samples: explicit {report.explicit_mean:.2e}s, "
        f"implicit {report.implicit_mean:.2e}s; storage {law_bytes} vs {report.implicit_bytes} bytes"
    )
    return report


class MonteCarloRow(BaseModel):
    """Summary of one noise level."""

    snr_db: Optional[float] = Field(None, description="None means noiseless data")
    runs: int
    failures: int
    rho_mean: float
    rho_std: float
    rmse_mean: float
    rmse_std: float


class _RunOutcome(BaseModel):
    rho: Optional[float] = None
    rmse: Optional[float] = None
    error: Optional[str] = None


class BenchmarkService:
    """Benchmark studies on one builtin plant."""

    def __init__(
        self,
        plant: BuiltinPlant,
        seed: Optional[int] = None,
        grid: Optional[Sequence[float]] = None,
        protocol: Optional[CVProtocol] = None,
        max_workers: Optional[int] = None,
    ):
        self.plant = plant
        self.seed = Config.SEED if seed is None else seed
        self.grid = list(grid or DEFAULT_RHO_GRID)
        self.protocol = protocol or CVProtocol()
        self.max_workers = max_workers or Config.MAX_WORKERS

    def dataset(self, seed: int, snr_db: Optional[float], noisy: bool = True) -> SimulatedDataset:
        low, high = self.plant.excitation
        return generate_dataset(
            self.plant.system, self.plant.N, low, high, seed,
            snr_db=snr_db, noisy=noisy, process_noise=self.plant.process_noise_in_data,
        )

    def test_window(self) -> InitialWindow:
        return initial_window(self.plant.system, self.plant.test_state, self.plant.spec.n)

    def closed_loop(self, controller: Callable, spec: DDPCSpec, noisy: bool = False, seed: int = 0) -> ClosedLoopResult:
        sys = self.plant.system
        return run_closed_loop(
            sys, controller, spec, self.plant.N_test, self.test_window(),
            seed=seed, noisy=noisy, target=controller_target(spec, sys.m, sys.p),
        )

    def chi_sampler(self) -> ChiSampler:
        """Box of initial windows: around the equilibrium for regulation to a nonzero target, else u in [-2, 2], y in [-3, 3]."""
        sys, spec = self.plant.system, self.plant.spec
        n = spec.n
        u_s, y_s = spec.equilibrium(sys.m, sys.p)
        if np.any(u_s) or np.any(y_s):
            center = np.concatenate([np.tile(u_s, n), np.tile(y_s, n)])
            spread = np.concatenate([np.full(n * sys.m, 1.0), np.full(n * sys.p, 0.5)])
        else:
            center = np.zeros(n * (sys.m + sys.p))
            spread = np.concatenate([np.full(n * sys.m, 2.0), np.full(n * sys.p, 3.0)])
        return box_sampler(center - spread, center + spread)

    def timing_study(self, n_samples: int = 10_000) -> TimingReport:
        """Timing and storage of the default law synthesized from one training record."""
        train = self.dataset(self.seed, self.plant.snr_db)
        outcome = ControllerService(self.plant.spec).synthesize(train.data)
        return benchmark_timing(outcome.law, outcome.qp, n_samples, self.chi_sampler(), seed=self.seed)

    def oracle_trajectory(self) -> ClosedLoopResult:
        """Closed loop of the law synthesized from noiseless data with a vanishing ridge weight."""
        data = self.dataset(self.seed, snr_db=None, noisy=False).data
        spec = self.plant.spec.model_copy(update={"rho_alpha": ORACLE_RHO})
        outcome = ControllerService(spec).synthesize(data)
        return self.closed_loop(ExplicitController(outcome.law), outcome.spec)

    def _monte_carlo_run(self, snr_db: Optional[float], child: np.random.SeedSequence, y_ref: np.ndarray) -> _RunOutcome:
        train_seed, cv_seed = (int(s) for s in child.generate_state(2))
        noisy = snr_db is not None
        try:
            train = self.dataset(train_seed, snr_db, noisy=noisy)
            cv = self.dataset(cv_seed, snr_db, noisy=noisy)
            selection = cross_validate_rho(
                self.plant.system, train, cv, self.grid, self.plant.spec, self.protocol, seed=cv_seed
            )
            spec = self.plant.spec.model_copy(update={"rho_alpha": selection.best_rho})
            outcome = ControllerService(spec).synthesize(train.data)
            result = self.closed_loop(ExplicitController(outcome.law), outcome.spec)
            if result.aborted or not result.stable:
                return _RunOutcome(rho=selection.best_rho, error=result.message)
            return _RunOutcome(rho=selection.best_rho, rmse=metric_rmse(result.y_traj, y_ref))
        except ReddpcError as e:
            return _RunOutcome(error=str(e))

    def monte_carlo_study(self, noise_levels: Sequence[Optional[float]], runs_per_level: int) -> List[MonteCarloRow]:
        """
        Per noise level: fresh training and CV records for every run, ridge weight
        by cross-validation, RMSE_O on the noiseless test against the oracle law.

        Failed runs are counted, not fatal.
        """
        if not noise_levels or runs_per_level < 2:
            raise ValueError("monte carlo study needs at least one level and two runs per level")
        oracle = self.oracle_trajectory()
        children = np.random.SeedSequence(self.seed).spawn(len(noise_levels) * runs_per_level)
        rows: List[MonteCarloRow] = []
        for level_index, snr_db in enumerate(noise_levels):
            level_children = children[level_index * runs_per_level:(level_index + 1) * runs_per_level]
            logger.info(f"Monte Carlo level {snr_db if snr_db is not None else 'noiseless'}: {runs_per_level} runs")
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                outcomes = list(
                    executor.map(lambda child: self._monte_carlo_run(snr_db, child, oracle.y_traj), level_children)
                )
            good = [o for o in outcomes if o.rmse is not None]
            for o in outcomes:
                if o.error:
                    logger.warning(f"Monte Carlo run failed: {o.error}")
            rhos = np.array([o.rho for o in good]) if good else np.full(1, np.nan)
            rmses = np.array([o.rmse for o in good]) if good else np.full(1, np.nan)
            rows.append(
                MonteCarloRow(
                    snr_db=snr_db,
                    runs=len(outcomes),
                    failures=len(outcomes) - len(good),
                    rho_mean=float(np.mean(rhos)),
                    rho_std=float(np.std(rhos)),
                    rmse_mean=float(np.mean(rmses)),
                    rmse_std=float(np.std(rmses)),
                )
            )
        return rows

    def siso_study(self, n_samples: int = 1000, skip_cv: bool = False) -> "SisoReport":
        """
        Cross-validated law on a noisy record, its agreement with the implicit
        controller on sampled windows, and RMSE_O on the noiseless test.
        """
        sys = self.plant.system
        seeds = [int(s) for s in np.random.SeedSequence(self.seed).generate_state(2)]
        train = self.dataset(seeds[0], self.plant.snr_db)
        rho = self.plant.spec.rho_alpha
        cv_result = None
        if not skip_cv:
            cv = self.dataset(seeds[1], self.plant.snr_db)
            cv_result = cross_validate_rho(sys, train, cv, self.grid, self.plant.spec, self.protocol, seed=seeds[1])
            rho = cv_result.best_rho
        outcome = ControllerService(self.plant.spec.model_copy(update={"rho_alpha": rho})).synthesize(train.data)

        sampler = self.chi_sampler()
        rng = np.random.default_rng(self.seed)
        worst, misses = 0.0, 0
        for _ in range(n_samples):
            chi = sampler(rng)
            try:
                u_explicit, _ = evaluate(outcome.law, chi)
                u_implicit = implicit_control(outcome.qp, chi)
            except (NoRegionError, SolverError):
                misses += 1
                continue
            worst = max(worst, float(np.max(np.abs(u_explicit - u_implicit))))

        result = self.closed_loop(ExplicitController(outcome.law), outcome.spec)
        oracle = self.oracle_trajectory()
        result.rmse_o = metric_rmse(result.y_traj, oracle.y_traj) if result.steps == oracle.steps else math.inf
        return SisoReport(
            rho_alpha=rho,
            n_regions=len(outcome.law.regions),
            oracle_discrepancy=worst,
            oracle_samples=n_samples,
            oracle_misses=misses,
            rmse_o=result.rmse_o,
            cross_validation=cv_result,
            closed_loop=result,
            oracle_loop=oracle,
            law=outcome.law,
        )

    def four_tank_study(self, runs: int = 30, n_timing: int = 10_000) -> "FourTankReport":
        """
        J statistics of the robust law over independent noisy records, explicit
        against implicit closed loop on the first record, and the timing table.
        """
        children = np.random.SeedSequence(self.seed).spawn(runs)

        def one_run(child: np.random.SeedSequence) -> Union[ClosedLoopResult, str]:
            try:
                train = self.dataset(int(child.generate_state(1)[0]), self.plant.snr_db)
                outcome = ControllerService(self.plant.spec).synthesize(train.data)
                return self.closed_loop(ExplicitController(outcome.law), outcome.spec)
            except ReddpcError as e:
                return str(e)

        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            results = list(executor.map(one_run, children))
        completed = [r for r in results if isinstance(r, ClosedLoopResult)]
        stable = [r for r in completed if r.stable and not r.aborted]
        J = np.array([r.J for r in stable]) if stable else np.full(1, np.nan)

        first = self.dataset(int(children[0].generate_state(1)[0]), self.plant.snr_db)
        outcome = ControllerService(self.plant.spec).synthesize(first.data)
        explicit = self.closed_loop(ExplicitController(outcome.law), outcome.spec)
        implicit = self.closed_loop(ImplicitController(outcome.qp), outcome.spec)
        explicit.rmse_ie = metric_rmse(explicit.y_traj, implicit.y_traj) if explicit.steps == implicit.steps else math.inf

        timing = benchmark_timing(outcome.law, outcome.qp, n_timing, self.chi_sampler(), seed=self.seed)
        return FourTankReport(
            runs=runs,
            failures=len(results) - len(completed),
            J_mean=float(np.mean(J)),
            J_std=float(np.std(J)),
            unstable_pct=100.0 * (len(completed) - len(stable)) / max(len(completed), 1),
            rmse_ie=explicit.rmse_ie,
            n_regions=len(outcome.law.regions),
            timing=timing,
            closed_loop=explicit,
            implicit_loop=implicit,
        )


class SisoReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    rho_alpha: float
    n_regions: int
    oracle_discrepancy: float
    oracle_samples: int
    oracle_misses: int
    rmse_o: float
    cross_validation: Optional[CrossValidationResult] = None
    closed_loop: ClosedLoopResult
    oracle_loop: ClosedLoopResult
    law: ExplicitLaw

    def summary(self) -> Dict[str, Union[float, int]]:
        return {
            "rho_alpha": self.rho_alpha,
            "regions": self.n_regions,
            "oracle_discrepancy": self.oracle_discrepancy,
            "oracle_misses": self.oracle_misses,
            "rmse_o": self.rmse_o,
        }


class FourTankReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    runs: int
    failures: int
    J_mean: float
    J_std: float
    unstable_pct: float
    rmse_ie: float
    n_regions: int
    timing: TimingReport
    closed_loop: ClosedLoopResult
    implicit_loop: ClosedLoopResult

    def summary(self) -> Dict[str, Union[float, int]]:
        return {
            "runs": self.runs,
            "failures": self.failures,
            "J_mean": self.J_mean,
            "J_std": self.J_std,
            "unstable_pct": self.unstable_pct,
            "rmse_ie": self.rmse_ie,
            "regions": self.n_regions,
        }
