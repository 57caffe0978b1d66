"""Explicit piecewise-affine law by enumeration of active inequality sets."""
import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, NamedTuple, Optional, Tuple, Union

import numpy as np
import scipy.linalg

from config import Config
from control.models import CompactQP, ExplicitLaw, ParameterVector, Region, SynthesisStats
from errors import DimensionMismatchError, EmptyLawError, NoRegionError, SynthesisError
from solvers.phase_one import prune_region
from utils.linalg import has_full_row_rank, independent_rows

logger = logging.getLogger(__name__)

DUPLICATE_TOL = 1e-10


class _Candidate(NamedTuple):
    active_set: Tuple[int, ...]
    region: Optional[Region]
    outcome: str  # "region", "licq" or "empty"


class ExplicitSynthesizer:
    """
    Enumerates active sets of a CompactQP and keeps the nonempty critical regions.

    For each candidate set A the stacked matrix [G_A; H_eq] gives the multipliers
    delta = D chi + d in closed form, hence alpha = A_chi chi + a and the region
    made of the inactive primal rows and the active dual rows.
    """

    def __init__(self, qp: CompactQP, max_active: Optional[int] = None, max_workers: Optional[int] = None):
        self.qp = qp
        self.max_workers = max_workers or Config.MAX_WORKERS
        keep = independent_rows(qp.H_eq)
        self.dropped_equalities = qp.n_eq - len(keep)
        if self.dropped_equalities:
            logger.warning(
                f"Equality matrix is row-rank deficient: dropped {self.dropped_equalities} of {qp.n_eq} rows; "
                "the law is valid for parameters consistent with the data"
            )
        self.H = qp.H_eq[keep]
        self.S = qp.S_eq[keep]
        self.h = qp.h_eq[keep]

        limit = qp.n_d - self.H.shape[0]
        default = min(qp.n_in, limit)
        if max_active is None:
            max_active = default
        if max_active > limit:
            raise SynthesisError(
                f"max_active={max_active} exceeds n_d - n_eq = {limit}; such active sets cannot satisfy LICQ"
            )
        self.max_active = min(max_active, qp.n_in)
        self._factor = scipy.linalg.cho_factor(qp.W)
        self._Winv_c0 = self._solve_W(qp.c0)
        self._Winv_C = self._solve_W(qp.C_par)

    def _solve_W(self, rhs: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve(self._factor, rhs)

    def candidates(self) -> List[Tuple[int, ...]]:
        """Active sets by increasing size, lexicographic within a size."""
        return [
            subset
            for size in range(self.max_active + 1)
            for subset in itertools.combinations(range(self.qp.n_in), size)
        ]

    def _evaluate_candidate(self, active: Tuple[int, ...]) -> _Candidate:
        qp = self.qp
        idx = list(active)
        n_lambda = len(idx)
        G_tilde = np.vstack([qp.G_in[idx], self.H])
        if G_tilde.shape[0] and not has_full_row_rank(G_tilde):
            return _Candidate(active, None, "licq")

        r0 = np.concatenate([qp.beta[idx], self.h])
        R = np.vstack([qp.phi[idx], self.S])
        Winv_c0, Winv_C = self._Winv_c0, self._Winv_C

        if G_tilde.shape[0]:
            Winv_Gt = self._solve_W(G_tilde.T)
            G_W = G_tilde @ Winv_Gt
            D = -np.linalg.solve(G_W, R + G_tilde @ Winv_C)
            d = -np.linalg.solve(G_W, r0 + G_tilde @ Winv_c0)
            alpha_gain = -(Winv_Gt @ D + Winv_C)
            alpha_offset = -(Winv_Gt @ d + Winv_c0)
        else:
            D = np.zeros((0, qp.n_chi))
            d = np.zeros(0)
            alpha_gain = -Winv_C
            alpha_offset = -Winv_c0

        inactive = [i for i in range(qp.n_in) if i not in active]
        G_I = qp.G_in[inactive]
        E = np.vstack([G_I @ alpha_gain - qp.phi[inactive], -D[:n_lambda]])
        K = np.concatenate([qp.beta[inactive] - G_I @ alpha_offset, d[:n_lambda]])
        if not prune_region(E, K):
            return _Candidate(active, None, "empty")

        Fseq = qp.U_map @ alpha_gain
        fseq = qp.U_map @ alpha_offset
        region = Region(
            active_set=idx,
            F=Fseq[: qp.m],
            f=fseq[: qp.m],
            Fseq=Fseq,
            fseq=fseq,
            E=E.reshape(-1, qp.n_chi),
            K=K,
            n_lambda=n_lambda,
            alpha_gain=alpha_gain,
            alpha_offset=alpha_offset,
            dual_gain=D,
            dual_offset=d,
        )
        return _Candidate(active, region, "region")

    def synthesize(self) -> ExplicitLaw:
        """
        Enumerate every candidate set and assemble the law.

        Raises:
            EmptyLawError: No candidate produced a nonempty region
        """
        started = time.perf_counter()
        candidates = self.candidates()
        logger.info(
            f"Synthesizing explicit law: {self.qp.n_in} inequalities, max_active={self.max_active}, "
            f"{len(candidates)} candidates"
        )
        if self.max_workers > 1 and len(candidates) > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                results = list(executor.map(self._evaluate_candidate, candidates))
        else:
            results = [self._evaluate_candidate(active) for active in candidates]

        stats = SynthesisStats(candidates=len(candidates), dropped_equalities=self.dropped_equalities)
        regions: List[Region] = []
        for result in results:
            if result.outcome == "licq":
                stats.licq_failures += 1
                logger.debug(f"Active set {result.active_set} violates LICQ; skipped")
            elif result.outcome == "empty":
                stats.empty_pruned += 1
            elif any(_same_region(result.region, kept) for kept in regions):
                stats.duplicates_removed += 1
            else:
                regions.append(result.region)
        stats.seconds = time.perf_counter() - started

        if not regions:
            raise EmptyLawError(
                f"no nonempty region among {len(candidates)} active sets: the QP is infeasible for every parameter"
            )
        logger.info(
            f"Explicit law: {len(regions)} regions, {stats.licq_failures} LICQ skips, "
            f"{stats.empty_pruned} empty, {stats.duplicates_removed} duplicates ({stats.seconds:.3f}s)"
        )
        return ExplicitLaw(
            regions=regions,
            qp_fingerprint=self.qp.fingerprint(),
            m=self.qp.m,
            n_chi=self.qp.n_chi,
            variant=self.qp.variant,
            layout=self.qp.layout,
            stats=stats,
        )


def _same_region(a: Region, b: Region) -> bool:
    pairs = ((a.F, b.F), (a.f, b.f), (a.E, b.E), (a.K, b.K))
    return all(x.shape == y.shape and np.allclose(x, y, rtol=0.0, atol=DUPLICATE_TOL) for x, y in pairs)


def synthesize(qp: CompactQP, max_active: Optional[int] = None) -> ExplicitLaw:
    """Explicit law of a CompactQP (see ExplicitSynthesizer)."""
    return ExplicitSynthesizer(qp, max_active=max_active).synthesize()


def evaluate(
    law: ExplicitLaw,
    chi: Union[np.ndarray, ParameterVector],
    tol: Optional[float] = None,
) -> Tuple[np.ndarray, int]:
    """
    Evaluate the law by linear scan; the first region in stored order wins.

    Returns:
        (u, region index)

    Raises:
        NoRegionError: chi is outside every region
    """
    if isinstance(chi, ParameterVector):
        chi = chi.chi
    chi = np.asarray(chi, dtype=float).reshape(-1)
    if chi.shape[0] != law.n_chi:
        raise DimensionMismatchError(f"parameter has {chi.shape[0]} entries, law expects {law.n_chi}")
    index = law.locate(chi, Config.REGION_TOL if tol is None else tol)
    if index is None:
        raise NoRegionError("parameter lies outside every region of the explicit law")
    return law.regions[index].control(chi), index
