"""Dense ground-truth solver for strictly convex QPs with equality and inequality constraints."""
import itertools
import logging
from typing import List, Optional, Tuple, Union

import numpy as np

from control.models import CompactQP, HankelView, OracleSolution, ParameterVector
from errors import ConfigError, DimensionMismatchError, RankDeficientError, SolverError
from solvers.phase_one import chebyshev_ball
from utils.linalg import has_full_row_rank, independent_rows

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-9
DUAL_TOL = 1e-10
CONSISTENCY_TOL = 1e-8


def _kkt_solve(W: np.ndarray, c: np.ndarray, A: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Solve [W A'; A 0][x; y] = [-c; b]."""
    n = W.shape[0]
    k = A.shape[0]
    if k == 0:
        return np.linalg.solve(W, -c), np.zeros(0)
    kkt = np.block([[W, A.T], [A, np.zeros((k, k))]])
    rhs = np.concatenate([-c, b])
    try:
        solution = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        solution = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return solution[:n], solution[n:]


def solve_eq_qp(W: np.ndarray, c: np.ndarray, A_eq: np.ndarray, b_eq: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Minimize 1/2 a'Wa + c'a subject to A_eq a = b_eq.

    Returns:
        (alpha, mu) with W alpha + c + A_eq' mu = 0

    Raises:
        RankDeficientError: A_eq does not have full row rank
    """
    W = np.asarray(W, dtype=float)
    c = np.asarray(c, dtype=float).reshape(-1)
    A_eq = np.asarray(A_eq, dtype=float).reshape(-1, W.shape[0]) if np.size(A_eq) else np.zeros((0, W.shape[0]))
    b_eq = np.asarray(b_eq, dtype=float).reshape(-1)
    if A_eq.shape[0] != b_eq.shape[0]:
        raise DimensionMismatchError("equality matrix and right-hand side differ in rows")
    if A_eq.shape[0] and not has_full_row_rank(A_eq):
        raise RankDeficientError("equality matrix does not have full row rank")
    return _kkt_solve(W, c, A_eq, b_eq)


class _ReducedEqualities:
    """Independent equality rows and a consistency verdict for one right-hand side."""

    def __init__(self, H: np.ndarray, b: np.ndarray):
        self.keep = independent_rows(H)
        self.dropped = H.shape[0] - len(self.keep)
        self.H = H[self.keep]
        self.b = b[self.keep]
        self.consistent = True
        if self.dropped:
            x_ls = np.linalg.lstsq(H, b, rcond=None)[0]
            residual = float(np.max(np.abs(H @ x_ls - b)))
            scale = 1.0 + float(np.max(np.abs(b)))
            self.consistent = residual <= CONSISTENCY_TOL * scale
            logger.debug(f"Dropped {self.dropped} dependent equality rows (residual {residual:.2e})")


class ActiveSetSolver:
    """
    Primal active-set method with the equalities always enforced.

    Bland's rule picks the smallest index both when a constraint blocks a step
    and when a negative multiplier is released, so runs are deterministic.
    """

    def __init__(self, max_iter: Optional[int] = None):
        self.max_iter = max_iter

    def solve(self, qp: CompactQP, chi: Union[np.ndarray, ParameterVector]) -> OracleSolution:
        chi = qp.check_parameter(chi)
        W, c = qp.W, qp.linear_term(chi)
        G, h = qp.G_in, qp.inequality_rhs(chi)
        n_in = qp.n_in
        eq = _ReducedEqualities(qp.H_eq, qp.equality_rhs(chi))
        if not eq.consistent:
            return self._infeasible(qp)

        max_iter = self.max_iter or 50 * (qp.n_d + qp.n_eq + n_in)
        tol_h = FEASIBILITY_TOL * (1.0 + np.abs(h))

        x, mu_r = _kkt_solve(W, c, eq.H, eq.b)
        if n_in == 0 or np.all(G @ x <= h + tol_h):
            return self._solution(qp, x, eq, mu_r, [], np.zeros(0), "optimal", 0)

        ball = chebyshev_ball(G, h, eq.H, eq.b)
        if not ball.feasible:
            return self._infeasible(qp)
        x = ball.center
        working: List[int] = []
        slack = h - G @ x
        for i in range(n_in):
            if slack[i] <= tol_h[i] and has_full_row_rank(np.vstack([eq.H, G[working + [i]]])):
                working.append(i)

        for iteration in range(1, max_iter + 1):
            A_w = np.vstack([eq.H, G[working]]) if working else eq.H
            p, multipliers = _kkt_solve(W, W @ x + c, A_w, np.zeros(A_w.shape[0]))
            step, blocking = 1.0, None
            Gp = G @ p
            for i in range(n_in):
                if i in working or Gp[i] <= 1e-14 * (1.0 + np.abs(G[i]).sum()):
                    continue
                ratio = max((h[i] - G[i] @ x) / Gp[i], 0.0)
                if ratio < step:
                    step, blocking = ratio, i
            x = x + step * p
            if blocking is not None:
                working.append(blocking)
                continue

            lam_w = multipliers[eq.H.shape[0]:]
            negative = [working[j] for j, value in enumerate(lam_w) if value < -DUAL_TOL]
            if not negative:
                return self._solution(
                    qp, x, eq, multipliers[: eq.H.shape[0]], working, lam_w, "optimal", iteration
                )
            working.remove(min(negative))

        logger.warning(f"Active-set solver hit the iteration cap ({max_iter})")
        return OracleSolution(
            alpha=x,
            lam=np.zeros(n_in),
            mu=np.zeros(qp.n_eq),
            active_set=sorted(working),
            status="iteration-limit",
            iterations=max_iter,
        )

    @staticmethod
    def _infeasible(qp: CompactQP) -> OracleSolution:
        return OracleSolution(
            alpha=np.full(qp.n_d, np.nan),
            lam=np.zeros(qp.n_in),
            mu=np.zeros(qp.n_eq),
            status="infeasible",
        )

    @staticmethod
    def _solution(
        qp: CompactQP,
        x: np.ndarray,
        eq: _ReducedEqualities,
        mu_r: np.ndarray,
        working: List[int],
        lam_w: np.ndarray,
        status: str,
        iterations: int,
    ) -> OracleSolution:
        lam = np.zeros(qp.n_in)
        lam[working] = lam_w
        mu = np.zeros(qp.n_eq)
        mu[eq.keep] = mu_r
        return OracleSolution(
            alpha=x,
            lam=np.maximum(lam, 0.0),
            mu=mu,
            active_set=sorted(working),
            status=status,
            iterations=iterations,
        )


def solve_qp(qp: CompactQP, chi: Union[np.ndarray, ParameterVector]) -> OracleSolution:
    """Solve the QP at one parameter value with the active-set method."""
    return ActiveSetSolver().solve(qp, chi)


def solve_qp_enumeration(
    qp: CompactQP,
    chi: Union[np.ndarray, ParameterVector],
    max_inequalities: int = 12,
) -> OracleSolution:
    """
    Brute-force solve: try every active set by increasing size.

    Only meant as a second opinion on small problems.
    """
    chi = qp.check_parameter(chi)
    if qp.n_in > max_inequalities:
        raise ConfigError(f"enumeration oracle limited to {max_inequalities} inequalities, got {qp.n_in}")
    c, G, h = qp.linear_term(chi), qp.G_in, qp.inequality_rhs(chi)
    eq = _ReducedEqualities(qp.H_eq, qp.equality_rhs(chi))
    if not eq.consistent:
        return ActiveSetSolver._infeasible(qp)
    tol_h = FEASIBILITY_TOL * (1.0 + np.abs(h))
    for size in range(qp.n_in + 1):
        for subset in itertools.combinations(range(qp.n_in), size):
            active = list(subset)
            A = np.vstack([eq.H, G[active]]) if active else eq.H
            if A.shape[0] and not has_full_row_rank(A):
                continue
            x, multipliers = _kkt_solve(qp.W, c, A, np.concatenate([eq.b, h[active]]))
            lam_a = multipliers[eq.H.shape[0]:]
            if np.all(G @ x <= h + tol_h) and np.all(lam_a >= -DUAL_TOL):
                return ActiveSetSolver._solution(
                    qp, x, eq, multipliers[: eq.H.shape[0]], active, lam_a, "optimal", 0
                )
    return ActiveSetSolver._infeasible(qp)


def implicit_control(qp: CompactQP, chi: Union[np.ndarray, ParameterVector]) -> np.ndarray:
    """
    First predicted input of the optimal solution (receding horizon).

    Raises:
        SolverError: The solve did not reach optimal status
    """
    solution = solve_qp(qp, chi)
    if solution.status != "optimal":
        raise SolverError(f"QP solve ended with status '{solution.status}'", status=solution.status)
    return qp.first_input(solution.alpha)


def recover_trajectory(alpha: np.ndarray, hv: HankelView) -> Tuple[np.ndarray, np.ndarray]:
    """Input and output sequences over [-n, L-1] spanned by alpha."""
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    if alpha.shape[0] != hv.n_alpha:
        raise DimensionMismatchError(f"alpha has {alpha.shape[0]} entries, Hankel view has {hv.n_alpha} columns")
    depth = hv.L + hv.n
    return (hv.Hu @ alpha).reshape(depth, hv.m), (hv.Hy @ alpha).reshape(depth, hv.p)
