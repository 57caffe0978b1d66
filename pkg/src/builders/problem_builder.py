"""Assembly of the parameterized QP for each data-driven predictive control variant."""
import logging
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import scipy.linalg

from control.models import (
    CompactQP,
    DDPCSpec,
    EquilibriumTarget,
    HankelView,
    ParameterVector,
    ReferenceTarget,
)
from errors import ConfigError, DimensionMismatchError
from utils.linalg import is_pd, is_psd

logger = logging.getLogger(__name__)


class ProblemBuilder:
    """Builds CompactQP instances from a problem spec and a Hankel view."""

    def __init__(self, spec: DDPCSpec, hv: HankelView):
        """
        Initialize the builder.

        Raises:
            DimensionMismatchError: The view was built with another L or n
            ConfigError: Q is not PSD or R is not PD
        """
        if spec.L != hv.L or spec.n != hv.n:
            raise DimensionMismatchError(
                f"spec has L={spec.L}, n={spec.n} but the Hankel view has L={hv.L}, n={hv.n}"
            )
        self.spec = spec
        self.hv = hv
        self.m, self.p, self.L, self.n = hv.m, hv.p, hv.L, hv.n
        self.Q = spec.matrix("Q", self.p)
        self.R = spec.matrix("R", self.m)
        if not is_psd(self.Q):
            raise ConfigError("Q must be symmetric positive semi-definite")
        if not is_pd(self.R):
            raise ConfigError("R must be symmetric positive definite")
        self.u_s, self.y_s = spec.equilibrium(self.m, self.p)

    @property
    def window_size(self) -> int:
        return self.n * (self.m + self.p)

    def build(self) -> CompactQP:
        """Build the QP of the variant named in the spec."""
        builders = {
            "nominal": self.build_nominal,
            "tracking": self.build_tracking,
            "robust": self.build_robust,
            "relaxed": self.build_relaxed,
        }
        return builders[self.spec.variant]()

    def stage_weights(self) -> Tuple[np.ndarray, np.ndarray]:
        """Block-diagonal horizon weights (Q repeated L times, R repeated L times)."""
        eye_L = np.eye(self.L)
        return np.kron(eye_L, self.Q), np.kron(eye_L, self.R)

    def unregularized_weight(self, hv: Optional[HankelView] = None) -> np.ndarray:
        """Data weight HuF' R HuF + HyF' Q HyF before any ridge term."""
        hv = hv or self.hv
        Qbar, Rbar = self.stage_weights()
        return hv.HuF.T @ Rbar @ hv.HuF + hv.HyF.T @ Qbar @ hv.HyF

    def terminal_stack(self) -> np.ndarray:
        """Equilibrium repeated over the terminal window, as [u block; y block]."""
        return np.concatenate([np.tile(self.u_s, self.n), np.tile(self.y_s, self.n)])

    def equilibrium_alpha(self) -> np.ndarray:
        """
        Minimum-norm alpha whose trajectory sits at (u^s, y^s) over all L+n samples.

        The alpha ridge is centered on this vector. Zeros when ridge_center is
        "origin" or the equilibrium is zero.
        """
        hv = self.hv
        if self.spec.ridge_center == "origin":
            return np.zeros(hv.n_alpha)
        depth = self.L + self.n
        target = np.concatenate([np.tile(self.u_s, depth), np.tile(self.y_s, depth)])
        if not np.any(target):
            return np.zeros(hv.n_alpha)
        alpha_s, *_ = np.linalg.lstsq(np.vstack([hv.Hu, hv.Hy]), target, rcond=None)
        return alpha_s

    def _check_rho_alpha(self) -> float:
        if self.spec.rho_alpha <= 0:
            raise ConfigError(f"rho_alpha must be positive, got {self.spec.rho_alpha}")
        return self.spec.rho_alpha

    def _value_constraints(self, hv: HankelView, n_cols: int) -> Tuple[np.ndarray, np.ndarray]:
        """Input and output halfspaces replicated over the horizon, zero-padded to n_cols."""
        input_set = self.spec.input_set(self.m)
        output_set = self.spec.output_set(self.p)
        rows: List[np.ndarray] = []
        bounds: List[np.ndarray] = []
        for k in range(self.L):
            if input_set.size:
                rows.append(input_set.A @ hv.Hu_k(k))
                bounds.append(input_set.b)
        for k in range(self.L):
            if output_set.size:
                rows.append(output_set.A @ hv.Hy_k(k))
                bounds.append(output_set.b)
        if not rows:
            return np.zeros((0, n_cols)), np.zeros(0)
        G = np.vstack(rows)
        G = np.hstack([G, np.zeros((G.shape[0], n_cols - G.shape[1]))])
        return G, np.concatenate(bounds)

    def _assemble_regulation(
        self, hv: HankelView, ridge: np.ndarray, center: np.ndarray, variant: str
    ) -> CompactQP:
        """Shared assembly of the nominal and robust problems (initial and terminal equalities)."""
        Qbar, Rbar = self.stage_weights()
        n_d = hv.n_alpha
        W = self.unregularized_weight(hv) + np.diag(ridge)
        c0 = -(hv.HuF.T @ Rbar @ np.tile(self.u_s, self.L) + hv.HyF.T @ Qbar @ np.tile(self.y_s, self.L))
        c0 = c0 - ridge * center
        H_eq = np.vstack([hv.HuP, hv.HyP, hv.HuT, hv.HyT])
        n_chi = 2 * self.window_size
        G_in, beta = self._value_constraints(hv, n_d)
        return CompactQP(
            W=0.5 * (W + W.T),
            c0=c0,
            C_par=np.zeros((n_d, n_chi)),
            H_eq=H_eq,
            S_eq=np.eye(n_chi),
            h_eq=np.zeros(n_chi),
            G_in=G_in,
            beta=beta,
            phi=np.zeros((G_in.shape[0], n_chi)),
            U_map=hv.HuF,
            m=self.m,
            variant=variant,
            layout={"chi0": (0, self.window_size), "chiL": (self.window_size, n_chi)},
        )

    def build_nominal(self) -> CompactQP:
        """Regularized regulation problem with initial and terminal equalities."""
        rho = self._check_rho_alpha()
        qp = self._assemble_regulation(
            self.hv, np.full(self.hv.n_alpha, rho), self.equilibrium_alpha(), "nominal"
        )
        logger.info(f"Assembled nominal QP: n_d={qp.n_d}, n_eq={qp.n_eq}, n_in={qp.n_in}")
        return qp

    def build_robust(self) -> CompactQP:
        """
        Nominal problem with an additive output slack sigma in R^{p(L+n)}.

        The output Hankel matrix is extended to [Hy, -I] and the input one to
        [Hu, 0], and every slice is taken from the extended matrices.
        """
        rho = self._check_rho_alpha()
        rho_sigma = self.spec.rho_sigma
        if rho_sigma is None or rho_sigma <= 0:
            raise ConfigError("rho_sigma must be positive for the robust variant")
        n_sigma = self.p * (self.L + self.n)
        extended = HankelView(
            Hu=np.hstack([self.hv.Hu, np.zeros((self.hv.Hu.shape[0], n_sigma))]),
            Hy=np.hstack([self.hv.Hy, -np.eye(n_sigma)]),
            L=self.L,
            n=self.n,
            m=self.m,
            p=self.p,
        )
        ridge = np.concatenate([np.full(self.hv.n_alpha, rho), np.full(n_sigma, rho_sigma)])
        # slack stays centered on zero
        center = np.concatenate([self.equilibrium_alpha(), np.zeros(n_sigma)])
        qp = self._assemble_regulation(extended, ridge, center, "robust")
        logger.info(f"Assembled robust QP: n_d={qp.n_d} ({n_sigma} slack), n_eq={qp.n_eq}, n_in={qp.n_in}")
        return qp

    def build_relaxed(self) -> CompactQP:
        """Terminal equality replaced by a quadratic penalty on the last n input/output pairs."""
        rho = self._check_rho_alpha()
        if self.spec.P is None:
            raise ConfigError("terminal weight P is required for the relaxed variant")
        P = self.spec.matrix("P", self.window_size)
        if not is_psd(P):
            raise ConfigError("terminal weight P must be symmetric positive semi-definite")
        hv = self.hv
        Qbar, Rbar = self.stage_weights()
        HT = np.vstack([hv.HuT, hv.HyT])
        W = self.unregularized_weight() + HT.T @ P @ HT + rho * np.eye(hv.n_alpha)
        c0 = -(
            hv.HuF.T @ Rbar @ np.tile(self.u_s, self.L)
            + hv.HyF.T @ Qbar @ np.tile(self.y_s, self.L)
            + HT.T @ P @ self.terminal_stack()
            + rho * self.equilibrium_alpha()
        )
        n_chi = self.window_size
        G_in, beta = self._value_constraints(hv, hv.n_alpha)
        qp = CompactQP(
            W=0.5 * (W + W.T),
            c0=c0,
            C_par=np.zeros((hv.n_alpha, n_chi)),
            H_eq=np.vstack([hv.HuP, hv.HyP]),
            S_eq=np.eye(n_chi),
            h_eq=np.zeros(n_chi),
            G_in=G_in,
            beta=beta,
            phi=np.zeros((G_in.shape[0], n_chi)),
            U_map=hv.HuF,
            m=self.m,
            variant="relaxed",
            layout={"chi0": (0, n_chi)},
        )
        logger.info(f"Assembled relaxed QP: n_d={qp.n_d}, n_eq={qp.n_eq}, n_in={qp.n_in}")
        return qp

    def build_tracking(self) -> CompactQP:
        """
        Tracking problem over [alpha; u^s; y^s] with the equilibrium as a decision.

        The parameter stacks chi0, u^r and y^r; the equilibrium is pulled towards
        the reference by Psi and Phi.
        """
        rho = self._check_rho_alpha()
        m, p, L, n = self.m, self.p, self.L, self.n
        Psi = self.spec.matrix("Psi", m)
        Phi = self.spec.matrix("Phi", p)
        if not (is_pd(Psi) and is_pd(Phi)):
            raise ConfigError("Psi and Phi must be symmetric positive definite")
        hv = self.hv
        n_alpha = hv.n_alpha
        n_d = n_alpha + m + p
        Qbar, Rbar = self.stage_weights()

        HuF_bar = np.hstack([hv.HuF, -np.kron(np.ones((L, 1)), np.eye(m)), np.zeros((m * L, p))])
        HyF_bar = np.hstack([hv.HyF, np.zeros((p * L, m)), -np.kron(np.ones((L, 1)), np.eye(p))])
        W = HuF_bar.T @ Rbar @ HuF_bar + HyF_bar.T @ Qbar @ HyF_bar
        W += scipy.linalg.block_diag(rho * np.eye(n_alpha), Psi, Phi)

        window = self.window_size
        n_chi = window + m + p
        us_cols = slice(n_alpha, n_alpha + m)
        ys_cols = slice(n_alpha + m, n_d)
        C_par = np.zeros((n_d, n_chi))
        C_par[us_cols, window:window + m] = -Psi
        C_par[ys_cols, window + m:] = -Phi

        omega = scipy.linalg.block_diag(np.kron(np.ones((n, 1)), np.eye(m)), np.kron(np.ones((n, 1)), np.eye(p)))
        H_eq = np.vstack([
            np.hstack([hv.HuP, np.zeros((m * n, m + p))]),
            np.hstack([hv.HyP, np.zeros((p * n, m + p))]),
            np.hstack([np.vstack([hv.HuT, hv.HyT]), -omega]),
        ])
        S_eq = np.zeros((2 * window, n_chi))
        S_eq[:window, :window] = np.eye(window)

        G_value, beta_value = self._value_constraints(hv, n_d)
        rows, bounds = [G_value], [beta_value]
        us_set = self.spec.us_set(m)
        ys_set = self.spec.ys_set(p)
        if us_set.size:
            block = np.zeros((us_set.size, n_d))
            block[:, us_cols] = us_set.A
            rows.append(block)
            bounds.append(us_set.b)
        if ys_set.size:
            block = np.zeros((ys_set.size, n_d))
            block[:, ys_cols] = ys_set.A
            rows.append(block)
            bounds.append(ys_set.b)
        G_in = np.vstack(rows)
        beta = np.concatenate(bounds)

        qp = CompactQP(
            W=0.5 * (W + W.T),
            c0=np.zeros(n_d),
            C_par=C_par,
            H_eq=H_eq,
            S_eq=S_eq,
            h_eq=np.zeros(2 * window),
            G_in=G_in,
            beta=beta,
            phi=np.zeros((G_in.shape[0], n_chi)),
            U_map=np.hstack([hv.HuF, np.zeros((m * L, m + p))]),
            m=m,
            variant="tracking",
            layout={"chi0": (0, window), "u_r": (window, window + m), "y_r": (window + m, n_chi)},
        )
        logger.info(f"Assembled tracking QP: n_d={qp.n_d}, n_eq={qp.n_eq}, n_in={qp.n_in}")
        return qp


def build_nominal(spec: DDPCSpec, hv: HankelView) -> CompactQP:
    return ProblemBuilder(spec, hv).build_nominal()


def build_tracking(spec: DDPCSpec, hv: HankelView) -> CompactQP:
    return ProblemBuilder(spec, hv).build_tracking()


def build_robust(spec: DDPCSpec, hv: HankelView) -> CompactQP:
    return ProblemBuilder(spec, hv).build_robust()


def build_relaxed(spec: DDPCSpec, hv: HankelView) -> CompactQP:
    return ProblemBuilder(spec, hv).build_relaxed()


def assemble_parameter(
    past_u: np.ndarray,
    past_y: np.ndarray,
    n: int,
    target: Optional[Union[EquilibriumTarget, ReferenceTarget]] = None,
) -> ParameterVector:
    """
    Stack the last n inputs, the last n outputs and the target entries into chi.

    Args:
        past_u: Input history, oldest first (at least n rows)
        past_y: Output history, oldest first (at least n rows)
        n: Window length
        target: EquilibriumTarget appends the terminal block chiL,
            ReferenceTarget appends (u^r, y^r), None yields chi0 alone

    Raises:
        DimensionMismatchError: A buffer is shorter than n
    """
    past_u = np.asarray(past_u, dtype=float)
    past_y = np.asarray(past_y, dtype=float)
    if past_u.ndim == 1:
        past_u = past_u.reshape(-1, 1)
    if past_y.ndim == 1:
        past_y = past_y.reshape(-1, 1)
    if past_u.shape[0] < n or past_y.shape[0] < n:
        raise DimensionMismatchError(
            f"window needs {n} samples, got {past_u.shape[0]} inputs and {past_y.shape[0]} outputs"
        )
    chi0 = np.concatenate([past_u[-n:].reshape(-1), past_y[-n:].reshape(-1)])
    layout: Dict[str, Tuple[int, int]] = {"chi0": (0, chi0.shape[0])}
    parts = [chi0]
    offset = chi0.shape[0]
    if isinstance(target, EquilibriumTarget):
        chi_L = np.concatenate([np.tile(target.u_s, n), np.tile(target.y_s, n)])
        layout["chiL"] = (offset, offset + chi_L.shape[0])
        parts.append(chi_L)
    elif isinstance(target, ReferenceTarget):
        layout["u_r"] = (offset, offset + len(target.u_r))
        layout["y_r"] = (offset + len(target.u_r), offset + len(target.u_r) + len(target.y_r))
        parts.extend([np.asarray(target.u_r, dtype=float), np.asarray(target.y_r, dtype=float)])
    return ParameterVector(chi=np.concatenate(parts), layout=layout)


def lyapunov_terminal_weight(data_A: np.ndarray, Qbar: np.ndarray) -> np.ndarray:
    """
    Solve A'PA - P + Qbar = 0 for the terminal weight P.

    Raises:
        ConfigError: data_A is not Schur stable
    """
    data_A = np.atleast_2d(np.asarray(data_A, dtype=float))
    Qbar = np.atleast_2d(np.asarray(Qbar, dtype=float))
    radius = float(np.max(np.abs(np.linalg.eigvals(data_A))))
    if radius >= 1.0:
        raise ConfigError(f"data predictor is not Schur stable (spectral radius {radius:.4f})")
    P = scipy.linalg.solve_discrete_lyapunov(data_A.T, Qbar)
    return 0.5 * (P + P.T)
