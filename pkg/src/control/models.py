"""Domain models for data-driven predictive control problems, laws and simulations."""
import hashlib
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from errors import ConfigError, DimensionMismatchError
from utils.linalg import as_vector, as_weight_matrix, is_psd, readonly

Variant = Literal["nominal", "tracking", "robust", "relaxed"]
WeightValue = Union[float, List[float], List[List[float]]]
BoundValue = Optional[Union[float, List[float]]]
Layout = Dict[str, Tuple[int, int]]


def _matrix(value: Any) -> np.ndarray:
    array = np.asarray(value, dtype=float)
    if array.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {array.shape}")
    return readonly(array)


def _vector(value: Any) -> np.ndarray:
    return readonly(np.asarray(value, dtype=float).reshape(-1))


class TrajectoryData(BaseModel):
    """Recorded input/output (or input/state) sequences of an unknown LTI system."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    u: np.ndarray = Field(..., description="N x m input samples, one row per time step")
    y: np.ndarray = Field(..., description="N x p output samples, one row per time step")

    @field_validator("u", "y", mode="before")
    @classmethod
    def _as_samples(cls, value: Any) -> np.ndarray:
        array = np.asarray(value, dtype=float)
        if array.ndim == 1:
            array = array.reshape(-1, 1)
        if array.ndim != 2:
            raise ValueError(f"samples must be a sequence of vectors, got shape {array.shape}")
        return readonly(array)

    @model_validator(mode="after")
    def _check_lengths(self) -> "TrajectoryData":
        if self.u.shape[0] != self.y.shape[0]:
            raise DimensionMismatchError(
                f"input has {self.u.shape[0]} samples but output has {self.y.shape[0]}"
            )
        return self

    @property
    def m(self) -> int:
        return self.u.shape[1]

    @property
    def p(self) -> int:
        return self.y.shape[1]

    @property
    def N(self) -> int:
        return self.u.shape[0]

    def min_length(self, L: int, n: int) -> int:
        """Shortest record that can be persistently exciting of order L+2n."""
        return (self.m + 1) * (L + 2 * n) - 1


class PersistencyReport(BaseModel):
    """Outcome of a persistency-of-excitation rank test."""

    persistent: bool
    rank: int
    required_rank: int
    order: int


class HankelView(BaseModel):
    """Depth L+n Hankel matrices of the input and output data with their block slices."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    Hu: np.ndarray = Field(..., description="m(L+n) x n_alpha input Hankel matrix")
    Hy: np.ndarray = Field(..., description="p(L+n) x n_alpha output Hankel matrix")
    L: int = Field(..., ge=1, description="Prediction horizon")
    n: int = Field(..., ge=1, description="System order upper bound")
    m: int = Field(..., ge=1)
    p: int = Field(..., ge=1)

    @field_validator("Hu", "Hy", mode="before")
    @classmethod
    def _as_matrix(cls, value: Any) -> np.ndarray:
        return _matrix(value)

    @model_validator(mode="after")
    def _check_shapes(self) -> "HankelView":
        depth = self.L + self.n
        if self.Hu.shape[0] != self.m * depth or self.Hy.shape[0] != self.p * depth:
            raise DimensionMismatchError("Hankel row counts do not match m(L+n) and p(L+n)")
        if self.Hu.shape[1] != self.Hy.shape[1]:
            raise DimensionMismatchError("input and output Hankel matrices differ in columns")
        return self

    @property
    def n_alpha(self) -> int:
        return self.Hu.shape[1]

    @property
    def HuP(self) -> np.ndarray:
        return self.Hu[: self.n * self.m]

    @property
    def HuF(self) -> np.ndarray:
        return self.Hu[self.n * self.m:]

    @property
    def HuT(self) -> np.ndarray:
        return self.Hu[self.L * self.m:]

    @property
    def HyP(self) -> np.ndarray:
        return self.Hy[: self.n * self.p]

    @property
    def HyF(self) -> np.ndarray:
        return self.Hy[self.n * self.p:]

    @property
    def HyT(self) -> np.ndarray:
        return self.Hy[self.L * self.p:]

    def Hu_k(self, k: int) -> np.ndarray:
        """Block row producing the predicted input at step k (0 <= k < L)."""
        row = self.n + k
        return self.Hu[row * self.m:(row + 1) * self.m]

    def Hy_k(self, k: int) -> np.ndarray:
        """Block row producing the predicted output at step k (0 <= k < L)."""
        row = self.n + k
        return self.Hy[row * self.p:(row + 1) * self.p]


class Halfspace(BaseModel):
    """One linear inequality row . v <= bound."""

    row: List[float]
    bound: float


class HalfspaceSet(BaseModel):
    """Polyhedron {v : A v <= b}; an empty row list means the whole space."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    A: np.ndarray
    b: np.ndarray

    @field_validator("A", mode="before")
    @classmethod
    def _as_matrix(cls, value: Any) -> np.ndarray:
        return _matrix(value)

    @field_validator("b", mode="before")
    @classmethod
    def _as_vector(cls, value: Any) -> np.ndarray:
        return _vector(value)

    @model_validator(mode="after")
    def _check_rows(self) -> "HalfspaceSet":
        if self.A.shape[0] != self.b.shape[0]:
            raise DimensionMismatchError("halfspace rows and bounds differ in count")
        return self

    @classmethod
    def unconstrained(cls, dim: int) -> "HalfspaceSet":
        return cls(A=np.zeros((0, dim)), b=np.zeros(0))

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def size(self) -> int:
        return self.A.shape[0]

    def contains(self, v: np.ndarray, tol: float = 1e-9) -> bool:
        if self.size == 0:
            return True
        return bool(np.all(self.A @ np.asarray(v, dtype=float) <= self.b + tol))


class EquilibriumTarget(BaseModel):
    """Equilibrium (u^s, y^s) stacked into the terminal parameter block."""

    u_s: List[float]
    y_s: List[float]


class ReferenceTarget(BaseModel):
    """Reference pair (u^r, y^r) appended to the tracking parameter."""

    u_r: List[float]
    y_r: List[float]


class DDPCSpec(BaseModel):
    """
    Data-driven predictive control problem configuration.

    Weights accept a scalar (multiple of identity), a list (diagonal) or a nested
    list (full matrix). Box bounds are expanded to halfspace pairs and combined
    with any explicit halfspace lists.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    variant: Variant = Field("nominal", description="nominal, tracking, robust or relaxed")
    L: int = Field(..., ge=1, description="Prediction horizon")
    n: int = Field(..., ge=1, description="Upper bound on the system order")
    Q: WeightValue = Field(1.0, description="Output weight (PSD)")
    R: WeightValue = Field(1.0, description="Input weight (PD)")
    rho_alpha: float = Field(1.0, gt=0, description="Ridge weight on alpha")
    rho_sigma: Optional[float] = Field(None, gt=0, description="Slack weight (robust variant)")
    ridge_center: Literal["equilibrium", "origin"] = Field(
        "equilibrium", description="Center the alpha ridge on the equilibrium trajectory or on zero"
    )
    u_s: Union[float, List[float]] = Field(0.0, description="Equilibrium input")
    y_s: Union[float, List[float]] = Field(0.0, description="Equilibrium output")
    Psi: Optional[WeightValue] = Field(None, description="Input reference weight (tracking)")
    Phi: Optional[WeightValue] = Field(None, description="Output reference weight (tracking)")
    P: Optional[WeightValue] = Field(None, description="Terminal weight on the last n pairs (relaxed)")
    terminal_weight: Literal["given", "lyapunov"] = Field(
        "given", description="Use P as given or compute it from data (relaxed variant)"
    )
    state_measured: bool = Field(False, description="Outputs are the full state")
    u_min: BoundValue = None
    u_max: BoundValue = None
    y_min: BoundValue = None
    y_max: BoundValue = None
    us_min: BoundValue = None
    us_max: BoundValue = None
    ys_min: BoundValue = None
    ys_max: BoundValue = None
    input_constraints: List[Halfspace] = Field(default_factory=list)
    output_constraints: List[Halfspace] = Field(default_factory=list)
    us_constraints: List[Halfspace] = Field(default_factory=list)
    ys_constraints: List[Halfspace] = Field(default_factory=list)
    max_active: Optional[int] = Field(None, ge=0, description="Cap on enumerated active-set size")

    @model_validator(mode="after")
    def _check_horizon(self) -> "DDPCSpec":
        if self.L < self.n:
            raise ValueError(f"horizon L={self.L} must be at least the order bound n={self.n}")
        return self

    def matrix(self, name: str, dim: int) -> np.ndarray:
        value = getattr(self, name)
        if value is None:
            raise ConfigError(f"{name} is required for the {self.variant} variant")
        return as_weight_matrix(value, dim, name)

    def equilibrium(self, m: int, p: int) -> Tuple[np.ndarray, np.ndarray]:
        return as_vector(self.u_s, m, "u_s"), as_vector(self.y_s, p, "y_s")

    def input_set(self, m: int) -> HalfspaceSet:
        return _halfspace_set(self.u_min, self.u_max, self.input_constraints, m, "input")

    def output_set(self, p: int) -> HalfspaceSet:
        return _halfspace_set(self.y_min, self.y_max, self.output_constraints, p, "output")

    def us_set(self, m: int) -> HalfspaceSet:
        return _halfspace_set(self.us_min, self.us_max, self.us_constraints, m, "u_s")

    def ys_set(self, p: int) -> HalfspaceSet:
        return _halfspace_set(self.ys_min, self.ys_max, self.ys_constraints, p, "y_s")


def _halfspace_set(
    lower: BoundValue,
    upper: BoundValue,
    extra: List[Halfspace],
    dim: int,
    name: str,
) -> HalfspaceSet:
    rows: List[np.ndarray] = []
    bounds: List[float] = []
    hi = None if upper is None else as_vector(upper, dim, f"{name} upper bound")
    lo = None if lower is None else as_vector(lower, dim, f"{name} lower bound")
    for i in range(dim):
        unit = np.eye(dim)[i]
        if hi is not None and np.isfinite(hi[i]):
            rows.append(unit)
            bounds.append(hi[i])
        if lo is not None and np.isfinite(lo[i]):
            rows.append(-unit)
            bounds.append(-lo[i])
    for halfspace in extra:
        if len(halfspace.row) != dim:
            raise ConfigError(f"{name} constraint row has {len(halfspace.row)} entries, expected {dim}")
        rows.append(np.asarray(halfspace.row, dtype=float))
        bounds.append(halfspace.bound)
    if not rows:
        return HalfspaceSet.unconstrained(dim)
    return HalfspaceSet(A=np.vstack(rows), b=np.asarray(bounds))


class ParameterVector(BaseModel):
    """Runtime parameter chi with named segments (chi0, chiL, u_r, y_r)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    chi: np.ndarray
    layout: Layout

    @field_validator("chi", mode="before")
    @classmethod
    def _as_vector(cls, value: Any) -> np.ndarray:
        return _vector(value)

    @property
    def n_chi(self) -> int:
        return self.chi.shape[0]


class CompactQP(BaseModel):
    """
    Parameterized strictly convex QP

        min_a  1/2 a'W a + (c0 + C_par chi)'a
        s.t.   H_eq a = S_eq chi + h_eq
               G_in a <= beta + phi chi

    U_map sends the decision vector to the predicted input sequence; its first
    m rows give the input applied at the current step.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    W: np.ndarray
    c0: np.ndarray
    C_par: np.ndarray
    H_eq: np.ndarray
    S_eq: np.ndarray
    h_eq: np.ndarray
    G_in: np.ndarray
    beta: np.ndarray
    phi: np.ndarray
    U_map: np.ndarray
    m: int = Field(..., ge=1, description="Input dimension")
    variant: str = Field("generic")
    layout: Layout = Field(default_factory=dict, description="Named parameter segments")
    frozen_segments: Dict[str, List[float]] = Field(default_factory=dict)

    @field_validator("W", "C_par", "H_eq", "S_eq", "G_in", "phi", "U_map", mode="before")
    @classmethod
    def _as_matrix(cls, value: Any) -> np.ndarray:
        return _matrix(value)

    @field_validator("c0", "h_eq", "beta", mode="before")
    @classmethod
    def _as_vector(cls, value: Any) -> np.ndarray:
        return _vector(value)

    @model_validator(mode="after")
    def _check_dimensions(self) -> "CompactQP":
        n_d = self.W.shape[0]
        n_chi = self.C_par.shape[1]
        checks = [
            ("W", self.W.shape, (n_d, n_d)),
            ("c0", self.c0.shape, (n_d,)),
            ("C_par", self.C_par.shape, (n_d, n_chi)),
            ("H_eq", self.H_eq.shape, (self.H_eq.shape[0], n_d)),
            ("S_eq", self.S_eq.shape, (self.H_eq.shape[0], n_chi)),
            ("h_eq", self.h_eq.shape, (self.H_eq.shape[0],)),
            ("G_in", self.G_in.shape, (self.G_in.shape[0], n_d)),
            ("beta", self.beta.shape, (self.G_in.shape[0],)),
            ("phi", self.phi.shape, (self.G_in.shape[0], n_chi)),
            ("U_map", self.U_map.shape, (self.U_map.shape[0], n_d)),
        ]
        for name, actual, expected in checks:
            if actual != expected:
                raise DimensionMismatchError(f"{name} has shape {actual}, expected {expected}")
        if self.U_map.shape[0] < self.m:
            raise DimensionMismatchError("U_map has fewer rows than the input dimension")
        for name, (start, stop) in self.layout.items():
            if not 0 <= start <= stop <= n_chi:
                raise DimensionMismatchError(f"parameter segment {name} outside [0, {n_chi})")
        return self

    @property
    def n_d(self) -> int:
        return self.W.shape[0]

    @property
    def n_chi(self) -> int:
        return self.C_par.shape[1]

    @property
    def n_eq(self) -> int:
        return self.H_eq.shape[0]

    @property
    def n_in(self) -> int:
        return self.G_in.shape[0]

    def check_parameter(self, chi: Union[np.ndarray, ParameterVector]) -> np.ndarray:
        if isinstance(chi, ParameterVector):
            chi = chi.chi
        chi = np.asarray(chi, dtype=float).reshape(-1)
        if chi.shape[0] != self.n_chi:
            raise DimensionMismatchError(f"parameter has {chi.shape[0]} entries, QP expects {self.n_chi}")
        return chi

    def linear_term(self, chi: np.ndarray) -> np.ndarray:
        return self.c0 + self.C_par @ chi

    def equality_rhs(self, chi: np.ndarray) -> np.ndarray:
        return self.S_eq @ chi + self.h_eq

    def inequality_rhs(self, chi: np.ndarray) -> np.ndarray:
        return self.beta + self.phi @ chi

    def objective(self, alpha: np.ndarray, chi: np.ndarray) -> float:
        return float(0.5 * alpha @ self.W @ alpha + self.linear_term(chi) @ alpha)

    def first_input(self, alpha: np.ndarray) -> np.ndarray:
        return self.U_map[: self.m] @ alpha

    def _arrays(self) -> Dict[str, np.ndarray]:
        return {
            "W": self.W, "c0": self.c0, "C_par": self.C_par, "H_eq": self.H_eq,
            "S_eq": self.S_eq, "h_eq": self.h_eq, "G_in": self.G_in,
            "beta": self.beta, "phi": self.phi, "U_map": self.U_map,
        }

    def fingerprint(self) -> str:
        """SHA-256 over variant, layout and every array (shape and raw bytes)."""
        digest = hashlib.sha256()
        digest.update(f"{self.variant}|{self.m}|{sorted(self.layout.items())}".encode())
        for name, array in self._arrays().items():
            digest.update(f"{name}{array.shape}".encode())
            digest.update(np.ascontiguousarray(array, dtype=np.float64).tobytes())
        return digest.hexdigest()

    def storage_bytes(self) -> int:
        """Bytes needed to hold every matrix of the implicit problem."""
        return int(sum(array.nbytes for array in self._arrays().values()))

    def freeze(self, segment: str, value: np.ndarray) -> "CompactQP":
        """
        Partially evaluate the QP at a fixed value of one parameter segment.

        The segment's columns are folded into c0, h_eq and beta and removed from
        C_par, S_eq and phi; later segments shift left in the layout.
        """
        if segment not in self.layout:
            raise ConfigError(f"unknown parameter segment '{segment}'")
        start, stop = self.layout[segment]
        value = np.asarray(value, dtype=float).reshape(-1)
        if value.shape[0] != stop - start:
            raise DimensionMismatchError(f"segment {segment} has {stop - start} entries, got {value.shape[0]}")
        keep = np.r_[0:start, stop:self.n_chi]
        width = stop - start
        layout = {}
        for name, (lo, hi) in self.layout.items():
            if name == segment:
                continue
            layout[name] = (lo - width, hi - width) if lo >= stop else (lo, hi)
        frozen = dict(self.frozen_segments)
        frozen[segment] = value.tolist()
        return self.model_copy(
            update={
                "c0": readonly(self.c0 + self.C_par[:, start:stop] @ value),
                "C_par": readonly(self.C_par[:, keep]),
                "h_eq": readonly(self.h_eq + self.S_eq[:, start:stop] @ value),
                "S_eq": readonly(self.S_eq[:, keep]),
                "beta": readonly(self.beta + self.phi[:, start:stop] @ value),
                "phi": readonly(self.phi[:, keep]),
                "layout": layout,
                "frozen_segments": frozen,
            }
        )


class OracleSolution(BaseModel):
    """Result of a dense QP solve."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    alpha: np.ndarray = Field(..., description="Decision vector")
    lam: np.ndarray = Field(..., description="Inequality multipliers (>= 0)")
    mu: np.ndarray = Field(..., description="Equality multipliers")
    active_set: List[int] = Field(default_factory=list)
    status: Literal["optimal", "infeasible", "iteration-limit"]
    iterations: int = 0


class Region(BaseModel):
    """One affine piece of an explicit law together with its polyhedral region E chi <= K."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    active_set: List[int]
    F: np.ndarray
    f: np.ndarray
    Fseq: np.ndarray
    fseq: np.ndarray
    E: np.ndarray
    K: np.ndarray
    n_lambda: int
    alpha_gain: Optional[np.ndarray] = None
    alpha_offset: Optional[np.ndarray] = None
    dual_gain: Optional[np.ndarray] = None
    dual_offset: Optional[np.ndarray] = None

    @field_validator("F", "Fseq", "E", "alpha_gain", "dual_gain", mode="before")
    @classmethod
    def _as_matrix(cls, value: Any) -> Optional[np.ndarray]:
        return None if value is None else _matrix(value)

    @field_validator("f", "fseq", "K", "alpha_offset", "dual_offset", mode="before")
    @classmethod
    def _as_vector(cls, value: Any) -> Optional[np.ndarray]:
        return None if value is None else _vector(value)

    def contains(self, chi: np.ndarray, tol: float) -> bool:
        """Membership with row-wise tolerance tol * (1 + |K_i|)."""
        if self.E.shape[0] == 0:
            return True
        return bool(np.all(self.E @ chi - self.K <= tol * (1.0 + np.abs(self.K))))

    def control(self, chi: np.ndarray) -> np.ndarray:
        return self.F @ chi + self.f

    def alpha(self, chi: np.ndarray) -> np.ndarray:
        if self.alpha_gain is None:
            raise ValueError("region was stored without its primal map")
        return self.alpha_gain @ chi + self.alpha_offset

    def multipliers(self, chi: np.ndarray) -> np.ndarray:
        """Stacked (inequality, equality) multipliers of the active constraints."""
        if self.dual_gain is None:
            raise ValueError("region was stored without its dual map")
        return self.dual_gain @ chi + self.dual_offset


class SynthesisStats(BaseModel):
    """Bookkeeping of one active-set enumeration."""

    candidates: int = 0
    licq_failures: int = 0
    empty_pruned: int = 0
    duplicates_removed: int = 0
    dropped_equalities: int = 0
    seconds: float = 0.0


class ExplicitLaw(BaseModel):
    """Piecewise-affine control law u = F_i chi + f_i on E_i chi <= K_i."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    regions: List[Region]
    qp_fingerprint: str
    m: int
    n_chi: int
    variant: str = "generic"
    layout: Layout = Field(default_factory=dict)
    stats: SynthesisStats = Field(default_factory=SynthesisStats)

    def locate(self, chi: np.ndarray, tol: float) -> Optional[int]:
        """Index of the first stored region containing chi, or None."""
        for index, region in enumerate(self.regions):
            if region.contains(chi, tol):
                return index
        return None


class LTISystem(BaseModel):
    """Discrete-time plant x+ = Ax + Bu + w, y = Cx + Du + v with w ~ N(0, Delta), v ~ N(0, Upsilon)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Delta: np.ndarray
    Upsilon: np.ndarray

    @field_validator("A", "B", "C", "D", "Delta", "Upsilon", mode="before")
    @classmethod
    def _as_matrix(cls, value: Any) -> np.ndarray:
        return _matrix(value)

    @model_validator(mode="after")
    def _check_dimensions(self) -> "LTISystem":
        n_x, m, p = self.A.shape[0], self.B.shape[1], self.C.shape[0]
        expected = {
            "A": (n_x, n_x), "B": (n_x, m), "C": (p, n_x), "D": (p, m),
            "Delta": (n_x, n_x), "Upsilon": (p, p),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionMismatchError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        for name in ("Delta", "Upsilon"):
            if not is_psd(getattr(self, name)):
                raise ValueError(f"{name} must be symmetric positive semi-definite")
        return self

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def steady_state(self, u_s: np.ndarray) -> np.ndarray:
        """State x with x = Ax + B u_s."""
        return np.linalg.solve(np.eye(self.n_x) - self.A, self.B @ u_s)


class ClosedLoopResult(BaseModel):
    """Trajectories and metrics of one receding-horizon simulation."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    u_traj: np.ndarray = Field(..., description="Applied inputs, one row per step")
    y_traj: np.ndarray = Field(..., description="Measured outputs, one row per step")
    x_traj: np.ndarray = Field(..., description="Plant states, one more row than inputs")
    region_ids: List[int] = Field(default_factory=list)
    step_times: List[float] = Field(default_factory=list)
    stable: bool = True
    aborted: bool = False
    message: Optional[str] = None
    J: Optional[float] = None
    rmse_o: Optional[float] = None
    rmse_ie: Optional[float] = None

    @property
    def steps(self) -> int:
        return self.u_traj.shape[0]


class DataMatrices(BaseModel):
    """Time-aligned input and state snapshots used by one-step data predictors."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: Literal["state", "output"]
    U: np.ndarray = Field(..., description="m x N_c input snapshot")
    X0: np.ndarray = Field(..., description="state (or non-minimal state) at each column's time")
    X1: np.ndarray = Field(..., description="state one step later")
    n: int
    m: int
    p: int

    @model_validator(mode="after")
    def _check_columns(self) -> "DataMatrices":
        if not self.U.shape[1] == self.X0.shape[1] == self.X1.shape[1]:
            raise DimensionMismatchError("data snapshots differ in column count")
        return self


class Predictor(BaseModel):
    """One-step data predictor x+ = B_hat u + A_hat x."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: Literal["state", "output"]
    B_hat: np.ndarray
    A_hat: np.ndarray
    rank: int
    residual: float


class SelectionMaps(BaseModel):
    """Index maps between the non-minimal state, the latest sample and the plant state."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    V: np.ndarray = Field(..., description="(m+p) x n(m+p) latest-pair selector")
    Tcal: np.ndarray = Field(..., description="n(m+p) square shift of the stored window")
    T: Optional[np.ndarray] = Field(None, description="n_x x n(m+p) state reconstruction (state case)")


class WeightMapping(BaseModel):
    """Weights of the relaxed data-driven problem and of its model-based twin."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: Literal["state", "output"]
    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    Q_tilde: np.ndarray
    R_tilde: np.ndarray
    P_tilde: np.ndarray


class RunConfig(BaseModel):
    """Everything needed to reproduce one CLI invocation."""

    model_config = ConfigDict(extra="forbid")

    subcommand: str
    config_path: Optional[str] = None
    data_path: Optional[str] = None
    seed: int = 0
    output_dir: str = "results"
    overrides: Dict[str, Any] = Field(default_factory=dict)
