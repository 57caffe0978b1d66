"""Problem configuration loading and end-to-end controller synthesis."""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict, ValidationError

from builders.problem_builder import ProblemBuilder
from control.models import CompactQP, DDPCSpec, ExplicitLaw, HankelView, TrajectoryData
from data.hankel import slice_hankel
from errors import ConfigError, DimensionMismatchError
from services.equivalence_service import (
    build_data_matrices,
    build_selection_maps,
    data_predictor,
    terminal_weight_from_data,
)
from services.plants import BuiltinPlant, builtin_names, builtin_system
from solvers.explicit_mpqp import ExplicitSynthesizer

logger = logging.getLogger(__name__)


def parse_overrides(pairs: Optional[list]) -> Dict[str, Any]:
    """
    Turn repeated key=value options into a dict; values are read as JSON when possible.

    Raises:
        ConfigError: An entry has no '='
    """
    overrides: Dict[str, Any] = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"override '{pair}' is not of the form key=value")
        key, raw = pair.split("=", 1)
        try:
            overrides[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            overrides[key.strip()] = raw
    return overrides


def load_spec(config: str, overrides: Optional[Dict[str, Any]] = None) -> Tuple[DDPCSpec, Optional[BuiltinPlant]]:
    """
    Load a problem spec from a JSON file or a builtin plant name.

    Returns:
        (spec, builtin plant or None)

    Raises:
        ConfigError: Unknown name, unreadable file or invalid settings
    """
    plant: Optional[BuiltinPlant] = None
    if config in builtin_names():
        plant = builtin_system(config)
        raw = plant.spec.model_dump()
    else:
        path = Path(config)
        if not path.exists():
            raise ConfigError(f"config '{config}' is neither a file nor one of {builtin_names()}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: expected a JSON object")
    raw.update(overrides or {})
    try:
        spec = DDPCSpec.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"invalid problem settings: {e}") from e
    return spec, plant


class SynthesisOutcome(BaseModel):
    """Everything produced by one synthesis run."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    spec: DDPCSpec
    hv: HankelView
    qp: CompactQP
    law: ExplicitLaw


class ControllerService:
    """Turns a spec and a trajectory into the runtime QP and its explicit law."""

    def __init__(self, spec: DDPCSpec, max_workers: Optional[int] = None):
        self.spec = spec
        self.max_workers = max_workers

    def resolve_spec(self, data: TrajectoryData) -> DDPCSpec:
        """Fill in a data-driven terminal weight when the relaxed spec asks for one."""
        spec = self.spec
        if spec.variant != "relaxed" or spec.terminal_weight != "lyapunov":
            return spec
        kind = "state" if spec.state_measured else "output"
        dm = build_data_matrices(data, spec.n, kind)
        predictor = data_predictor(dm, require_full_rank=False)
        maps = build_selection_maps(spec.n, data.m, data.p, predictor)
        weights = terminal_weight_from_data(
            kind, spec.matrix("Q", data.p), spec.matrix("R", data.m), predictor, maps
        )
        logger.info(f"Terminal weight from data ({kind} predictor, rank {predictor.rank})")
        return spec.model_copy(update={"P": weights.P.tolist(), "terminal_weight": "given"})

    def build_qp(self, data: TrajectoryData, require_persistency: bool = True) -> Tuple[DDPCSpec, HankelView, CompactQP]:
        """
        Build the runtime QP.

        Nominal and robust problems get their terminal block frozen at the spec's
        equilibrium, so their parameter is the initial window alone.
        """
        hv = slice_hankel(data, self.spec.L, self.spec.n, require_persistency=require_persistency)
        spec = self.resolve_spec(data)
        builder = ProblemBuilder(spec, hv)
        qp = builder.build()
        if spec.variant in ("nominal", "robust"):
            qp = qp.freeze("chiL", builder.terminal_stack())
        return spec, hv, qp

    def synthesize(
        self,
        data: TrajectoryData,
        max_active: Optional[int] = None,
        require_persistency: bool = True,
    ) -> SynthesisOutcome:
        """
        Build the QP and enumerate its explicit law.

        Raises:
            DimensionMismatchError: Data width disagrees with an explicit weight
            SynthesisError: Enumeration failed or produced no region
        """
        spec, hv, qp = self.build_qp(data, require_persistency=require_persistency)
        if qp.m != data.m:
            raise DimensionMismatchError(f"QP input dimension {qp.m} differs from data width {data.m}")
        cap = max_active if max_active is not None else spec.max_active
        law = ExplicitSynthesizer(qp, max_active=cap, max_workers=self.max_workers).synthesize()
        return SynthesisOutcome(spec=spec, hv=hv, qp=qp, law=law)
