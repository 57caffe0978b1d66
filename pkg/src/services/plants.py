"""Built-in benchmark plants with their default problem settings."""
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from control.models import DDPCSpec, LTISystem
from errors import ConfigError


class BuiltinPlant(BaseModel):
    """A benchmark plant, its default controller spec and data-collection settings."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str
    system: LTISystem
    spec: DDPCSpec
    N: int = Field(..., description="Training record length")
    excitation: Tuple[float, float] = Field(..., description="Uniform input bounds")
    snr_db: Optional[float] = Field(None, description="Measurement noise set by SNR instead of Upsilon")
    process_noise_in_data: bool = Field(True, description="Training record carries process noise from Delta")
    test_state: List[float] = Field(..., description="Initial state of the closed-loop test")
    N_test: int = Field(..., description="Closed-loop test length")


def _siso() -> BuiltinPlant:
    system = LTISystem(
        A=[[0.7326, -0.0861], [0.1722, 0.9909]],
        B=[[0.0609], [0.0064]],
        C=np.eye(2),
        D=np.zeros((2, 1)),
        Delta=np.zeros((2, 2)),
        Upsilon=np.zeros((2, 2)),
    )
    spec = DDPCSpec(
        variant="relaxed",
        L=2,
        n=2,
        Q=1.0,
        R=0.01,
        rho_alpha=5.0,
        u_min=-2.0,
        u_max=2.0,
        terminal_weight="lyapunov",
        state_measured=True,
    )
    return BuiltinPlant(
        name="siso",
        system=system,
        spec=spec,
        N=100,
        excitation=(-5.0, 5.0),
        snr_db=20.0,
        test_state=[1.0, 1.0],
        N_test=50,
    )


def _four_tank() -> BuiltinPlant:
    system = LTISystem(
        A=[
            [0.921, 0.0, 0.041, 0.0],
            [0.0, 0.918, 0.0, 0.033],
            [0.0, 0.0, 0.924, 0.0],
            [0.0, 0.0, 0.0, 0.937],
        ],
        B=[[0.017, 0.001], [0.001, 0.023], [0.0, 0.061], [0.072, 0.0]],
        C=[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]],
        D=np.zeros((2, 2)),
        Delta=1e-3 * np.array([
            [10.0, 1.0, 2.0, 3.0],
            [1.0, 10.01, 2.0, 1.5],
            [2.0, 2.0, 3.0, 4.0],
            [3.0, 1.5, 4.0, 7.0],
        ]),
        Upsilon=5.76e-4 * np.eye(2),
    )
    # y_s is the rounded operating point; the slack absorbs its mismatch with the rounded A, B.
    # Training records carry measurement noise only; Delta acts in the closed-loop runs.
    spec = DDPCSpec(
        variant="robust",
        L=30,
        n=4,
        Q=3.0,
        R=1e-4,
        rho_alpha=0.1,
        rho_sigma=1e3,
        u_s=[1.0, 1.0],
        y_s=[0.65, 0.77],
    )
    return BuiltinPlant(
        name="four_tank",
        system=system,
        spec=spec,
        N=400,
        excitation=(-1.0, 1.0),
        snr_db=None,
        process_noise_in_data=False,
        test_state=[0.0, 0.0, 0.0, 0.0],
        N_test=600,
    )


_BUILTINS = {"siso": _siso, "four_tank": _four_tank}


def builtin_names() -> List[str]:
    return sorted(_BUILTINS)


def builtin_system(name: str) -> BuiltinPlant:
    """
    Look up a benchmark plant by name.

    Raises:
        ConfigError: Unknown name
    """
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise ConfigError(f"unknown builtin system '{name}' (available: {', '.join(builtin_names())})") from None
