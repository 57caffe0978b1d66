"""Shared fixtures: import path, builtin plants and recorded datasets."""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from control.models import DDPCSpec, LTISystem  # noqa: E402
from services.plants import builtin_system  # noqa: E402
from services.simulation_service import generate_dataset  # noqa: E402


@pytest.fixture
def siso_plant():
    return builtin_system("siso")


@pytest.fixture
def four_tank_plant():
    return builtin_system("four_tank")


@pytest.fixture
def siso_noiseless(siso_plant):
    """Noiseless record of the SISO plant; outputs are the full state."""
    return generate_dataset(siso_plant.system, 100, -5.0, 5.0, seed=0, noisy=False)


@pytest.fixture
def siso_noisy(siso_plant):
    return generate_dataset(siso_plant.system, 100, -5.0, 5.0, seed=1, snr_db=20.0)


@pytest.fixture
def output_system(siso_plant):
    """SISO plant observed through its first state only."""
    sys_ = siso_plant.system
    return LTISystem(
        A=sys_.A,
        B=sys_.B,
        C=[[1.0, 0.0]],
        D=[[0.0]],
        Delta=np.zeros((2, 2)),
        Upsilon=np.zeros((1, 1)),
    )


@pytest.fixture
def output_noiseless(output_system):
    return generate_dataset(output_system, 100, -5.0, 5.0, seed=0, noisy=False)


@pytest.fixture
def output_spec():
    return DDPCSpec(
        variant="relaxed",
        L=2,
        n=2,
        Q=1.0,
        R=0.01,
        rho_alpha=1e-8,
        u_min=-2.0,
        u_max=2.0,
        terminal_weight="lyapunov",
        state_measured=False,
    )
