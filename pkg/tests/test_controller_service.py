"""Tests for spec loading, overrides and end-to-end synthesis."""
import json

import numpy as np
import pytest

from control.models import DDPCSpec, TrajectoryData
from errors import ConfigError, PersistencyError
from services.controller_service import ControllerService, load_spec, parse_overrides
from services.plants import builtin_names
from services.simulation_service import generate_dataset


def test_builtin_names():
    """Test the available benchmark plants."""
    assert builtin_names() == ["four_tank", "siso"]


def test_parse_overrides_reads_json_values():
    """Test that numbers and lists are parsed and plain words stay strings."""
    overrides = parse_overrides(["rho_alpha=2.5", "u_max=[1, 2]", "variant=nominal"])
    assert overrides == {"rho_alpha": 2.5, "u_max": [1, 2], "variant": "nominal"}


def test_parse_overrides_requires_equals():
    """Test that an entry without '=' is rejected."""
    with pytest.raises(ConfigError):
        parse_overrides(["rho_alpha"])


def test_load_builtin_spec_with_override():
    """Test that overrides replace builtin settings."""
    spec, plant = load_spec("siso", {"rho_alpha": 2.0})
    assert plant is not None and plant.name == "siso"
    assert spec.rho_alpha == 2.0
    assert spec.variant == "relaxed"


def test_load_spec_from_file(tmp_path):
    """Test a JSON problem file."""
    path = tmp_path / "problem.json"
    path.write_text(json.dumps({"variant": "nominal", "L": 5, "n": 2, "u_min": -1, "u_max": 1}))
    spec, plant = load_spec(str(path))
    assert plant is None
    assert spec.L == 5
    assert spec.input_set(1).size == 2


def test_load_spec_rejects_bad_values(tmp_path):
    """Test that invalid settings become configuration errors."""
    path = tmp_path / "problem.json"
    path.write_text(json.dumps({"L": 1, "n": 3}))
    with pytest.raises(ConfigError):
        load_spec(str(path))
    with pytest.raises(ConfigError):
        load_spec("siso", {"rho_alpha": -1.0})


def test_load_spec_rejects_invalid_json(tmp_path):
    """Test that a malformed file is a configuration error."""
    path = tmp_path / "problem.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_spec(str(path))


def test_lyapunov_terminal_weight_is_resolved(siso_plant, siso_noisy):
    """Test that a data-driven P replaces the lyapunov request."""
    spec = ControllerService(siso_plant.spec).resolve_spec(siso_noisy.data)
    assert spec.terminal_weight == "given"
    P = np.asarray(spec.P)
    assert P.shape == (6, 6)
    np.testing.assert_allclose(P, P.T, atol=1e-10)
    assert np.linalg.eigvalsh(P).min() >= -1e-9


def test_nominal_qp_is_parameterized_by_window(siso_noisy):
    """Test that the terminal block is frozen for regulation problems."""
    spec = DDPCSpec(variant="nominal", L=2, n=1, R=0.1, u_min=-2.0, u_max=2.0)
    _, _, qp = ControllerService(spec).build_qp(siso_noisy.data)
    assert qp.n_chi == 1 * (1 + 2)
    assert qp.layout == {"chi0": (0, 3)}
    assert "chiL" in qp.frozen_segments


def test_four_tank_law_is_linear(four_tank_plant):
    """Test that the unconstrained robust problem gives a single region."""
    dataset = generate_dataset(four_tank_plant.system, 400, -1.0, 1.0, seed=0)
    outcome = ControllerService(four_tank_plant.spec).synthesize(dataset.data)
    assert len(outcome.law.regions) == 1
    assert outcome.qp.n_chi == 4 * (2 + 2)


def test_synthesis_rejects_non_persistent_data(siso_plant):
    """Test that a constant input cannot be used for synthesis."""
    data = TrajectoryData(u=np.ones(50), y=np.zeros((50, 2)))
    with pytest.raises(PersistencyError):
        ControllerService(siso_plant.spec).synthesize(data)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
