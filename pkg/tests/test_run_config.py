"""Tests for run configurations."""

import pytest
from pydantic import ValidationError

from app.errors import InvalidParameter, ParseError
from app.models.configuration import DualConfig
from app.models.params import KernelSpec
from app.models.run_config import RunConfig

EXAMPLE = """
[run]
seed = 7
replicas = 200

[process]
name = "irw"
dimension = 2

[density]
rho = 0.5

[field]
x = [[0, 0], [1, 0]]
configs = [[[0, 0]], [[0, 0], [0, 1]]]

[grid]
N = [4, 8, 16, 32]
t = [0.25]
"""


def test_defaults():
    """Test the default configuration."""
    config = RunConfig()
    assert config.run.seed == 0
    assert config.run.replicas == 10_000
    assert config.kernel() == KernelSpec.nearest_neighbor(1)
    assert config.grid.N == [8, 16, 32, 64]
    assert config.dual_configs() == [DualConfig.from_sites([(0,)])]


def test_from_text():
    """Test a TOML configuration is read section by section."""
    config = RunConfig.from_text(EXAMPLE)
    assert config.run.seed == 7
    assert config.params().rho == 0.5
    assert config.kernel() == KernelSpec.nearest_neighbor(2)
    assert config.coord_vector().positions == ((0, 0), (1, 0))
    assert config.dual_configs()[1] == DualConfig.from_sites([(0, 0), (0, 1)])
    assert config.test_function.center == (0.0, 0.0)


def test_from_file_with_overrides(tmp_path):
    """Test command-line overrides replace run settings."""
    path = tmp_path / "run.toml"
    path.write_text(EXAMPLE, encoding="utf-8")
    config = RunConfig.load(path, seed=11, replicas=None, out="elsewhere")
    assert config.run.seed == 11
    assert config.run.replicas == 200
    assert config.run.out == "elsewhere"


def test_missing_file(tmp_path):
    """Test a missing configuration file is reported."""
    with pytest.raises(InvalidParameter):
        RunConfig.from_file(tmp_path / "absent.toml")


def test_malformed_toml():
    """Test malformed TOML is a parse error."""
    with pytest.raises(ParseError):
        RunConfig.from_text("[run\nseed = 1")


def test_unknown_keys_rejected():
    """Test unknown keys fail validation."""
    with pytest.raises(ValidationError):
        RunConfig.from_text("[grid]\nNN = [1]\n")


def test_seed_range():
    """Test seeds must be unsigned 64-bit integers."""
    with pytest.raises(ValidationError):
        RunConfig().with_run(seed=-1)
    assert RunConfig().with_run(seed=2**64 - 1).run.seed == 2**64 - 1


def test_site_dimension_mismatch():
    """Test coordinate vectors must match the lattice dimension."""
    with pytest.raises(InvalidParameter):
        RunConfig.from_text("[process]\ndimension = 2\n\n[field]\nx = [[0]]\n")


def test_off_centre_test_function_dimension():
    """Test a test function centred off the origin must match the dimension."""
    with pytest.raises(InvalidParameter):
        RunConfig.from_text("[process]\ndimension = 2\n\n[test_function]\ncenter = [0.5]\n")


def test_with_sections_ignores_unset_options():
    """Test unset command-line options keep the file values."""
    config = RunConfig.from_text(EXAMPLE).with_sections(grid={"N": None, "t": [1.0]}, density={"rho": None})
    assert config.grid.N == [4, 8, 16, 32]
    assert config.grid.t == [1.0]
    assert config.params().rho == 0.5


def test_coord_vector_required():
    """Test commands needing field.x report its absence."""
    with pytest.raises(InvalidParameter):
        RunConfig().coord_vector()


def test_provenance_is_json_ready():
    """Test provenance holds the command, version and full configuration."""
    provenance = RunConfig.from_text(EXAMPLE).provenance("scaling", "0.1.0")
    assert provenance["command"] == "scaling"
    assert provenance["config"]["run"]["seed"] == 7
    assert provenance["config"]["field"]["x"] == [[0, 0], [1, 0]]
