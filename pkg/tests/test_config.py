import logging
import os

import pytest

from momenta.basis_builder import Mode
from momenta.config import (
    MomentaConfig,
    ValidationError,
    configure_logging,
    load_config,
)
from momenta.moments import Flavor


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in list(os.environ):
        if name.startswith("MOMENTA_"):
            monkeypatch.delenv(name)
    monkeypatch.setenv("MOMENTA_CONFIG", "")


@pytest.fixture
def restore_logging():
    momenta_logger = logging.getLogger("momenta")
    handlers = list(momenta_logger.handlers)
    level = momenta_logger.level
    propagate = momenta_logger.propagate
    yield
    momenta_logger.handlers = handlers
    momenta_logger.setLevel(level)
    momenta_logger.propagate = propagate


def test_defaults():
    config = load_config()
    assert config.lmax == 3
    assert config.flavor_value == Flavor.VOLUMETRIC
    assert config.mode_value == Mode.SPECIFIC
    assert config.robust_part is None
    assert config.get_provenance("lmax") == "default"


def test_toml_file(tmp_path):
    path = tmp_path / "config.toml"
    path.write_text('lmax = 4\nflavor = "sphere"\nrobust = "3, 3"\ntolerance = 1e-9\n')
    config = load_config(str(path))
    assert config.lmax == 4
    assert config.flavor == "spherical"
    assert config.robust_part == (3, 3)
    assert config.tolerance == 1e-9
    assert config.get_provenance("lmax").startswith("set from file")


def test_unknown_keys(tmp_path):
    path = tmp_path / "config.toml"
    path.write_text("lmax = 2\ncolour = 1\n")
    with pytest.raises(KeyError, match="colour"):
        load_config(str(path))
    path.write_text("ignore_unknown_attributes = true\nlmax = 2\ncolour = 1\n")
    assert load_config(str(path)).lmax == 2


def test_invalid_toml(tmp_path):
    path = tmp_path / "config.toml"
    path.write_text("lmax = = 2\n")
    with pytest.raises(ValidationError, match="Invalid TOML"):
        load_config(str(path))


def test_environment(monkeypatch):
    monkeypatch.setenv("MOMENTA_LMAX", "5")
    monkeypatch.setenv("MOMENTA_USE_CACHE", "no")
    monkeypatch.setenv("MOMENTA_CACHE", "/tmp/momenta-test-cache")
    config = load_config()
    assert config.lmax == 5
    assert config.use_cache is False
    assert config.cache_dir == "/tmp/momenta-test-cache"
    assert config.get_provenance("lmax") == "set via MOMENTA_LMAX"


def test_cache_dir_variables(monkeypatch):
    monkeypatch.setenv("MOMENTA_CACHE", "/tmp/a")
    monkeypatch.setenv("MOMENTA_CACHE_DIR", "/tmp/b")
    assert load_config().cache_dir == "/tmp/b"


def test_overrides_win(monkeypatch, tmp_path):
    path = tmp_path / "config.toml"
    path.write_text("lmax = 4\nseed = 3\n")
    monkeypatch.setenv("MOMENTA_LMAX", "5")
    config = load_config(str(path), lmax=2, seed=None)
    assert config.lmax == 2
    assert config.seed == 3
    assert config.get_provenance("lmax") == "set via command line"


def test_config_file_from_environment(monkeypatch, tmp_path):
    path = tmp_path / "config.toml"
    path.write_text('mode = "minimal"\n')
    monkeypatch.setenv("MOMENTA_CONFIG", str(path))
    assert load_config().mode_value == Mode.MINIMAL


@pytest.mark.parametrize(
    "name, value",
    [
        ("lmax", "9"),
        ("lmax", "three"),
        ("tolerance", "0.5"),
        ("norm_floor", "0"),
        ("use_cache", "maybe"),
        ("flavor", "cube"),
        ("mode", "complete"),
        ("robust", "2,1"),
        ("robust", "3"),
        ("max_exponent", "0"),
    ],
)
def test_validation_errors(name, value):
    with pytest.raises(ValidationError):
        MomentaConfig.validate_and_normalize(name, value)


def test_validate_and_normalize():
    assert MomentaConfig.validate_and_normalize("tolerance", 1e-9) == 1e-9
    assert MomentaConfig.validate_and_normalize("norm_floor", 2) == 2.0
    assert MomentaConfig.validate_and_normalize("mode", "flexible") == "minimal"
    assert MomentaConfig.validate_and_normalize("robust", "4,2") == "4,2"
    with pytest.raises(ValidationError):
        MomentaConfig.validate_and_normalize("lmax", True)
    with pytest.raises(KeyError):
        MomentaConfig.validate_and_normalize("nope", 1)


def test_to_toml_string():
    config = MomentaConfig()
    config.override(lmax=4)
    text = config.to_toml_string(with_provenance=True, skip_default=True)
    assert text.splitlines() == ["lmax = 4  # set from dict"]
    assert "seed = 0\n" in config.to_toml_string()


def test_generation_settings():
    config = load_config(seed=7, verify_seed=8, max_exponent=6, tolerance=1e-7)
    settings = config.generation_settings(trace_path="trace.jsonl")
    assert settings.max_exponent == 6
    assert settings.selection.seed == 7
    assert settings.selection.verify_seed == 8
    assert settings.selection.tol == 1e-7
    assert settings.selection.trace_path == "trace.jsonl"
    assert load_config().selection_config().verify_seed is None


def test_log_level(restore_logging):
    config = load_config(log_level="INFO")
    assert config.log_level == "INFO"
    momenta_logger = logging.getLogger("momenta")
    assert momenta_logger.level == logging.INFO
    assert not momenta_logger.propagate
    handlers = len(momenta_logger.handlers)
    configure_logging("10", "test")
    assert momenta_logger.level == logging.DEBUG
    assert len(momenta_logger.handlers) == handlers
