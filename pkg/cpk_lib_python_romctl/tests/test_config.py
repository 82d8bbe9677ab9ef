# -*- coding: utf-8 -*-
"""Unit tests for configuration loading and overrides."""
from argparse import Namespace

import pytest  # pylint: disable=import-error

from ..adaptive_rom_controller.config import (
    Config,
    get_config_from_env,
    get_environment_info,
    load_config_file,
)

pytestmark = pytest.mark.unit


@pytest.fixture
def clean_env(monkeypatch):
    """Remove every ROMCTL_* variable."""
    for name in ("ROMCTL_SEED", "ROMCTL_ESTIMATOR", "ROMCTL_LOG_FILE"):
        monkeypatch.delenv(name, raising=False)
    return monkeypatch


class TestConfig:
    """Test cases for Config."""

    def test_defaults(self):
        """Defaults match the documented thresholds."""
        config = Config()
        assert config.rho == 0.1
        assert config.k_max == 5
        assert (config.window, config.stride) == (50, 10)
        assert not config.use_state_projection

    def test_overrides_coerce_types(self):
        """String values take the type of the default."""
        config = Config().apply_overrides({"seed": "7", "rho": "0.2", "debug": "yes"})
        assert config.seed == 7
        assert config.rho == pytest.approx(0.2)
        assert config.debug is True

    def test_unknown_key(self):
        """Typos are rejected."""
        with pytest.raises(ValueError) as exc_info:
            Config().apply_overrides({"rhoo": 1.0})
        assert "Unknown configuration key" in str(exc_info.value)

    def test_bad_value(self):
        """Values that cannot be coerced are rejected."""
        with pytest.raises(ValueError):
            Config().apply_overrides({"window": "wide"})

    def test_bad_estimator(self):
        """Only output and projection estimators exist."""
        with pytest.raises(ValueError):
            Config().apply_overrides({"estimator": "kalman"})

    @pytest.mark.parametrize("k_max", [0, 6])
    def test_k_max_range(self, k_max):
        """The retry budget lies in [1, 5]."""
        with pytest.raises(ValueError):
            Config().apply_overrides({"k_max": k_max})

    def test_monitor_thresholds(self):
        """Monitor keys flow into the thresholds."""
        thresholds = Config(window=20, stride=5, rho_high=0.2).monitor_thresholds()
        assert (thresholds.window, thresholds.stride) == (20, 5)
        assert thresholds.rho_high == 0.2
        assert thresholds.condition1_windows == 3

    def test_to_dict(self):
        """Every field is serialized."""
        data = Config(seed=3).to_dict()
        assert data["seed"] == 3
        assert "pod_energy" in data
        assert Config().quality_thresholds()["snr_min_db"] == 40.0


class TestLoadConfigFile:
    """Test cases for load_config_file."""

    def test_toml_sections_are_flattened(self, tmp_path):
        """[section] tables merge into one mapping."""
        path = tmp_path / "romctl.toml"
        path.write_text("seed = 4\n[control]\nrho = 0.3\n[monitor]\nwindow = 30\n")
        assert load_config_file(str(path)) == {"seed": 4, "rho": 0.3, "window": 30}

    def test_json_file(self, tmp_path):
        """JSON files are read by suffix."""
        path = tmp_path / "romctl.json"
        path.write_text('{"rho": 0.5}')
        assert load_config_file(str(path)) == {"rho": 0.5}

    def test_missing_optional_file(self, tmp_path):
        """A missing optional file gives no overrides."""
        assert load_config_file(str(tmp_path / "absent.toml")) == {}

    def test_missing_required_file(self, tmp_path):
        """A missing required file raises."""
        with pytest.raises(FileNotFoundError):
            load_config_file(str(tmp_path / "absent.toml"), required=True)

    def test_invalid_toml(self, tmp_path):
        """Malformed files raise ValueError."""
        path = tmp_path / "broken.toml"
        path.write_text("seed = = 4\n")
        with pytest.raises(ValueError) as exc_info:
            load_config_file(str(path))
        assert "Invalid configuration file" in str(exc_info.value)

    def test_non_table_json(self, tmp_path):
        """The top level must be a table."""
        path = tmp_path / "list.json"
        path.write_text("[1, 2]")
        with pytest.raises(ValueError):
            load_config_file(str(path))


class TestGetConfigFromEnv:
    """Test cases for get_config_from_env."""

    def test_defaults_without_sources(self, clean_env):
        """No file, variables or flags leave the defaults."""
        config = get_config_from_env(Namespace(config=None, seed=None, debug=False))
        assert config.seed == 0
        assert config.estimator == "output"

    def test_environment_overrides(self, clean_env):
        """ROMCTL_* variables override the defaults."""
        clean_env.setenv("ROMCTL_SEED", "11")
        clean_env.setenv("ROMCTL_ESTIMATOR", "projection")
        clean_env.setenv("ROMCTL_LOG_FILE", "run.log")
        config = get_config_from_env()
        assert config.seed == 11
        assert config.use_state_projection
        assert config.log_file == "run.log"

    def test_invalid_seed_variable(self, clean_env):
        """A non-integer seed is rejected."""
        clean_env.setenv("ROMCTL_SEED", "abc")
        with pytest.raises(ValueError) as exc_info:
            get_config_from_env()
        assert "ROMCTL_SEED" in str(exc_info.value)

    def test_precedence(self, clean_env, tmp_path):
        """File < environment < command line."""
        path = tmp_path / "romctl.toml"
        path.write_text("seed = 1\nrho = 0.25\n")
        clean_env.setenv("ROMCTL_SEED", "2")
        config = get_config_from_env(Namespace(config=str(path), seed=3, debug=True))
        assert config.seed == 3
        assert config.rho == pytest.approx(0.25)
        assert config.debug

    def test_environment_info(self, clean_env):
        """Debug information reflects the variables."""
        clean_env.setenv("ROMCTL_SEED", "5")
        info = get_environment_info()
        assert info["seed_set"]
        assert info["estimator"] == "output"
