# -*- coding: utf-8 -*-
"""Configuration management for the adaptive ROM controller."""
import json
import logging
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import toml

from .monitor import MonitorThresholds

logger = logging.getLogger(__name__)

ESTIMATOR_MODES = ("output", "projection")


@dataclass
class Config:
    """Every tunable constant of the design and adaptation workflow."""

    seed: int = 0
    estimator: str = "output"
    log_file: str = "adaptive_rom_controller.log"
    debug: bool = False

    # phases
    k_max: int = 5
    bt_max_n: int = 500
    sampling_factor: float = 20.0

    # data
    excitation_duration_min: float = 300.0
    offline_amplitude_fraction: float = 0.8
    online_amplitude_fraction: float = 0.5
    noise_snr_db: Optional[float] = None
    snr_min_db: float = 40.0
    coverage_min: float = 0.9
    xcorr_max: float = 0.3
    nyquist_min: float = 5.0
    kappa_max: float = 1e6

    # rom
    pod_energy: float = 0.995
    pod_energy_retry: float = 0.999
    eps_max: float = 0.05
    freq_max: float = 0.1
    freq_points: int = 400
    disc_margin: float = 0.98
    alpha_factor: float = 0.05
    clamp_eps: float = 1e-3
    estimator_reg: float = 1e-6
    estimator_kappa_max: float = 1e6

    # control
    rho: float = 0.1
    gm_min_db: float = 6.0
    pm_min_deg: float = 30.0
    sv_min: float = 0.5
    radius_max: float = 0.98
    margin_points: int = 720
    mpc_horizon_cap: int = 200
    qp_tol: float = 1e-6
    qp_max_iter: int = 5000

    # monitor
    window: int = 50
    stride: int = 10
    e_good: float = 0.05
    rho_good: float = 0.10
    lambda_good: float = 0.98
    rho_high: float = 0.15
    rho_low: float = 0.05
    e_high: float = 0.10
    s_high: float = 0.3
    theta_deg: float = 15.0
    gm_trigger_db: float = 8.0
    pm_trigger_deg: float = 40.0
    emergency_lambda: float = 1.02
    indeterminate_windows: int = 5

    # adaptation
    rls_lambda: float = 0.99
    rls_p0: float = 1e3
    enrichment_energy: float = 0.99
    divergence_factor: float = 1e6

    # evaluation
    n_traj: int = 15
    perturbation: float = 0.2
    evaluation_steps: Optional[int] = None

    @property
    def use_state_projection(self) -> bool:
        return self.estimator == "projection"

    def apply_overrides(self, overrides: Mapping[str, Any]) -> "Config":
        """Set known keys, coercing values to the type of the current default."""
        known = {item.name for item in fields(self)}
        for key, value in overrides.items():
            if key not in known:
                raise ValueError(f"Unknown configuration key: {key}")
            current = getattr(self, key)
            if value is not None and current is not None and not isinstance(current, bool):
                try:
                    value = type(current)(value)
                except (TypeError, ValueError) as exc:
                    raise ValueError(f"Invalid value for {key}: {value!r}") from exc
            elif isinstance(current, bool) and isinstance(value, str):
                value = value.strip().lower() in ("1", "true", "yes", "on")
            setattr(self, key, value)
        if self.estimator not in ESTIMATOR_MODES:
            raise ValueError(f"estimator must be one of {ESTIMATOR_MODES}, got {self.estimator!r}")
        if not 1 <= self.k_max <= 5:
            raise ValueError(f"k_max must lie in [1, 5], got {self.k_max}")
        return self

    def monitor_thresholds(self) -> MonitorThresholds:
        """Monitor thresholds taken from the matching configuration keys."""
        names = {item.name for item in fields(MonitorThresholds)}
        values = {name: getattr(self, name) for name in names if hasattr(self, name)}
        return MonitorThresholds(**values)

    def quality_thresholds(self) -> Dict[str, float]:
        return {
            "snr_min_db": self.snr_min_db,
            "coverage_min": self.coverage_min,
            "xcorr_max": self.xcorr_max,
            "nyquist_min": self.nyquist_min,
            "kappa_max": self.kappa_max,
        }

    def to_dict(self) -> Dict[str, Any]:
        return {item.name: getattr(self, item.name) for item in fields(self)}


def load_config_file(config_path: str, required: bool = False) -> Dict[str, Any]:
    """Load key-value overrides from a TOML or JSON file."""
    path = Path(config_path)
    try:
        with open(path, "r", encoding="utf-8") as config_file:
            if path.suffix.lower() == ".json":
                config_data = json.load(config_file)
            else:
                config_data = toml.load(config_file)
    except FileNotFoundError:
        if required:
            raise
        logger.warning("Configuration file not found: %s", config_path)
        return {}
    except (toml.TomlDecodeError, json.JSONDecodeError) as error:
        logger.error("Error loading configuration file: %s", error)
        raise ValueError(f"Invalid configuration file {config_path}: {error}") from error
    if not isinstance(config_data, dict):
        raise ValueError(f"Configuration file {config_path} must hold a key-value table")
    # one level of [section] tables is flattened
    flat: Dict[str, Any] = {}
    for key, value in config_data.items():
        if isinstance(value, dict):
            flat.update(value)
        else:
            flat[key] = value
    logger.info("Configuration loaded from file: %s", config_path)
    return flat


def get_config_from_env(args=None) -> Config:
    """Defaults, then the --config file, then environment variables, then CLI flags."""
    config = Config()

    config_path = getattr(args, "config", None)
    if config_path:
        config.apply_overrides(load_config_file(config_path, required=True))

    env_overrides: Dict[str, Any] = {}
    if os.getenv("ROMCTL_SEED"):
        try:
            env_overrides["seed"] = int(os.getenv("ROMCTL_SEED"))
        except ValueError as exc:
            raise ValueError(
                f"Invalid ROMCTL_SEED environment variable: {os.getenv('ROMCTL_SEED')}"
            ) from exc
    if os.getenv("ROMCTL_ESTIMATOR"):
        env_overrides["estimator"] = os.getenv("ROMCTL_ESTIMATOR")
    if os.getenv("ROMCTL_LOG_FILE"):
        env_overrides["log_file"] = os.getenv("ROMCTL_LOG_FILE")
    config.apply_overrides(env_overrides)

    if getattr(args, "seed", None) is not None:
        config.seed = int(args.seed)
    config.debug = bool(getattr(args, "debug", False))

    logger.debug("Configuration loaded successfully")
    logger.debug("Seed: %s, estimator: %s", config.seed, config.estimator)
    return config


def get_environment_info() -> Dict[str, Any]:
    """Environment information for debugging."""
    return {
        "seed_set": bool(os.getenv("ROMCTL_SEED")),
        "estimator": os.getenv("ROMCTL_ESTIMATOR", "output"),
        "log_file": os.getenv("ROMCTL_LOG_FILE", "adaptive_rom_controller.log"),
        "python_version": os.sys.version,
        "platform": os.sys.platform,
    }
