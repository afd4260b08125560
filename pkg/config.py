import copy
import json
import logging
from pathlib import Path
from typing import Dict, Any, Optional

import yaml

logger = logging.getLogger('episim.config')

DEFAULT_CONFIG_FILE = "config.json"
YAML_SUFFIXES = (".yml", ".yaml")


DEFAULT_CONFIG = {
    "mapping": {
        "p_hit": 0.7,
        "p_miss": 0.3,
        "l_max": 10.0,
        "free_threshold": -0.5,
        "occupied_threshold": 0.5,
        "unknown_cost": 3.0
    },
    "control": {
        "k_attract": 10.0,         # 1/tick: the robot lands on its particle each tick
        "k_repulse": 0.05,
        "influence_radius": 0.6,
        "max_repulsion": 1.0,
        "speed_headroom": 1.25,    # actuator cap relative to the planning speed
        "noise_std": 0.02,
        "aerial_ignores_obstacles": False
    },
    "belief": {
        "n_ranks": 3,
        "speed_factors": [1.0, 0.6, 0.2],
        "coverage_scale": 0.5     # believed coverage disc relative to the sensor range
    },
    "coverage": {
        "out_of_region_penalty": 100.0,
        "arrival_radius": 0.75
    },
    "alloc": {
        "population": 50,
        "generations": 100,
        "mutation_rate": None,     # None -> 1 / chromosome length
        "crossover_rate": 0.9,
        "penalty_weight": 1.0e6,
        "gossip_threshold": 0.5,
        "fixed_point_iterations": 5,
        "selection_epsilon": 1.0e-6
    },
    "sim": {
        "tick": 0.1,
        "sync_interval": 1.0,
        "time_cap_factor": 10.0,
        "max_time": 600.0,
        "position_sample_interval": 1.0,
        "hold_timeout": 60.0,      # seconds at a task before giving up on partners
        "max_worlds": 4096
    },
    "runtime": {
        "threads": 1
    }
}

# Parameter validation ranges
PARAMETER_RANGES = {
    "mapping": {
        "p_hit": (0.5, 0.999),
        "p_miss": (0.001, 0.5),
        "l_max": (1.0, 100.0),
        "free_threshold": (-10.0, 0.0),
        "occupied_threshold": (0.0, 10.0),
        "unknown_cost": (1.0, 100.0)
    },
    "control": {
        "k_attract": (0.01, 1000.0),
        "k_repulse": (0.0, 100.0),
        "influence_radius": (0.01, 10.0),
        "max_repulsion": (0.0, 100.0),
        "speed_headroom": (1.0, 3.0),
        "noise_std": (0.0, 1.0)
    },
    "belief": {
        "n_ranks": (1, 10),
        "coverage_scale": (0.05, 1.0)
    },
    "coverage": {
        "out_of_region_penalty": (0.0, 1.0e6),
        "arrival_radius": (0.05, 10.0)
    },
    "alloc": {
        "population": (2, 10000),
        "generations": (0, 100000),
        "crossover_rate": (0.0, 1.0),
        "penalty_weight": (1.0, 1.0e12),
        "gossip_threshold": (0.0, 1.0),
        "fixed_point_iterations": (1, 50),
        "selection_epsilon": (1.0e-12, 1.0)
    },
    "sim": {
        "tick": (0.001, 10.0),
        "sync_interval": (0.0, 600.0),
        "time_cap_factor": (1.0, 1000.0),
        "max_time": (1.0, 1.0e6),
        "position_sample_interval": (0.01, 600.0),
        "hold_timeout": (0.1, 1.0e6),
        "max_worlds": (1, 1000000)
    },
    "runtime": {
        "threads": (1, 256)
    }
}


def get_default_config() -> Dict[str, Any]:
    """Independent copy of the defaults; callers may mutate it freely."""
    return copy.deepcopy(DEFAULT_CONFIG)


def merge_configs(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge configuration dictionaries."""
    result = copy.deepcopy(base)

    for key, value in update.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = merge_configs(result[key], value)
        else:
            result[key] = copy.deepcopy(value)

    return result


def validate_config(config: Dict[str, Any]):
    """Validate configuration values against allowed ranges."""
    for section, params in PARAMETER_RANGES.items():
        if section not in config:
            continue

        for param, (min_val, max_val) in params.items():
            value = config[section].get(param)
            if value is None:
                continue
            if not (min_val <= value <= max_val):
                raise ValueError(f"Parameter {section}.{param} = {value} is outside valid range [{min_val}, {max_val}]")

    mapping = config.get('mapping', {})
    if 'free_threshold' in mapping and 'occupied_threshold' in mapping:
        if mapping['free_threshold'] >= mapping['occupied_threshold']:
            raise ValueError("mapping.free_threshold must be less than mapping.occupied_threshold")

    belief = config.get('belief', {})
    factors = belief.get('speed_factors')
    if factors is not None:
        if len(factors) != belief.get('n_ranks', len(factors)):
            raise ValueError("belief.speed_factors must have exactly n_ranks entries")
        if abs(factors[0] - 1.0) > 1e-12:
            raise ValueError("belief.speed_factors must start at 1.0")
        if any(b >= a for a, b in zip(factors, factors[1:])) or factors[-1] <= 0:
            raise ValueError("belief.speed_factors must be positive and strictly decreasing")

    rate = config.get('alloc', {}).get('mutation_rate')
    if rate is not None and not (0.0 <= rate <= 1.0):
        raise ValueError(f"Parameter alloc.mutation_rate = {rate} is outside valid range [0.0, 1.0]")


class ConfigManager:
    """Defaults merged with a JSON or YAML file.

    A missing or broken file falls back to the defaults with a warning, unless
    the manager is strict, in which case the error propagates.
    """

    def __init__(self, config_file: Optional[str] = DEFAULT_CONFIG_FILE, strict: bool = False):
        self.config_file = Path(config_file) if config_file else None
        self.strict = strict
        self.config = get_default_config()
        self.load_config()

    def _is_yaml(self) -> bool:
        return self.config_file is not None and self.config_file.suffix.lower() in YAML_SUFFIXES

    def _read(self) -> Dict[str, Any]:
        with open(self.config_file, 'r', encoding='utf-8') as f:
            loaded = yaml.safe_load(f) if self._is_yaml() else json.load(f)
        if loaded is None and self._is_yaml():
            loaded = {}
        if not isinstance(loaded, dict):
            raise ValueError(f"{self.config_file}: config file must hold a mapping")
        return loaded

    def load_config(self) -> Dict[str, Any]:
        """Load configuration from file, falling back to defaults if file doesn't exist."""
        if self.config_file is None:
            return self.config
        if not self.config_file.exists() and not self.strict:
            return self.config
        try:
            candidate = merge_configs(DEFAULT_CONFIG, self._read())
            validate_config(candidate)
        except (json.JSONDecodeError, yaml.YAMLError, ValueError) as e:
            if self.strict:
                raise ValueError(f"{self.config_file}: {e}") from e
            logger.warning("Error loading config file %s: %s; using default configuration", self.config_file, e)
            candidate = get_default_config()
        self.config = candidate
        return self.config

    def save_config(self) -> bool:
        """Save current configuration to file."""
        if self.config_file is None:
            logger.error("no config file to save to")
            return False
        try:
            with open(self.config_file, 'w', encoding='utf-8') as f:
                if self._is_yaml():
                    yaml.safe_dump(self.config, f, sort_keys=False)
                else:
                    json.dump(self.config, f, indent=2)
            return True
        except OSError as e:
            logger.error("Error saving config file %s: %s", self.config_file, e)
            return False

    def get_config(self) -> Dict[str, Any]:
        """Get current configuration."""
        return copy.deepcopy(self.config)

    def update_config(self, new_config: Dict[str, Any]) -> bool:
        """Update configuration with new values."""
        try:
            candidate = merge_configs(self.config, new_config)
            validate_config(candidate)
        except ValueError as e:
            logger.warning("Invalid configuration: %s", e)
            return False
        self.config = candidate
        return True

    def reset_to_defaults(self):
        """Reset configuration to defaults."""
        self.config = get_default_config()

    def validate_config(self):
        validate_config(self.config)
