#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Configuration management for oscigeo experiments
"""

import os
import json
import copy
import logging
from typing import Dict, Any, List, Optional

from constants import (
    DEFAULT_CONFIG_FILE, DEFAULT_OUTPUT_DIR, DEFAULT_M_MAX, DEFAULT_GRID_POINTS,
    DEFAULT_K_HIGH, DEFAULT_K_FIRST, DEFAULT_PATHS, DEFAULT_RK4_STEPS, DEFAULT_CONTROL_PIECES,
    DEFAULT_ORACLE_TOLERANCE, CATALOG_NAMES, COMMANDS,
    ENV_THREADS, ENV_LOG_LEVEL, ENV_SEED, ENV_OUTPUT_DIR,
)
from errors import ConfigError
from utils import parse_lambda_grid

logger = logging.getLogger(__name__)

LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')
ATLAS_NAMES = ('bnw', 'euclidean')
ASSIGNMENTS = ('constant', 'bnw', 'canonical')


class Config:
    """Experiment configuration: defaults <- JSON file <- environment <- overrides"""

    def __init__(self, config_file: Optional[str] = None):
        """
        Initialize configuration

        Args:
            config_file: Path to configuration JSON file

        Raises:
            ConfigError: If the file exists but is not valid JSON
        """
        self.config_file = config_file or DEFAULT_CONFIG_FILE
        self.errors: List[str] = []
        self._config = self._load_default_config()
        self._load_from_file()
        self._load_from_env()

    def _load_default_config(self) -> Dict[str, Any]:
        """Load default configuration"""
        return {
            'command': None,
            'phase': 't^2',
            'amplitude': None,
            'catalog': None,
            'params': {},
            'variables': None,
            'domain': None,
            'atlas': 'bnw',
            'dim': 1,
            'm': 4,
            'm_max': DEFAULT_M_MAX,
            'ell': 0,
            'eps': 1.0,
            'interval': 1.0,
            'lambda_grid': '1e2:1e5:geometric:8',
            'lambda': 100.0,
            'grid': DEFAULT_GRID_POINTS,
            'rays': 64,
            'scales': [-4, 0],
            'probe_points': 50,
            'region': [0.5, 2.0],
            'scale_value': -2,
            'assignment': 'constant',
            'assemble': False,
            'N': 2,
            'k': 2,
            'omega': None,
            'support': [-0.5, 0.5],
            'j_range': [2, 4],
            'K_high': DEFAULT_K_HIGH,
            'K_first': DEFAULT_K_FIRST,
            'tolerance': DEFAULT_ORACLE_TOLERANCE,
            'system': 'heisenberg',
            'delta': 0.25,
            'x0': None,
            'cc_scales': [-2, -1],
            'cc_axioms': False,
            'volume_method': 'grid',
            'M': 4,
            'paths': DEFAULT_PATHS,
            'steps': DEFAULT_RK4_STEPS,
            'pieces': DEFAULT_CONTROL_PIECES,
            'seed': 0,
            'threads': None,
            'log_level': 'INFO',
            'show_progress': False,
            'output_dir': DEFAULT_OUTPUT_DIR,
            'output': None,
            'csv': None,
        }

    def _load_from_file(self):
        """Load configuration from JSON file"""
        if os.path.exists(self.config_file):
            try:
                with open(self.config_file, 'r', encoding='utf-8') as f:
                    file_config = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"Malformed config file {self.config_file}: {e.msg}",
                                  line=e.lineno, column=e.colno)
            if not isinstance(file_config, dict):
                raise ConfigError(f"Config file {self.config_file} must hold a JSON object")
            unknown = sorted(set(file_config) - set(self._config))
            if unknown:
                raise ConfigError(f"Unknown config keys {unknown}", field=unknown[0])
            self._config.update(file_config)
            logger.info(f"Loaded configuration from {self.config_file}")
        else:
            logger.info(f"Config file {self.config_file} not found, using defaults")

    def _load_from_env(self):
        """Load configuration from environment variables"""
        env_mappings = {
            ENV_THREADS: 'threads',
            ENV_LOG_LEVEL: 'log_level',
            ENV_SEED: 'seed',
            ENV_OUTPUT_DIR: 'output_dir',
        }

        for env_var, config_key in env_mappings.items():
            env_value = os.getenv(env_var)
            if env_value is not None:
                try:
                    if config_key in ('threads', 'seed'):
                        self._config[config_key] = int(env_value)
                    elif config_key == 'log_level':
                        self._config[config_key] = env_value.upper()
                    else:
                        self._config[config_key] = env_value
                except ValueError:
                    raise ConfigError(f"Environment variable {env_var} must be an integer, got '{env_value}'",
                                      field=config_key)
                logger.debug(f"Loaded {config_key} from environment: {env_value}")

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get configuration value

        Args:
            key: Configuration key
            default: Default value if key not found

        Returns:
            Configuration value
        """
        return self._config.get(key, default)

    def set(self, key: str, value: Any):
        """
        Set configuration value

        Args:
            key: Configuration key
            value: Configuration value
        """
        self._config[key] = value

    def update(self, updates: Dict[str, Any]):
        """
        Update configuration with dictionary, ignoring None values

        Args:
            updates: Dictionary of updates (typically parsed CLI flags)
        """
        self._config.update({k: v for k, v in updates.items() if v is not None})

    def as_dict(self) -> Dict[str, Any]:
        """Resolved configuration, safe to embed in reports"""
        return copy.deepcopy(self._config)

    def save(self, file_path: Optional[str] = None):
        """
        Save configuration to file

        Args:
            file_path: Path to save config (defaults to config_file)
        """
        save_path = file_path or self.config_file
        directory = os.path.dirname(save_path)
        if directory:
            os.makedirs(directory, exist_ok=True)

        try:
            with open(save_path, 'w', encoding='utf-8') as f:
                json.dump(self._config, f, indent=2, ensure_ascii=False, sort_keys=True)
            logger.info(f"Saved configuration to {save_path}")
        except OSError as e:
            logger.error(f"Failed to save config to {save_path}: {e}")

    def validate(self) -> bool:
        """
        Validate configuration values

        Returns:
            True if configuration is valid; messages are kept in self.errors
        """
        errors = []

        command = self.get('command')
        if command is not None and command not in COMMANDS:
            errors.append(f"Unknown command: {command}")

        catalog = self.get('catalog')
        if catalog is not None and catalog not in CATALOG_NAMES:
            errors.append(f"Unknown catalog name: {catalog}")

        m = self.get('m', 0)
        if not isinstance(m, int) or m < 2:
            errors.append("m must be an integer >= 2")
        elif m > self.get('m_max', DEFAULT_M_MAX):
            errors.append("m must not exceed m_max")

        ell = self.get('ell', 0)
        if not isinstance(ell, int) or ell < 0 or (isinstance(m, int) and ell >= m):
            errors.append("ell must be an integer with 0 <= ell < m")

        eps = self.get('eps', 1.0)
        if not isinstance(eps, (int, float)) or not 0 < eps <= 1:
            errors.append("eps must lie in (0, 1]")

        for key in ('grid', 'rays', 'probe_points', 'paths', 'steps', 'pieces', 'dim'):
            value = self.get(key)
            if not isinstance(value, int) or value < 1:
                errors.append(f"{key} must be a positive integer")

        for key in ('interval', 'tolerance', 'K_high', 'K_first'):
            value = self.get(key)
            if not isinstance(value, (int, float)) or value <= 0:
                errors.append(f"{key} must be positive")

        delta = self.get('delta')
        values = delta if isinstance(delta, list) else [delta]
        if not values or not all(isinstance(v, (int, float)) and 0 < v <= 1 for v in values):
            errors.append("delta entries must lie in (0, 1]")

        if self.get('M', 2) <= 1:
            errors.append("M must exceed 1")

        if self.get('atlas') not in ATLAS_NAMES:
            errors.append(f"atlas must be one of {', '.join(ATLAS_NAMES)}")

        if self.get('assignment') not in ASSIGNMENTS:
            errors.append(f"assignment must be one of {', '.join(ASSIGNMENTS)}")

        if self.get('volume_method') not in ('grid', 'hull'):
            errors.append("volume_method must be 'grid' or 'hull'")

        for key in ('scales', 'region', 'support'):
            value = self.get(key)
            if not isinstance(value, list) or len(value) != 2 or value[0] > value[1]:
                errors.append(f"{key} must be an increasing pair")

        threads = self.get('threads')
        if threads is not None and (not isinstance(threads, int) or threads < 1):
            errors.append("threads must be a positive integer")

        if str(self.get('log_level', 'INFO')).upper() not in LOG_LEVELS:
            errors.append(f"log_level must be one of {', '.join(LOG_LEVELS)}")

        try:
            parse_lambda_grid(str(self.get('lambda_grid', '')))
        except ValueError as e:
            errors.append(f"lambda_grid: {e}")

        self.errors = errors
        if errors:
            for error in errors:
                logger.error(f"Config validation error: {error}")
            return False

        return True

    @property
    def seed(self) -> int:
        """Random seed for sampling commands"""
        return self.get('seed', 0)

    @property
    def threads(self) -> Optional[int]:
        """Worker cap (None defers to OSCIGEO_THREADS)"""
        return self.get('threads')

    @property
    def output_dir(self) -> str:
        """Directory for reports and tables"""
        return self.get('output_dir', DEFAULT_OUTPUT_DIR)

    def __getitem__(self, key: str) -> Any:
        """Allow dictionary-like access"""
        return self._config[key]

    def __setitem__(self, key: str, value: Any):
        """Allow dictionary-like assignment"""
        self._config[key] = value

    def __contains__(self, key: str) -> bool:
        """Check if key exists"""
        return key in self._config
