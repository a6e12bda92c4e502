"""Scenario configs, runners, emitters and the command line."""
from .config import ConfigError, ScenarioConfig, builtin_config, load_config, make_rng
from .scenarios import run, validate

__all__ = ["ConfigError", "ScenarioConfig", "builtin_config", "load_config", "make_rng", "run", "validate"]
