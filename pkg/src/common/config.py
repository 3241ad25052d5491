"""Configuration loading from config.yaml with JSON experiment overrides"""
import copy
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from src.common.errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parents[2] / "config.yaml"

_cached_config: Optional[Dict[str, Any]] = None


def load_config(path=None) -> Dict[str, Any]:
    """Load the YAML defaults (HLCE_CONFIG overrides the default location)"""
    global _cached_config

    if path is None and _cached_config is not None:
        return copy.deepcopy(_cached_config)

    config_path = Path(path or os.environ.get("HLCE_CONFIG") or DEFAULT_CONFIG_PATH)
    try:
        with open(config_path, "r") as f:
            config = yaml.safe_load(f) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {config_path}")
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {config_path}: {e}")

    logger.debug(f"Loaded config from {config_path}")
    if path is None:
        _cached_config = config
    return copy.deepcopy(config)


def merge_overrides(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Deep-merge overrides into a copy of base"""
    merged = copy.deepcopy(base)
    for key, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_overrides(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_json_overrides(path) -> Dict[str, Any]:
    """Read a JSON experiment config file"""
    try:
        with open(path, "r") as f:
            return json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"experiment config not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {path}: {e}")


def section(config: Dict[str, Any], *names) -> Any:
    """Walk nested sections, raising ConfigError on the first missing key"""
    node = config
    for name in names:
        if not isinstance(node, dict) or name not in node:
            raise ConfigError(f"missing config section: {'.'.join(names)}")
        node = node[name]
    return node
