import json
import logging
import os
from pathlib import Path
from typing import Any

import tomli
from platformdirs import user_config_dir
from pydantic import ValidationError

from config.config import ExperimentConfig
from utils.errors import ConfigError

CONFIG_FILE_NAMES = ("config.toml", "config.json")
SEED_ENV_VAR = "CIGN_SEED"

logger = logging.getLogger(__name__)


def get_config_dir() -> Path:
    """返回操作系统中 user 目录下的本程序配置目录，类似于 ~/.config/cign"""
    return Path(user_config_dir("cign"))


def get_system_config_path() -> Path | None:
    """全局的、用户级别的默认配置文件（toml 优先）"""
    for name in CONFIG_FILE_NAMES:
        path = get_config_dir() / name
        if path.is_file():
            return path
    return None


def _parse_toml(path: Path) -> dict[str, Any]:
    try:
        with open(path, "rb") as f:
            return tomli.load(f)
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"Invalid TOML in {path}: {e}", config_file=str(path)) from e
    except OSError as e:
        raise ConfigError(f"Error reading {path}: {e}", config_file=str(path)) from e


def _parse_json(path: Path) -> dict[str, Any]:
    try:
        content = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON in {path}: {e}", config_file=str(path)) from e
    except OSError as e:
        raise ConfigError(f"Error reading {path}: {e}", config_file=str(path)) from e
    if not isinstance(content, dict):
        raise ConfigError("Config file must hold a JSON object", config_file=str(path))
    return content


def parse_config_file(path: Path) -> dict[str, Any]:
    if path.suffix.lower() == ".toml":
        return _parse_toml(path)
    return _parse_json(path)


def _merge_dicts(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    """deep merge 2 个 dicts"""
    result = base.copy()
    for key, value in override.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = _merge_dicts(result[key], value)
        else:
            result[key] = value
    return result


def _normalize_keys(values: dict[str, Any]) -> dict[str, Any]:
    """允许配置文件里写 classes-per-task 这样的 key"""
    return {k.replace("-", "_"): v for k, v in values.items()}


def load_config(
    config_path: Path | None = None,
    overrides: dict[str, Any] | None = None,
    use_system_config: bool = True,
) -> ExperimentConfig:
    """优先级从低到高：用户级配置 -> --config 文件 -> CIGN_SEED 环境变量（仅当 seed 未设置）-> CLI flags"""
    config_dict: dict[str, Any] = {}

    system_path = get_system_config_path() if use_system_config else None
    if system_path:
        try:
            config_dict = _normalize_keys(parse_config_file(system_path))
        except ConfigError:
            logger.warning(f"Skipping invalid system config: {system_path}")

    if config_path is not None:
        if not config_path.is_file():
            raise ConfigError("Config file not found", config_file=str(config_path))
        config_dict = _merge_dicts(config_dict, _normalize_keys(parse_config_file(config_path)))

    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    if "seed" not in config_dict and "seed" not in overrides:
        env_seed = os.environ.get(SEED_ENV_VAR)
        if env_seed is not None:
            try:
                config_dict["seed"] = int(env_seed)
            except ValueError as e:
                raise ConfigError(
                    f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}",
                    config_key="seed",
                ) from e

    config_dict = _merge_dicts(config_dict, overrides)
    try:
        return ExperimentConfig(**config_dict)
    except ValidationError as e:
        first = e.errors()[0] if e.errors() else {}
        key = ".".join(str(x) for x in first.get("loc", [])) or None
        raise ConfigError(
            f"Invalid configuration: {e}",
            config_key=key,
            config_file=str(config_path) if config_path else None,
        ) from e
