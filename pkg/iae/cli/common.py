import logging
from pathlib import Path
from typing import Any, Dict, Optional, Type, TypeVar

import click
from pydantic import BaseModel

from iae.core.config import get_settings
from iae.core.errors import ConfigError, InputError
from iae.core.run import load_config_file

logger = logging.getLogger(__name__)

SectionT = TypeVar("SectionT", bound=BaseModel)


def common_options(command):
    """``--seed``, ``--out`` and ``--config``, shared by every subcommand."""
    command = click.option(
        "--config",
        "config_path",
        type=click.Path(dir_okay=False, path_type=Path),
        default=None,
        help="YAML config; a run's config.yaml replays that run.",
    )(command)
    command = click.option(
        "--out",
        type=click.Path(file_okay=False, path_type=Path),
        default=None,
        help="Run directory (default: <IAE_OUTPUT_DIR>/<command>).",
    )(command)
    command = click.option("--seed", type=int, default=None, help="Global seed.")(command)
    return command


def deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def drop_unset(flags: Dict[str, Any]) -> Dict[str, Any]:
    """Flags left at None do not override; nested dicts are pruned too."""
    pruned = {}
    for key, value in flags.items():
        if isinstance(value, dict):
            value = drop_unset(value)
            if value:
                pruned[key] = value
        elif value is not None:
            pruned[key] = value
    return pruned


class ConfigSource:
    """Defaults < YAML file < flags, for one command."""

    def __init__(self, command: str, config_path: Optional[Path], seed: Optional[int]):
        self.command = command
        self.payload: Dict[str, Any] = load_config_file(config_path) if config_path else {}
        recorded = self.payload.get("command")
        if recorded is not None and recorded != command:
            raise ConfigError(f"config file was written by {recorded!r}, not {command!r}")
        yaml_seed = self.payload.get("seed")
        if yaml_seed is not None and not isinstance(yaml_seed, int):
            raise ConfigError(f"seed must be an integer, got {yaml_seed!r}")
        self.seed: Optional[int] = seed if seed is not None else yaml_seed

    def section(self, name: str, model: Type[SectionT], flags: Dict[str, Any]) -> SectionT:
        values = self.payload.get(name) or {}
        if not isinstance(values, dict):
            raise ConfigError(f"config section {name!r} must be a mapping")
        values = deep_merge(values, drop_unset(flags))
        if self.seed is not None and "seed" in model.model_fields:
            values["seed"] = self.seed
        return model.model_validate(values)

    def out(self, flag: Optional[Path]) -> Path:
        if flag is not None:
            return flag
        if self.payload.get("out"):
            return Path(self.payload["out"])
        return Path(get_settings().output_dir) / self.command

    def input_path(self, name: str, flag: Optional[Path]) -> Path:
        if flag is not None:
            return flag
        recorded = (self.payload.get("inputs") or {}).get(name)
        if recorded is None:
            raise InputError(f"missing --{name.replace('_', '-')}")
        return Path(recorded)


def require_file(path: Path, label: str) -> Path:
    if not path.is_file():
        raise InputError(f"{label} not found: {path}")
    return path
