"""DALE Configuration Module.

This module turns a JSON config file plus command-line overrides into a
validated ``RunConfig`` and echoes the merged result into output directories:

- load_run_config: File, then ``--set key=value`` pairs, then dedicated flags
- parse_overrides: ``key=value`` strings to typed values (JSON literals when they parse)
- write_config_echo: ``config.json`` with the command and tool version

Example:
    ```python
    config = load_run_config(Path("cfg.json"), parse_overrides(["T=5", "mode=baseline"]))
    write_config_echo(Path("runs/a"), config.to_dict(), "train")
    ```
"""

import json
import logging
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any

from .domain.trainer.models import RunConfig
from .errors import ConfigError, MissingFile

logger = logging.getLogger("dale.config")

DISTRIBUTION = "jpy-dale"
CONFIG_ECHO = "config.json"


def tool_version() -> str:
    try:
        return version(DISTRIBUTION)
    except PackageNotFoundError:
        return "0+unknown"


def parse_overrides(pairs: list[str] | None) -> dict[str, Any]:
    """Parse ``key=value`` pairs; values are JSON literals when they parse, strings otherwise.

    Raises:
        ConfigError: If a pair has no ``=`` or an empty key
    """
    overrides: dict[str, Any] = {}
    for pair in pairs or []:
        key, sep, raw = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"expected key=value, got {pair!r}")
        try:
            overrides[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            overrides[key.strip()] = raw
    return overrides


def read_json(path: Path) -> dict[str, Any]:
    if not Path(path).is_file():
        raise MissingFile(str(path))
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return data


def load_run_config(path: Path | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Merge the config file with overrides; later sources win, ``None`` values are skipped.

    Raises:
        MissingFile: If ``path`` does not exist
        ConfigError: On malformed JSON, unknown keys or out-of-range values
    """
    data = read_json(path) if path is not None else {}
    data.update({key: value for key, value in (overrides or {}).items() if value is not None})

    try:
        config = RunConfig.from_dict(data)
    except TypeError as e:
        logger.error("Config values have the wrong type: %s", e)
        raise ConfigError(str(e)) from e

    logger.debug("Loaded run config %s", config.to_dict())
    return config


def write_config_echo(out_dir: Path, config: dict[str, Any], command: str) -> Path:
    path = Path(out_dir) / CONFIG_ECHO
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, "version": tool_version(), "config": config}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path
