"""Flat key=value config files with [sections], and coercion helpers."""
from __future__ import annotations

import configparser
from pathlib import Path


class ConfigError(ValueError):
    """Invalid configuration value or unusable config/plan file."""


def load_ini(path) -> dict[str, dict[str, str]]:
    """Parse an INI-style file into {section: {key: value}} with case kept."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return {section: dict(parser[section]) for section in parser.sections()}


def get_int(section: dict[str, str], key: str, default: int | None = None) -> int:
    raw = section.get(key)
    if raw is None:
        if default is None:
            raise ConfigError(f"missing required integer key '{key}'")
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"key '{key}' must be an integer, got '{raw}'") from None


def get_float(section: dict[str, str], key: str, default: float | None = None) -> float:
    raw = section.get(key)
    if raw is None:
        if default is None:
            raise ConfigError(f"missing required float key '{key}'")
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"key '{key}' must be a number, got '{raw}'") from None


def get_bool(section: dict[str, str], key: str, default: bool) -> bool:
    raw = section.get(key)
    if raw is None:
        return default
    low = raw.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"key '{key}' must be a boolean, got '{raw}'")


def get_optional_size(section: dict[str, str], key: str,
                      default: int | None) -> int | None:
    """Integer or the literal 'none' (identity bottleneck)."""
    raw = section.get(key)
    if raw is None:
        return default
    if raw.strip().lower() == "none":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"key '{key}' must be an integer or 'none', got '{raw}'") from None


def get_int_list(section: dict[str, str], key: str,
                 default: list[int] | None = None) -> list[int]:
    raw = section.get(key)
    if raw is None:
        if default is None:
            raise ConfigError(f"missing required list key '{key}'")
        return list(default)
    try:
        return [int(tok) for tok in raw.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"key '{key}' must be a list of integers, got '{raw}'") from None
