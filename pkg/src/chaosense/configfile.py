"""Flat `key = value` configuration files with `#` comments."""

from __future__ import annotations


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict[str, str]:
    """Parse config text into a flat string mapping.

    One `key = value` per line; blank lines and lines starting with `#` are
    ignored; an inline ` # comment` after the value is stripped. Duplicate
    keys are an error.
    """
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.split("#", 1)[0].strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def render_config(mapping: dict) -> str:
    """The inverse of parse_config_text, one key per line in given order."""
    return "".join(f"{k} = {v}\n" for k, v in mapping.items())


def get_str(cfg: dict[str, str], key: str, default=None, choices=None) -> str:
    if key in cfg:
        val = cfg[key]
    elif default is not None:
        val = default
    else:
        raise ConfigError(f"missing required config key {key!r}")
    if choices is not None and val not in choices:
        raise ConfigError(f"config key {key!r} must be one of {sorted(choices)}, got {val!r}")
    return val


def get_float(cfg: dict[str, str], key: str, default=None) -> float:
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return float(default)
    try:
        return float(cfg[key])
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {cfg[key]!r} as a number") from None


def get_int(cfg: dict[str, str], key: str, default=None) -> int:
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return int(default)
    try:
        return int(cfg[key])
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {cfg[key]!r} as an integer") from None


def get_float_list(cfg: dict[str, str], key: str, default=None) -> list[float]:
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return list(default)
    try:
        return [float(tok) for tok in cfg[key].split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {cfg[key]!r} as a number list") from None


def get_int_list(cfg: dict[str, str], key: str, default=None) -> list[int]:
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return list(default)
    try:
        return [int(tok) for tok in cfg[key].split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {cfg[key]!r} as an integer list") from None
