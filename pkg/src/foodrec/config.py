"""Plain-text run configuration.

The format is one `key = value` per line, `#` starts a comment, blank
lines are ignored, and dotted keys address sub-configurations (for example
`prune.threshold = 0.8`). Values stay strings at parse time; typed access
goes through the getter helpers so a bad value names its key.
"""

from __future__ import annotations


def parse_config_text(text):
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', "
                             f"got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        if key in cfg:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        cfg[key] = value
    return cfg


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def get_str(cfg, key, default=None):
    if key in cfg:
        return cfg[key]
    if default is None:
        raise ValueError(f"missing config key: {key}")
    return default


def get_int(cfg, key, default=None):
    if key not in cfg:
        if default is None:
            raise ValueError(f"missing config key: {key}")
        return default
    try:
        return int(cfg[key])
    except ValueError:
        raise ValueError(f"config key {key}: expected integer, "
                         f"got {cfg[key]!r}") from None


def get_float(cfg, key, default=None):
    if key not in cfg:
        if default is None:
            raise ValueError(f"missing config key: {key}")
        return default
    try:
        return float(cfg[key])
    except ValueError:
        raise ValueError(f"config key {key}: expected number, "
                         f"got {cfg[key]!r}") from None


def get_choice(cfg, key, choices, default=None):
    val = get_str(cfg, key, default)
    if val not in choices:
        raise ValueError(f"config key {key}: expected one of "
                         f"{sorted(choices)}, got {val!r}")
    return val
