"""Configuration management for retstat."""

import os
from pathlib import Path
from typing import Any

import toml

CONFIG_DIR = Path.home() / ".config" / "retstat"
CONFIG_FILE = CONFIG_DIR / "config.toml"
OUT_DIR_ENV = "RETSTAT_OUT_DIR"

DEFAULT_CONFIG: dict[str, Any] = {
    "out_dir": "retstat-out",  # Default directory for CSV/JSON artifacts
    "workers": 1,  # Parallel trial workers; 1 runs in-process
    "max_extension_doublings": 10,  # Cap on adaptive horizon growth per trial
}


def load_config() -> dict[str, Any]:
    """Load user configuration from ~/.config/retstat/config.toml.

    Missing keys fall back to :data:`DEFAULT_CONFIG`.
    """
    config = DEFAULT_CONFIG.copy()
    if CONFIG_FILE.exists():
        config.update(toml.load(CONFIG_FILE))
    return config


def save_config(config: dict[str, Any]) -> None:
    """Save user configuration to ~/.config/retstat/config.toml."""
    CONFIG_DIR.mkdir(parents=True, exist_ok=True)
    with open(CONFIG_FILE, "w") as f:
        toml.dump(config, f)


def get_out_dir(override: str | None = None) -> Path:
    """
    Resolve the output directory.

    Priority:
      1. Explicit ``override`` (the ``--out-dir`` flag)
      2. ``RETSTAT_OUT_DIR`` environment variable
      3. User config file
      4. Built-in default

    Args:
        override: Directory given on the command line, if any.

    Returns:
        Path to the output directory (not created).
    """
    if override:
        return Path(override)
    env = os.environ.get(OUT_DIR_ENV)
    if env:
        return Path(env)
    return Path(str(load_config()["out_dir"]))


def get_workers() -> int:
    """Get the configured number of parallel trial workers (at least 1)."""
    return max(1, int(load_config().get("workers", 1)))


def get_max_extension_doublings() -> int:
    """Get the cap on per-trial horizon doublings."""
    return max(0, int(load_config().get("max_extension_doublings", 10)))


def set_value(key: str, value: str) -> None:
    """
    Set a configuration key in the user config.

    Args:
        key: One of the keys in :data:`DEFAULT_CONFIG`.
        value: New value; coerced to the type of the default.

    Raises:
        KeyError: If ``key`` is not a known configuration key.
    """
    if key not in DEFAULT_CONFIG:
        raise KeyError(f"Unknown config key '{key}' (known: {sorted(DEFAULT_CONFIG)})")
    config = load_config()
    config[key] = type(DEFAULT_CONFIG[key])(value)
    save_config(config)
