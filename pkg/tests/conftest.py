import pytest


@pytest.fixture(autouse=True)
def isolated_config(tmp_path, monkeypatch):
    """Point the user config at a temporary directory for every test."""
    config_dir = tmp_path / "config"
    monkeypatch.setattr("retstat.config.CONFIG_DIR", config_dir)
    monkeypatch.setattr("retstat.config.CONFIG_FILE", config_dir / "config.toml")
    monkeypatch.delenv("RETSTAT_OUT_DIR", raising=False)
    return config_dir
