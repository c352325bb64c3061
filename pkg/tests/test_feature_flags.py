import json
import logging
import os
from pathlib import Path

import pytest

from ris_d2d.feature_flags import DEFAULT_FEATURE_FLAGS, get_feature_flag, load_feature_flags
from ris_d2d.settings import LOG_ENV_VAR, configure_logging, get_log_level, load_environment


def test_load_feature_flags_from_file(tmp_path: Path) -> None:
    path = tmp_path / "feature_flags.json"
    path.write_text(
        json.dumps(
            {
                "sinr_cross_check_enabled": True,
                "randomization_samples_default": 250,
                "sdp_debug_dump_dir": " dumps ",
                "unknown_flag": 1,
            }
        ),
        encoding="utf-8",
    )
    flags = load_feature_flags(path)
    assert flags["sinr_cross_check_enabled"] is True
    assert flags["randomization_samples_default"] == 250
    assert flags["sdp_debug_dump_dir"] == "dumps"
    assert flags["sweep_jobs_default"] == 1
    assert "unknown_flag" not in flags


def test_missing_or_broken_file_falls_back_to_defaults(tmp_path: Path) -> None:
    assert load_feature_flags(tmp_path / "absent.json") == DEFAULT_FEATURE_FLAGS
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    assert load_feature_flags(broken) == DEFAULT_FEATURE_FLAGS
    listed = tmp_path / "list.json"
    listed.write_text("[1, 2]", encoding="utf-8")
    assert load_feature_flags(listed) == DEFAULT_FEATURE_FLAGS


def test_env_overrides_file(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    path = tmp_path / "feature_flags.json"
    path.write_text(json.dumps({"sweep_jobs_default": 2}), encoding="utf-8")
    monkeypatch.setenv("RIS_D2D_FLAG_SWEEP_JOBS_DEFAULT", "4")
    monkeypatch.setenv("RIS_D2D_FLAG_SINR_CROSS_CHECK_ENABLED", "yes")
    flags = load_feature_flags(path)
    assert flags["sweep_jobs_default"] == 4
    assert flags["sinr_cross_check_enabled"] is True


def test_non_integer_env_value_keeps_default(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("RIS_D2D_FLAG_RANDOMIZATION_SAMPLES_DEFAULT", "many")
    assert load_feature_flags(tmp_path / "absent.json")["randomization_samples_default"] == 1000


def test_get_feature_flag_unknown_name_uses_default() -> None:
    assert get_feature_flag("no_such_flag", "fallback") == "fallback"


def test_shipped_flag_files_match_defaults() -> None:
    root = Path(__file__).resolve().parents[1] / "config"
    for name in ("feature_flags.json", "feature_flags.example.json"):
        assert json.loads((root / name).read_text(encoding="utf-8")) == DEFAULT_FEATURE_FLAGS


# ── Logging level ────────────────────────────────────────────────────


@pytest.mark.parametrize(
    "raw, level",
    [("", logging.ERROR), ("info", logging.INFO), ("DEBUG", logging.DEBUG), ("error", logging.ERROR), ("loud", logging.ERROR)],
)
def test_log_level_from_environment(monkeypatch: pytest.MonkeyPatch, raw: str, level: int) -> None:
    monkeypatch.setenv(LOG_ENV_VAR, raw)
    assert get_log_level() == level


def test_configure_logging_applies_level(monkeypatch: pytest.MonkeyPatch) -> None:
    root = logging.getLogger()
    previous = root.level
    monkeypatch.setenv(LOG_ENV_VAR, "debug")
    try:
        assert configure_logging() == logging.DEBUG
        assert root.level == logging.DEBUG
    finally:
        root.setLevel(previous)


def test_load_environment_reads_dotenv_without_overriding(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    (tmp_path / ".env").write_text(f"{LOG_ENV_VAR}=debug\nRIS_D2D_DATA_ROOT=from-dotenv\n", encoding="utf-8")
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(LOG_ENV_VAR, raising=False)
    monkeypatch.setenv("RIS_D2D_DATA_ROOT", "from-shell")
    load_environment()
    try:
        assert os.environ[LOG_ENV_VAR] == "debug"
        assert os.environ["RIS_D2D_DATA_ROOT"] == "from-shell"
    finally:
        os.environ.pop(LOG_ENV_VAR, None)
