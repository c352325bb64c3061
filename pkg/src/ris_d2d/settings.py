"""Environment and logging settings."""

from __future__ import annotations

import logging
import os

from dotenv import find_dotenv, load_dotenv

LOG_ENV_VAR = "RIS_D2D_LOG"

_LOG_LEVELS = {
    "error": logging.ERROR,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def load_environment() -> None:
    """Load ``.env`` from the working directory upward; real environment variables win."""
    load_dotenv(find_dotenv(usecwd=True), override=False)


def get_log_level() -> int:
    raw = os.getenv(LOG_ENV_VAR, "").strip().lower()
    if not raw:
        return logging.ERROR
    level = _LOG_LEVELS.get(raw)
    if level is None:
        logging.getLogger(__name__).warning("Unknown %s=%r; falling back to 'error'", LOG_ENV_VAR, raw)
        return logging.ERROR
    return level


def configure_logging() -> int:
    """Apply ``RIS_D2D_LOG`` to the root logger; returns the level used."""
    level = get_log_level()
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(level)
    return level
