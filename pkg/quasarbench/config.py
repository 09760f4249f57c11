"""
Environment-driven settings and logging setup.
"""

import logging
import os
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DEFAULT_RESULT_DIR = Path("./results")


def configure_logging(level: str = "") -> None:
    """
    Configure root logging once for an entry point.

    Args:
        level: Level name; falls back to QB_LOG_LEVEL, then INFO
    """
    level_name = (level or os.environ.get("QB_LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(level=getattr(logging, level_name, logging.INFO), format=LOG_FORMAT)


def get_result_dir() -> Path:
    """Store root, overridable with QB_RESULT_DIR."""
    value = os.environ.get("QB_RESULT_DIR", "").strip()
    return Path(value) if value else DEFAULT_RESULT_DIR


def get_default_jobs() -> int:
    """Default worker count for sweeps (QB_JOBS, at least 1)."""
    try:
        return max(1, int(os.environ.get("QB_JOBS", "1")))
    except ValueError:
        return 1
