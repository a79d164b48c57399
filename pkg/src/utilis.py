"""
Shared helpers: tagged logging, output paths, TOML config loading and the
numerical guard exception family.

Provides:
- get_logger(tag) -> logging.Logger printing "[TAG] message"
- set_log_level(level)
- load_toml(path) -> dict
- result_dir(override=None) -> str
- NumericalGuardError
"""

import logging
import os
import sys
from typing import Any, Dict

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), os.pardir))
RESULT_DIR = os.path.join(PROJECT_ROOT, "result")

_LOG_ENV = "SPECTRAL_LAB_LOG"
_OUTPUT_ENV = "SPECTRAL_LAB_OUTPUT"
_ROOT_NAME = "spectral_lab"


class NumericalGuardError(RuntimeError):
    """A numerical resource or stability guard tripped (CLI exit code 3)."""


class _TagFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        tag = record.name.rsplit(".", 1)[-1].upper()
        return f"[{tag}] {record.getMessage()}"


def _root_logger() -> logging.Logger:
    root = logging.getLogger(_ROOT_NAME)
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(_TagFormatter())
        root.addHandler(handler)
        root.setLevel(os.environ.get(_LOG_ENV, "INFO").upper())
        root.propagate = False
    return root


def get_logger(tag: str) -> logging.Logger:
    """Logger whose records render as ``[TAG] message``."""
    _root_logger()
    return logging.getLogger(f"{_ROOT_NAME}.{tag.lower()}")


def set_log_level(level: str | int) -> None:
    _root_logger().setLevel(level.upper() if isinstance(level, str) else level)


def load_toml(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, "rb") as f:
        return tomllib.load(f)


def result_dir(override: str | None = None) -> str:
    """Output root: explicit override, then $SPECTRAL_LAB_OUTPUT, then result/."""
    path = override or os.environ.get(_OUTPUT_ENV) or RESULT_DIR
    os.makedirs(path, exist_ok=True)
    return path


__all__ = [
    "PROJECT_ROOT",
    "RESULT_DIR",
    "NumericalGuardError",
    "get_logger",
    "set_log_level",
    "load_toml",
    "result_dir",
]
