"""
Console logging with bracketed component prefixes, e.g. ``[Orchestrator] Ready``.
"""
import logging
import sys

from shared.config import settings

_ROOT = "bench"
_configured = False


class ComponentFormatter(logging.Formatter):
    """Render ``bench.Trainer`` records as ``[Trainer] message``."""

    def format(self, record: logging.LogRecord) -> str:
        component = record.name.split(".", 1)[-1]
        return f"[{component}] {record.getMessage()}"


def _configure_root() -> None:
    global _configured
    if _configured:
        return
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(ComponentFormatter())
    root = logging.getLogger(_ROOT)
    root.addHandler(handler)
    root.setLevel(settings.LOG_LEVEL.upper())
    root.propagate = False
    _configured = True


def get_logger(component: str) -> logging.Logger:
    """Return the logger for one component of the toolkit."""
    _configure_root()
    return logging.getLogger(f"{_ROOT}.{component}")
