"""
Centralized logging configuration.

Modules log through `logging.getLogger(__name__)`; this module only installs the
handler once, at the process entry points (the CLI and the KG service startup).
"""

import logging

# Pretty, level-colored console output for the standard logging module
from rich.console import Console
from rich.logging import RichHandler

LOG_FORMAT = "%(name)s: %(message)s"


def configure_logging(level: str = "INFO") -> None:
    """
    Install a RichHandler on the root logger.

    Calling it again only updates the level, so tests and the service can both call it.

    Args:
        level (str): Logging level name, e.g. "INFO" or "DEBUG".
    """
    root = logging.getLogger()
    if not any(isinstance(handler, RichHandler) for handler in root.handlers):
        handler = RichHandler(console=Console(stderr=True), rich_tracebacks=True, show_path=False)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)
    root.setLevel(level.upper())

    # httpx logs every request at INFO
    logging.getLogger("httpx").setLevel(logging.WARNING)
