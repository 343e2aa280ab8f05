"""
Logging setup - structlog routed through the stdlib logging handlers
"""

import logging
import sys
from pathlib import Path
from typing import List, Optional, Union

import structlog


def configure_logging(level: str = "INFO", json_logs: bool = False,
                      log_file: Optional[Union[str, Path]] = None) -> None:
    """
    Configure structlog and the root logger

    Log lines go to stderr (stdout is kept for reports) and, when
    log_file is given, to that file as well.

    Args:
        level: logging level name
        json_logs: render events as JSON instead of the console format
        log_file: optional file that receives a copy of every event
    """
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file is not None:
        path = Path(log_file)
        path.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(path, encoding="utf-8"))

    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(message)s",
        handlers=handlers,
        force=True,
    )

    renderer = (
        structlog.processors.JSONRenderer()
        if json_logs
        else structlog.dev.ConsoleRenderer(colors=False)
    )

    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            renderer,
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )
