#!/usr/bin/env python3
"""
Planner logging.

Console output always, plus an optional rotating file so long batches stay
bounded on disk. Every record carries the id of the scenario being run
(`-` outside a run), so the interleaved output of a batch can be split with
grep.
"""

import contextvars
import logging
import os
from contextlib import contextmanager
from logging.handlers import RotatingFileHandler
from typing import Iterator, List

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - [%(run)s] %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'
NO_RUN = '-'

# Third-party loggers that are chatty at DEBUG
QUIET_LOGGERS = ('numba', 'matplotlib', 'PIL')

_current_run: contextvars.ContextVar = contextvars.ContextVar('planner_run', default=NO_RUN)


class RunContextFilter(logging.Filter):
    """Stamps `record.run` with the active scenario id."""

    def filter(self, record: logging.LogRecord) -> bool:
        record.run = _current_run.get()
        return True


@contextmanager
def run_context(run_id: str) -> Iterator[None]:
    """Tag every record logged inside the block with run_id."""
    token = _current_run.set(run_id or NO_RUN)
    try:
        yield
    finally:
        _current_run.reset(token)


def current_run() -> str:
    return _current_run.get()


def _file_handler(logging_config: dict) -> RotatingFileHandler:
    log_file_path = logging_config.get('log_file_path', 'logs/planner.log')
    log_dir = os.path.dirname(log_file_path)
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)
    return RotatingFileHandler(
        filename=log_file_path,
        maxBytes=logging_config.get('max_bytes', 10 * 1024 * 1024),
        backupCount=logging_config.get('backup_count', 5),
        encoding=logging_config.get('encoding', 'utf-8'),
    )


def setup_logging(config: dict = None) -> List[logging.Handler]:
    """
    Configure the root logger for a planner process.

    Args:
        config: Full configuration; only the `logging` section is read

    Returns:
        The installed handlers (console first, then the file handler if enabled)
    """
    logging_config = (config or {}).get('logging', {})
    log_level = str(logging_config.get('level', 'INFO')).upper()
    level = getattr(logging, log_level, logging.INFO)
    enable_file_logging = logging_config.get('enable_file_logging', True)

    formatter = logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT)
    run_filter = RunContextFilter()

    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if enable_file_logging and logging_config.get('log_file_path', 'logs/planner.log'):
        handlers.append(_file_handler(logging_config))
    for handler in handlers:
        handler.setFormatter(formatter)
        handler.addFilter(run_filter)

    logging.basicConfig(level=level, handlers=handlers, force=True)

    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(max(level, logging.WARNING))

    logger = logging.getLogger(__name__)
    logger.info(f"Logging configured: level={log_level}, file_logging={enable_file_logging}")
    if len(handlers) > 1:
        logger.debug(f"Log file: {handlers[1].baseFilename} "
                     f"(max_bytes={handlers[1].maxBytes}, backup_count={handlers[1].backupCount})")
    return handlers
