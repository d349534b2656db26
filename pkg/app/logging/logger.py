"""This module declares a global Logger object."""

import logging.handlers

from app import constants

_log_dir = constants.LOG_FILE.parent
if not _log_dir.exists():
    _log_dir.mkdir(parents=True)

logging.basicConfig(filename=constants.LOG_FILE, format="[%(asctime)s] %(levelname)s: %(message)s")
logger = logging.getLogger(__name__)
logger.setLevel(logging.WARNING)


def set_level(level: str):
    """Sets the level of the global logger.

    :param level: A level name such as 'INFO' or 'WARNING'.
    :raise ValueError: If the name is unknown.
    """
    value = logging.getLevelName(level.upper())
    if not isinstance(value, int):
        raise ValueError(f'unknown log level {level!r}')
    logger.setLevel(value)
