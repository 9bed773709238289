"""
Loggers for the library and the one-time handler setup of the command line.

Modules only ask for a logger with `get_logger`; nothing is printed until
`init_log` installs handlers on the root logger.
"""

import logging
import logging.handlers
import sys

LOG_FORMAT = "%(asctime)s - %(process)d - %(name)s - %(levelname)s - %(filename)s - %(lineno)d - %(message)s"

# prefix of every logger of this package
ROOT_NAME = "chefshat"


def _as_level(level):
    if isinstance(level, str):
        return getattr(logging, level.upper())
    return level


def get_logger(name, level=logging.INFO):
    """a logger that hands its records up to the root logger"""
    logger = logging.getLogger(name)
    logger.propagate = True
    if not logger.handlers:
        logger.addHandler(logging.NullHandler())
        logger.setLevel(_as_level(level))
    return logger


def _log_uncaught(exc_type, exc_value, tb):
    logging.getLogger(ROOT_NAME).error(
        "uncaught error", exc_info=(exc_type, exc_value, tb)
    )


def init_log(console_level=logging.INFO, log_file=None, file_level=logging.DEBUG):
    """stderr at `console_level`, plus a rotating `log_file` when given"""
    console_level = _as_level(console_level)
    file_level = _as_level(file_level)
    formatter = logging.Formatter(LOG_FORMAT)

    handlers = [logging.StreamHandler(sys.stderr)]
    handlers[0].setLevel(console_level)
    if log_file:
        handler = logging.handlers.RotatingFileHandler(
            log_file, maxBytes=64 * 1024 * 1024, backupCount=3, encoding="utf-8"
        )
        handler.setLevel(file_level)
        handlers.append(handler)

    root = logging.getLogger("")
    root.handlers = []
    root.setLevel(min(console_level, file_level) if log_file else console_level)
    for handler in handlers:
        handler.setFormatter(formatter)
        root.addHandler(handler)
    sys.excepthook = _log_uncaught

    # package loggers were created at INFO, the handlers decide from here on
    for name in list(logging.root.manager.loggerDict):
        if name == ROOT_NAME or name.startswith(ROOT_NAME + "."):
            logging.getLogger(name).setLevel(logging.NOTSET)
