"""
Package logger of kahlerflow.

Every module logs through `kahlerflow.utils.logger` with messages prefixed by its own module name,
so the format does not repeat the logger name. A run directory gets a `run.log` of its own for the
duration of the run (`attach_run_log` / `detach_run_log`), next to whatever `configure_logging` set up.
"""
import logging
import os

# Expose logging levels through kf.utils
DEBUG = logging.DEBUG
INFO = logging.INFO
WARNING = logging.WARNING
ERROR = logging.ERROR
CRITICAL = logging.CRITICAL

LOG_FORMAT = "%(asctime)s %(levelname)-8s %(message)s"
FILE_MODES = ("a", "w")

logger = logging.getLogger("kahlerflow")
logger.addHandler(logging.NullHandler())  # silent unless configured


def flow_formatter() -> logging.Formatter:
    return logging.Formatter(LOG_FORMAT)


def configure_logging(
        level=logging.INFO,
        log_to_console=True,
        log_file=None,
        file_mode="w"  # "a" for append, "w" for overwrite
    ):
    """
    Configures logging for the kahlerflow package.

    Parameters:
    -----------

    - `level: int`, optional

        Logging level (e.g., kf.utils.DEBUG, kf.utils.INFO).
        Default is kf.utils.INFO. Newton iterations and step sizes are only logged at DEBUG.

    - `log_to_console: bool`, optional

        Whether to log to the console. Default is True.

    - `log_file: str`, optional

        File path to log to. If None, logging to a file is disabled. Default is None.
        Run directories get their own `run.log` through `attach_run_log` instead.

    - `file_mode: str`, optional

        Mode for the log file. "a" (append) or "w" (overwrite). Default is "w".

    """
    if file_mode not in FILE_MODES:
        raise ValueError(f"file_mode must be one of {FILE_MODES}, got {file_mode!r}")

    for handler in logger.handlers[:]:
        logger.removeHandler(handler)
        handler.close()
    logger.setLevel(level)

    handlers = []
    if log_to_console:
        handlers.append(logging.StreamHandler())
    if log_file:
        handlers.append(logging.FileHandler(log_file, mode=file_mode))
    for handler in handlers:
        handler.setLevel(level)
        handler.setFormatter(flow_formatter())
        logger.addHandler(handler)
    if not handlers:
        logger.addHandler(logging.NullHandler())

    logger.info(f"{__name__}: logging at {logging.getLevelName(level)}, console={log_to_console}, "
                f"file={log_file} ({file_mode})")


def attach_run_log(run_dir, level=logging.INFO, file_name: str = "run.log") -> logging.Handler:
    """
    Adds a file handler writing to `run_dir/file_name` without touching the other handlers.
    Returns the handler; pass it to `detach_run_log` when the run is over.
    """
    handler = logging.FileHandler(os.path.join(run_dir, file_name), mode="w")
    handler.setLevel(level)
    handler.setFormatter(flow_formatter())
    logger.addHandler(handler)
    if logger.level == logging.NOTSET or logger.level > level:
        logger.setLevel(level)
    return handler


def detach_run_log(handler: logging.Handler) -> None:
    logger.removeHandler(handler)
    handler.close()
