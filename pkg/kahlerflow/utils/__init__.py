from .logging import configure_logging
from .logging import attach_run_log
from .logging import detach_run_log
from .logging import logger
from .logging import DEBUG, INFO, WARNING, ERROR, CRITICAL
from . import errors
from .stencils import Axis
from .stencils import LatitudeAxis
from .stencils import PeriodicAxis
from .stencils import make_axis
from .solverwrapper import SolverWrapper
from .solverwrapper import quantile_regression

__all__ = [
    "configure_logging",
    "attach_run_log",
    "detach_run_log",
    "logger",
    "DEBUG",
    "INFO",
    "WARNING",
    "ERROR",
    "CRITICAL",
    "errors",
    "Axis",
    "LatitudeAxis",
    "PeriodicAxis",
    "make_axis",
    "SolverWrapper",
    "quantile_regression",
]
