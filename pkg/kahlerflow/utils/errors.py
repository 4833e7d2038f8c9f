"""
Exceptions raised by kahlerflow.

Validation problems derive from `ValueError` and numerical failures from `RuntimeError`,
so callers that only know the standard hierarchy still catch them sensibly.
All of them derive from `KahlerFlowError`.
"""


class KahlerFlowError(Exception):
    pass


# --- validation ---------------------------------------------------------------

class ConfigError(KahlerFlowError, ValueError):
    """A configuration key is missing, unknown, mistyped or out of range. `key` is the dotted key."""

    def __init__(self, message: str, key: str = None, line: int = None):
        self.key = key
        self.line = line
        prefix = ""
        if key is not None:
            prefix += f"[{key}] "
        if line is not None:
            prefix += f"(line {line}) "
        super().__init__(prefix + message)


class InvalidClass(KahlerFlowError, ValueError):
    pass


class NonPositiveInitialMetric(KahlerFlowError, ValueError):
    pass


class OutOfRange(KahlerFlowError, ValueError):
    pass


class NonZeroMass(KahlerFlowError, ValueError):
    pass


# --- numerical failures -------------------------------------------------------

class PositivityLoss(KahlerFlowError, RuntimeError):
    """The metric left the Kähler cone at grid node `node` at time `t`."""

    def __init__(self, message: str, node: tuple = None, t: float = None):
        self.node = node
        self.t = t
        super().__init__(message)


class NormalizationFailure(KahlerFlowError, RuntimeError):
    pass


class NewtonDivergence(KahlerFlowError, RuntimeError):
    """Newton iteration failed; `residual_history` holds the residual sup-norm per iteration."""

    def __init__(self, message: str, residual_history: list = None):
        self.residual_history = list(residual_history or [])
        super().__init__(message)


class StepSizeUnderflow(KahlerFlowError, RuntimeError):
    pass


class MaxStepsExceeded(KahlerFlowError, RuntimeError):
    pass


class VPositivityFailure(KahlerFlowError, RuntimeError):
    pass


# --- data availability --------------------------------------------------------

class InsufficientWindow(KahlerFlowError, ValueError):
    pass


class MissingSeries(KahlerFlowError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "missing series"


class MissingArtifacts(KahlerFlowError, FileNotFoundError):
    pass
