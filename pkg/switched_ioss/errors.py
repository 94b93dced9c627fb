"""Exception hierarchy for switched-ioss.

Loading and parsing problems subclass ``ValueError``; numerical failures
during integration subclass ``RuntimeError``. Everything derives from
:class:`SwitchedIOSSError` so the CLI can map errors to exit codes.
"""
from __future__ import annotations

from typing import Optional


class SwitchedIOSSError(Exception):
    """Base class of every error raised by the package."""


# --- expression DSL ---------------------------------------------------------


class ExpressionError(SwitchedIOSSError, ValueError):
    def __init__(self, message: str, *, source: str = "", position: Optional[int] = None):
        self.source = source
        self.position = position
        where = f" at position {position}" if position is not None else ""
        super().__init__(f"{message}{where}" + (f" in {source!r}" if source else ""))


class ExpressionSyntaxError(ExpressionError):
    pass


class UnknownIdentifierError(ExpressionError):
    def __init__(self, name: str, **kw):
        self.name = name
        super().__init__(f"unknown identifier {name!r}", **kw)


class ArityError(ExpressionError):
    def __init__(self, func: str, expected: str, got: int, **kw):
        self.func = func
        super().__init__(f"{func}() takes {expected} argument(s), got {got}", **kw)


# --- family / config --------------------------------------------------------


class FamilyConfigError(SwitchedIOSSError, ValueError):
    pass


class DimensionMismatchError(FamilyConfigError):
    pass


class InvariantViolationError(FamilyConfigError):
    pass


class AssumptionViolationError(FamilyConfigError):
    """An unstable subsystem has no admissible switch into a stable one."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(
            f"unstable subsystem {index} has no edge to a stable subsystem"
        )


# --- switching signals ------------------------------------------------------


class SignalError(SwitchedIOSSError, ValueError):
    pass


class SignalDomainError(SignalError):
    pass


class DeadEndError(SignalError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"no admissible successor for subsystem {index}")


# --- scalar conditions ------------------------------------------------------


class ConditionDomainError(SwitchedIOSSError, ValueError):
    pass


class InfeasibleCertificateError(SwitchedIOSSError, ValueError):
    pass


class InfeasibleParametersError(SwitchedIOSSError, ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        joined = "; ".join(str(v) for v in self.violations)
        super().__init__(f"estimator parameters rejected: {joined}")


# --- simulation -------------------------------------------------------------


class SimulationError(SwitchedIOSSError, RuntimeError):
    pass


class DivergenceError(SimulationError):
    def __init__(self, index: int, time: float, channel: str = "x"):
        self.index = index
        self.time = time
        self.channel = channel
        super().__init__(f"{channel} diverged at node {index} (t={time:g})")


class SwitchMisalignmentError(SimulationError):
    pass


class EmptyTrajectoryError(SimulationError):
    pass
