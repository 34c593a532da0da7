"""Exception types shared by every module."""

from __future__ import annotations


class InvalidArgumentError(ValueError):
    """A caller passed arguments outside an operation's preconditions."""


class TargetSpecError(InvalidArgumentError):
    """A target spec string failed to parse; `position` is the 0-based offset."""

    def __init__(self, message: str, text: str, position: int):
        self.text = text
        self.position = position
        super().__init__(f"{message} at position {position}: {text!r}")


class ContractViolationError(RuntimeError):
    """An internal contract (freeze, accounting) was broken."""


class ModelEvaluationError(RuntimeError):
    """The target could not be evaluated at a point the engine needs."""

    def __init__(self, message: str, theta):
        self.theta = theta
        super().__init__(f"{message}: theta={list(theta)!r}")
