"""Exception types raised across the package."""

from __future__ import annotations


class LorentzFinslerError(Exception):
    """Base class for every error raised by this package."""


class ExprSyntaxError(LorentzFinslerError, SyntaxError):
    """Malformed expression text.

    ``offset`` is the byte offset into the UTF-8 source where parsing stopped
    and ``expected`` is the set of token kinds that would have been accepted.
    """

    def __init__(self, message: str, offset: int, expected: frozenset[str], source: str = ""):
        SyntaxError.__init__(self, message)
        self.msg = message
        self.offset = offset
        self.expected = expected
        self.source = source

    def __str__(self) -> str:
        exp = ", ".join(sorted(self.expected))
        return f"{self.msg} at offset {self.offset} (expected one of: {exp})"


class UnknownVariable(LorentzFinslerError, NameError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r} at offset {offset}")
        self.name = name
        self.offset = offset


class DomainError(LorentzFinslerError, ValueError):
    """Evaluation left the domain of an operation (or of a model)."""

    def __init__(self, message: str, node=None, bindings=None):
        super().__init__(message)
        self.node = node
        self.bindings = dict(bindings) if bindings is not None else None


class SignatureError(LorentzFinslerError, ValueError):
    def __init__(self, message: str, eigenvalues=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues


class InsufficientSamples(LorentzFinslerError, ValueError):
    pass


class NotInPolarCone(LorentzFinslerError, ValueError):
    pass


class NotTemporal(NotInPolarCone):
    def __init__(self, message: str, x=None):
        super().__init__(message)
        self.x = x


class OutOfEpsilonRange(LorentzFinslerError, ValueError):
    pass


class NotUnitSpeed(LorentzFinslerError, ValueError):
    pass


class InapplicableCurvature(LorentzFinslerError, ValueError):
    def __init__(self, message: str, sample=None):
        super().__init__(message)
        self.sample = sample


class LeftDomain(LorentzFinslerError, RuntimeError):
    def __init__(self, message: str, exit_time: float):
        super().__init__(message)
        self.exit_time = exit_time


class StepFailure(LorentzFinslerError, RuntimeError):
    pass


class FrameSingular(LorentzFinslerError, RuntimeError):
    pass


class IllConditioned(LorentzFinslerError, RuntimeError):
    pass


class NotStraight(LorentzFinslerError, ValueError):
    def __init__(self, message: str, worst=None):
        super().__init__(message)
        self.worst = worst


class NoConvergence(LorentzFinslerError, RuntimeError):
    pass


class NonTimelikeLimit(LorentzFinslerError, RuntimeError):
    pass


class GridTooCoarse(LorentzFinslerError, ValueError):
    pass


class ModelFileError(LorentzFinslerError, ValueError):
    """Unreadable or invalid model file; ``offset`` locates expression syntax errors."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset
