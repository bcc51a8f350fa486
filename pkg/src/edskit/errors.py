"""Exception types shared across the engine."""

from __future__ import annotations


class EdsError(Exception):
    """Base class for all engine errors."""


class DegenerateExpression(EdsError):
    """Division by an identically-zero denominator, or a non-finite value."""


class UnknownCoordinate(EdsError):
    """A coordinate name that does not belong to the chart."""


class ChartMismatch(EdsError):
    """Operands live on incompatible charts."""


class DegreeError(EdsError):
    """Operation applied to a form of inadmissible degree."""


class RankDeficient(EdsError):
    """Generators expected to be independent are not."""


class IndeterminateRank(EdsError):
    """A pivot's nonvanishing could not be decided in strict mode."""

    def __init__(self, scalar, context: str = ""):
        self.scalar = scalar
        self.context = context
        msg = f"cannot decide whether {scalar} vanishes"
        if context:
            msg += f" ({context})"
        super().__init__(msg)


class MissingIndependence(EdsError):
    """The operation needs an independence condition and none is present."""


class WrongCorank(EdsError):
    """System corank is not the one the operation requires."""


class ComplementNotFound(EdsError):
    """No coordinate complement makes the generators plus du, tau a coframe."""


class NotIndependent(EdsError):
    """Adjoined 1-forms are dependent modulo the system and tau."""


class NotCTS(EdsError):
    """Operation requires a control-type system."""


class NotStronglyLinear(EdsError):
    """Operation requires a strongly linear system."""


class NotASystem(EdsError):
    """A construction produced (or received) something that fails the system axioms."""


class NeedsAssumption(EdsError):
    """A construction needs a nonvanishing hypothesis the caller must supply."""

    def __init__(self, scalar, context: str = ""):
        self.scalar = scalar
        self.context = context
        msg = f"needs assumption that {scalar} != 0"
        if context:
            msg += f" ({context})"
        super().__init__(msg)


class InconsistentAssumptions(EdsError):
    """The same scalar is asserted both zero and nonzero."""


class StructureEquationFailure(EdsError):
    """A coframing congruence has a nonzero residual."""

    def __init__(self, equation: str, residual):
        self.equation = equation
        self.residual = residual
        super().__init__(f"structure equation {equation} fails; residual {residual}")


class ParseError(EdsError):
    """Syntax or resolution error in a system document, with source span."""

    def __init__(self, message: str, line: int, col: int, expected=()):
        self.message = message
        self.line = line
        self.col = col
        self.expected = tuple(expected)
        loc = f"{line}:{col}"
        if self.expected:
            message = f"{message} (expected one of: {', '.join(self.expected)})"
        super().__init__(f"{loc}: {message}")
