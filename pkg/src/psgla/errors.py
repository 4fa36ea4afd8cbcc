"""Exception types shared across the package.

The CLI maps these onto exit codes: InputError -> 2, NumericError -> 3.
Statistical-test failures are reported through result objects, not exceptions.
"""


class PsglaError(Exception):
    """Base class for all package errors."""


class InputError(PsglaError, ValueError):
    """Invalid user input: bad dimensions, out-of-range parameters, malformed config."""


class NumericError(PsglaError, ArithmeticError):
    """Non-finite values encountered during simulation or evaluation."""


class InvariantViolation(PsglaError):
    """A declared invariant of a constructed object does not hold (e.g. unbounded polytope)."""


class DegenerateGeometryError(PsglaError):
    """Sampling or projection cannot proceed because the geometry is degenerate."""


class DegenerateDampingError(PsglaError):
    """Damping ratio computed as exactly 1; the oscillator solution is ill-defined."""


class TemperatureError(PsglaError):
    """Rejection sampling stalled; reduce beta or restrict the domain."""


class UnknownMinimumError(InputError):
    """The loss has no closed-form minimum on the requested body; the user must supply one."""
