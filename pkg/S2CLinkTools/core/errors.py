"""
Exceptions raised by S2CLinkTools.

Each one subclasses the builtin exception that code catching generic errors
would expect, so `except ValueError` keeps working.
"""


class ConfigurationError(ValueError):
    """Invalid or unknown configuration value."""


class CapacityError(ValueError):
    """A payload does not fit the frame it is rendered into."""


class ShapeError(ValueError):
    """Array dimensions do not match what the operation requires."""


class EncodingError(ValueError):
    """Text that cannot be represented with 8-bit character codes."""


class OutOfStreamError(ValueError):
    """A capture time outside the span of a transmit schedule."""


class DomainError(ValueError):
    """Arguments outside the mathematical domain of a formula."""


class LabelMapError(KeyError):
    """A frame kind that an experiment does not label."""


class WeightFormatError(IOError):
    """A weight file that is truncated, corrupt or built for another model."""


class ContractViolation(RuntimeError):
    """An operation was called with state it does not accept (e.g. a stale cache)."""
