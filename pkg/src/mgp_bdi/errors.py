"""Exception hierarchy shared across the package."""


class BdiError(Exception):
    """Base class for all package errors."""


class InputError(BdiError, ValueError):
    """Caller provided inconsistent or invalid data."""


class NumericalError(BdiError, ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""


class CollectionError(BdiError, RuntimeError):
    """Demonstration collection could not be completed (e.g. redraw budget spent)."""


class ProtocolError(BdiError, RuntimeError):
    """A demo-session request violated the session protocol."""
