"""Multi-modal GP imitation learning with optimized disturbance injection."""

__version__ = "0.1.0"

from .errors import BdiError, CollectionError, InputError, NumericalError, ProtocolError

__all__ = [
    "BdiError",
    "InputError",
    "NumericalError",
    "CollectionError",
    "ProtocolError",
    "__version__",
]
