"""BFV homomorphic encryption on a simulated processing-in-memory system."""
from .errors import (ContractError, DepthError, OracleMismatchError, ParameterError, PimheError,
                     PlaintextOverflowError)

__version__ = "0.1.0"

__all__ = [
    "ContractError",
    "DepthError",
    "OracleMismatchError",
    "ParameterError",
    "PimheError",
    "PlaintextOverflowError",
    "__version__",
]
