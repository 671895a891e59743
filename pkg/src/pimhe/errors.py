"""Exception hierarchy shared by every module in the package."""


class PimheError(Exception):
    """Base class for all package errors."""


class ParameterError(PimheError, ValueError):
    """Mismatched widths, rings, parameter sets, or malformed configuration."""


class ContractError(PimheError, ValueError):
    """An operand violates an operation's precondition (e.g. a residue >= q)."""


class DepthError(PimheError):
    """A homomorphic multiplication would exceed the supported depth."""


class PlaintextOverflowError(PimheError):
    """A workload's worst-case plaintext magnitude does not fit below t."""

    def __init__(self, message: str, bound: int, limit: int):
        super().__init__(message)
        self.bound = bound
        self.limit = limit


class OracleMismatchError(PimheError):
    """Simulated or encrypted results disagree with the reference computation."""
