"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage problems -> 1, data/contract
problems -> 2, numeric failures -> 3.
"""


class CausalmixError(Exception):
    """Base class for all package-specific errors."""


class ContractError(CausalmixError):
    """A caller violated a documented precondition."""


class DimensionError(ContractError):
    """Operand shapes are incompatible for the requested operation."""


class DomainError(ContractError):
    """An input value lies outside the mathematical domain of an operation."""


class NumericError(CausalmixError):
    """A computation produced non-finite values or diverged."""


class GenerationError(CausalmixError):
    """The synthetic data generator could not satisfy its constraints."""


class DataError(CausalmixError):
    """A dataset directory or file on disk is missing or malformed."""
