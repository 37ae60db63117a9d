"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class MvTraceError(Exception):
    exit_code = 1


class SchemaError(MvTraceError):
    """Malformed input file or configuration."""

    exit_code = 2


class DomainError(MvTraceError, ValueError):
    """Mathematically invalid input (point off the manifold, R <= 0, ...)."""

    exit_code = 3


class ContractError(DomainError):
    """Input violates an operation precondition (e.g. boundary data shape)."""


class ResolutionError(MvTraceError, ValueError):
    """Grid too coarse or misaligned for the requested operation."""

    exit_code = 4


class AlignmentError(ResolutionError):
    pass
