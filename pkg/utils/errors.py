"""
Exception types for the ensemble VQC library.
The CLI maps each family to a process exit code (see EXIT_CODES).
"""


class EnsembleVQCError(Exception):
    """Base class for every error raised on purpose by this package."""


class ConfigurationError(EnsembleVQCError, ValueError):
    """Invalid sizes, ranges or experiment settings."""


class ShapeError(EnsembleVQCError, ValueError):
    """Vector or matrix dimensions do not line up."""


class DegenerateInputError(EnsembleVQCError, ValueError):
    """Input that cannot be turned into a quantum state (e.g. the zero vector)."""


class DataFormatError(EnsembleVQCError, ValueError):
    """Malformed IDX/CSV content or missing data files."""


class VerificationError(EnsembleVQCError):
    """A gradient check or runtime invariant guard failed."""


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFICATION = 3

EXIT_CODES = {
    ConfigurationError: EXIT_USAGE,
    ShapeError: EXIT_USAGE,
    DegenerateInputError: EXIT_USAGE,
    DataFormatError: EXIT_DATA,
    FileNotFoundError: EXIT_DATA,
    VerificationError: EXIT_VERIFICATION,
}


def exit_code_for(error: BaseException) -> int:
    """Exit code for an exception raised while running a subcommand."""
    for error_type, code in EXIT_CODES.items():
        if isinstance(error, error_type):
            return code
    return EXIT_USAGE
