"""Exception types shared across the package."""


class RulAttackError(Exception):
    """Base class for all package errors."""


class DimensionError(RulAttackError):
    """Operand shapes are incompatible for the requested operation."""


class DomainError(RulAttackError):
    """Input values fall outside the operation's documented domain."""


class UsageError(RulAttackError):
    """API misuse, e.g. backward on a non-scalar or detached tensor."""


class ParseError(RulAttackError):
    """A data file could not be parsed; message carries the line number."""


class FormatError(RulAttackError):
    """A checkpoint or perturbation file is corrupt or version-mismatched."""


class ConfigError(RulAttackError):
    """A run configuration is invalid or incomplete."""


class TrainingDivergedError(RulAttackError):
    """Training produced a non-finite loss; message carries diagnostics."""
