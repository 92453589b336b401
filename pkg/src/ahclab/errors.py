"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: validation-grade errors -> 1,
I/O errors (plain OSError) -> 2, numerical failures -> 3.
"""


class AhcError(Exception):
    """Base class for all package errors."""


class DomainError(AhcError):
    """A value or input violates a domain contract (exit code 1)."""


class SchemaError(DomainError):
    """A mandatory column or field is missing from an input file."""


class ConfigError(DomainError):
    """Configuration problems; collects every problem found at once."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ParseError(DomainError):
    """No parseable JSON object in a scorer response."""

    def __init__(self, message, raw=""):
        self.raw = raw
        super().__init__(message)


class RangeError(ParseError):
    """A score fell outside [0, 100]."""


class EnumError(ParseError):
    """An augmentation type outside the seven allowed values."""


class NumericalError(AhcError):
    """Rank deficiency, non-convergence, or other numerical failure (exit code 3)."""
