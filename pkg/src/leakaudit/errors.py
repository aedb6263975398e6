"""Exception hierarchy shared by every module.

Each class carries a short ``category`` used by the command-line front end
to print ``error:<category>:`` diagnostics.
"""


class AuditError(Exception):
    category = "runtime"


class InvalidArgument(AuditError, ValueError):
    category = "invalid-argument"


class ShapeMismatch(AuditError, ValueError):
    category = "shape-mismatch"


class InvalidLabel(AuditError, ValueError):
    category = "invalid-label"


class EmptySubset(AuditError, ValueError):
    category = "empty-subset"


class DegenerateInput(AuditError, ValueError):
    category = "degenerate-input"


class InsufficientPopulation(AuditError, ValueError):
    category = "insufficient-population"


class ArchitectureMismatch(AuditError, ValueError):
    category = "architecture-mismatch"


class InconsistentInputs(AuditError, ValueError):
    category = "inconsistent-inputs"


class SchemaError(AuditError, ValueError):
    category = "schema"


class ParseError(AuditError, ValueError):
    """A CSV cell could not be parsed.

    ``row`` is the 1-based data row (the header is not counted) and
    ``column`` the header name of the offending cell.
    """

    category = "parse"

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class AuditIOError(AuditError, OSError):
    category = "io"

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class ConfigError(AuditError, ValueError):
    category = "config"
