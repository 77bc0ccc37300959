"""Exception hierarchy shared across the toolkit.

Every error that can surface at the CLI carries a process exit code and a
short machine-readable code used in the single-line stderr message.
"""


class ToolkitError(Exception):
    """Base class for failures the CLI turns into a nonzero exit."""

    exit_code = 1
    code = "internal"


class UsageError(ToolkitError):
    """Invalid invocation: contradictory flags, malformed config values."""

    exit_code = 2
    code = "usage"


class DataError(ToolkitError):
    """Bad input data: files, headers, labels, shapes, schema violations."""

    exit_code = 3
    code = "data"


class SchemaMismatchError(DataError):
    """Input does not match the schema a component was fitted on."""


class NumericError(ToolkitError):
    """Numerical failure (non-finite loss or values) in training or inference."""

    exit_code = 4
    code = "numeric"
