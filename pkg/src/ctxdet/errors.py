"""Exception types shared across the package."""


class DataError(Exception):
    """Raised when input data is malformed or inconsistent with its contract.

    Covers parse failures, schema violations, unknown class ids, degenerate
    training sets, and anything else where the fix lies in the caller's data
    rather than in this library. The CLI maps this to exit code 2.
    """


class ParseError(DataError):
    """A file or document could not be interpreted at all."""
