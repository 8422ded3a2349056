"""Error taxonomy used to map failures onto CLI exit codes."""


class DataFormatError(ValueError):
    """Malformed input data (CSV parse failures, label range errors, NaNs)."""


class NumericDomainError(ValueError):
    """Formula arguments outside a bound's domain of validity (e.g. n < 3)."""
