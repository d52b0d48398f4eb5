"""Exception hierarchy shared by every wellrec module."""


class WellrecError(Exception):
    """Base class for all errors raised by wellrec."""


class DataError(WellrecError, ValueError):
    """Input files are missing columns, rows, or parseable values."""


class SchemaError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


class CoverageError(DataError):
    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join(self.missing[:10])
        more = f" (+{len(self.missing) - 10} more)" if len(self.missing) > 10 else ""
        super().__init__(f"no feature row for wells: {shown}{more}")


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ConfigError(WellrecError, ValueError):
    pass


class ModelFormatError(WellrecError):
    pass


class ModelVersionError(ModelFormatError):
    def __init__(self, found, expected):
        self.found = found
        self.expected = expected
        super().__init__(f"model file format version {found}, this build reads version {expected}")


class NumericError(WellrecError, ArithmeticError):
    pass


class SaturationError(WellrecError):
    """No company has both an observed and an unobserved well."""


class DegeneratePairError(WellrecError, ValueError):
    pass


class EvaluationError(WellrecError):
    pass


class DimensionMismatchError(WellrecError):
    pass
