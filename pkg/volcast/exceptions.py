"""
Volcast Errors
Exception hierarchy shared by the library and the command-line entry point
"""


class VolcastError(Exception):
    """Base class for every error raised by volcast"""

    exit_code = 1


# ====================
# DATA ERRORS (exit 2)
# ====================

class DataError(VolcastError, ValueError):
    """Input data is malformed, too short, or otherwise unusable"""

    exit_code = 2


class SchemaError(DataError):
    """Bar file is missing a required column"""


class BarParseError(DataError):
    """A bar row could not be parsed or violates the OHLC invariants"""

    def __init__(self, message, row=None, line=None):
        self.row = row
        self.line = line
        if row is not None:
            message = f"row {row} (line {line}): {message}"
        super().__init__(message)


class BarOrderError(BarParseError):
    """Timestamps are duplicated or not increasing"""


class IncompleteSessionError(DataError):
    """Sessions with fewer bars than expected under the fail policy"""

    def __init__(self, report):
        self.report = report
        dates = ", ".join(str(d) for d in sorted(report.incomplete))
        super().__init__(
            f"{len(report.incomplete)} incomplete session(s) "
            f"(expected {report.expected} bars): {dates}"
        )


class SeriesLengthError(DataError):
    """Series is too short for the requested operation"""


class ShapeError(DataError):
    """Array arguments have inconsistent lengths"""


class IndicatorWarmupError(DataError):
    """Series is shorter than an indicator's warm-up period"""

    def __init__(self, indicator, needed, available):
        self.indicator = indicator
        super().__init__(
            f"{indicator} needs more than {needed} bars, only {available} available"
        )


class CollinearityError(DataError):
    """Regression design is rank deficient"""

    def __init__(self, column):
        self.column = column
        super().__init__(f"regressor '{column}' is collinear with earlier columns")


class BoundsError(DataError):
    """A count or index argument is outside its admissible range"""


class ExogHorizonError(DataError):
    """Exogenous regressors were not supplied for the forecast horizon"""


class MapeUndefinedError(DataError):
    """MAPE is undefined because an actual value is zero"""

    def __init__(self, index):
        self.index = index
        super().__init__(f"actual value at index {index} is zero; MAPE undefined")


class ZeroVolumeError(DataError):
    """VWAP is undefined because total volume is zero"""


class DegenerateSeriesError(DataError):
    """Series has zero variance"""


class ModelDomainError(DataError):
    """Parameters violate stationarity, invertibility, or sigma2 > 0"""


# =====================
# MODEL ERRORS (exit 3)
# =====================

class ModelError(VolcastError):
    """Estimation or evaluation failed"""

    exit_code = 3


class ConvergenceError(ModelError):
    """Optimizer did not converge after every restart"""

    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)


class OrderSearchError(ModelError):
    """Every candidate order failed to fit"""

    def __init__(self, failures):
        self.failures = failures
        super().__init__(f"all {len(failures)} candidate fits failed")


class FoldFailureError(ModelError):
    """Some cross-validation folds failed"""

    def __init__(self, failures):
        self.failures = failures
        super().__init__(f"{len(failures)} fold(s) or candidate(s) failed")
