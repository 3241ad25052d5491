"""Exception hierarchy for estimation, data and experiment failures"""


class HLCEError(ValueError):
    """Base class for all library errors"""


class ConfigError(HLCEError):
    """Missing or invalid configuration"""


class SchemaError(HLCEError):
    """Malformed dataset file or row"""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class PositivityError(HLCEError):
    """A required group/arm subpopulation or split stratum is empty or too small"""


class PreconditionError(HLCEError):
    """Invalid arguments for an operation"""


class RankDeficientError(HLCEError):
    """Least squares design without full column rank"""


class TrainingError(HLCEError):
    """Network training diverged"""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class FactorizationError(HLCEError):
    """Matrix factorization failed even after jitter escalation"""


class CalibrationError(HLCEError):
    """Offset calibration could not reach its target"""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved or {}
