"""Exception and warning types raised across the package."""


class DualDragError(Exception):
    """Base class for package errors."""


class DomainError(DualDragError, ValueError):
    pass


class InvalidSpecError(DualDragError, ValueError):
    pass


class ResolutionError(DualDragError, ValueError):
    pass


class CapacityError(DualDragError, ValueError):
    pass


class ConfigurationError(DualDragError, ValueError):
    pass


class IntegrityError(DualDragError, ValueError):
    """An operator that must be Hermitian (or unitary) is not."""


class ResetDegenerateError(DualDragError, ValueError):
    """Projection removed the whole state."""


class ParameterError(DualDragError, ValueError):
    pass


class SingularityError(DualDragError, ValueError):
    pass


class CalibrationRangeError(DualDragError, RuntimeError):
    pass


class DegenerateCalibrationError(DualDragError, RuntimeError):
    pass


class RefinementDivergenceError(DualDragError, RuntimeError):
    pass


class NearResonanceWarning(UserWarning):
    pass


class InsensitiveParameterWarning(UserWarning):
    pass


class FitWarning(UserWarning):
    pass
