"""Exception types raised across the package."""


class GateError(ValueError):
    """Base class for every error raised by :mod:`gate`."""


class InvalidWindowError(GateError):
    pass


class InvalidSegmentError(GateError):
    pass


class ShapeError(GateError):
    pass


class SchemaError(GateError):
    pass


class DegenerateKernelError(GateError):
    pass


class NormalizationError(GateError):
    pass


class ConfigError(GateError):
    pass


class AugmentationInfeasibleError(GateError):
    pass


class TapeError(GateError):
    pass


class LabelError(GateError):
    pass


class IncompatibleCheckpointError(GateError):
    pass
