from typing import Sequence


class ShapeMismatchError(Exception):
    def __init__(self, opName: str, shapes: Sequence = (), detail: str = ''):
        message = 'ShapeError: Operands of {0} are not shape-compatible: {1}'.format(opName, ', '.join(str(tuple(shape)) for shape in shapes))
        if detail:
            message += ' - ' + detail
        super(ShapeMismatchError, self).__init__(message)


class NonFiniteError(Exception):
    def __init__(self, opName: str):
        super(NonFiniteError, self).__init__('NumericError: {0} produced non-finite values (NaN or Inf).'.format(opName))


class ResolutionMismatchError(Exception):
    def __init__(self, sourceShape: Sequence, flowShape: Sequence):
        message = 'ResolutionError: Flow resolution {0} does not match source resolution {1}.'.format(tuple(flowShape), tuple(sourceShape))
        super(ResolutionMismatchError, self).__init__(message)


class InvalidTimeError(Exception):
    def __init__(self, t: float):
        super(InvalidTimeError, self).__init__('InputError: Time t = {0} is outside the open interval (0, 1).'.format(t))


class InvalidScaleError(Exception):
    def __init__(self, message: str):
        super(InvalidScaleError, self).__init__(message)


class InvalidBlockIndexError(Exception):
    def __init__(self, k: int):
        super(InvalidBlockIndexError, self).__init__('InputError: Block size index k = {0} is not one of 0, 1, 2.'.format(k))


class AblationConfigError(Exception):
    def __init__(self, message: str):
        super(AblationConfigError, self).__init__(message)


class ConfigError(Exception):
    def __init__(self, message: str):
        super(ConfigError, self).__init__(message)


class FlowFileError(Exception):
    def __init__(self, filepath, reason: str):
        super(FlowFileError, self).__init__('FileError: {0} is not a valid .flo file - {1}'.format(filepath, reason))


class WeightFileError(Exception):
    def __init__(self, filepath, reason: str):
        super(WeightFileError, self).__init__('FileError: {0} is not a valid weight container - {1}'.format(filepath, reason))


class ImageFileError(Exception):
    def __init__(self, filepath, reason: str):
        super(ImageFileError, self).__init__('FileError: Image {0} could not be read - {1}'.format(filepath, reason))


class DivergenceError(Exception):
    def __init__(self, iteration: int, lastFiniteLoss: float, cause: str = ''):
        message = 'TrainingError: Loss became non-finite at iteration {0} (last finite loss {1}).'.format(iteration, lastFiniteLoss)
        if cause:
            message += ' Cause: ' + cause
        super(DivergenceError, self).__init__(message)


class SymmetryViolationError(Exception):
    def __init__(self, stageName: str, maxResidual: float):
        message = 'ModelError: Field pair at stage "{0}" violates V_t0 = -V_t1 (max |V_t0 + V_t1| = {1}).'.format(stageName, maxResidual)
        super(SymmetryViolationError, self).__init__(message)


class GradientCheckError(Exception):
    def __init__(self, checkName: str, error: float, tolerance: float):
        message = 'GradientError: {0} failed with max relative error {1:.3e} (tolerance {2:.1e}).'.format(checkName, error, tolerance)
        super(GradientCheckError, self).__init__(message)
