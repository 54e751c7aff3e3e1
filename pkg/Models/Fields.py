import numpy as np

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from Models.Tensors import Tensor
from Utilities.PrgUtilities import twoList
from Utilities.Numeric import isPowerOfTwo
from Utilities.Exceptions import ShapeMismatchError, InvalidScaleError


class Endpoint(Enum):
    T_TO_0 = 't->0'
    T_TO_1 = 't->1'
    ZERO_TO_1 = '0->1'
    ONE_TO_0 = '1->0'
    ZERO_TO_T = '0->t'
    ONE_TO_T = '1->t'

    @property
    def opposite(self) -> 'Endpoint':
        return _oppositeEndpoints[self]


_oppositeEndpoints = {Endpoint.T_TO_0: Endpoint.T_TO_1, Endpoint.T_TO_1: Endpoint.T_TO_0,
                      Endpoint.ZERO_TO_1: Endpoint.ONE_TO_0, Endpoint.ONE_TO_0: Endpoint.ZERO_TO_1,
                      Endpoint.ZERO_TO_T: Endpoint.ONE_TO_T, Endpoint.ONE_TO_T: Endpoint.ZERO_TO_T}


def check_scale(owner: str, scale: int):
    if not isinstance(scale, (int, np.integer)) or scale < 1 or not isPowerOfTwo(scale):
        raise InvalidScaleError('InputError: {0} scale must be a power-of-two denominator (1, 2, 4, 8, ...), got {1}.'.format(owner, scale))


@dataclass
class FeatureMap:
    """CxHxW features. scale is the power-of-two denominator relative to input resolution (8 means 1/8)."""
    data: Tensor
    scale: int = 1

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ShapeMismatchError('FeatureMap', [self.data.shape], 'expected CxHxW')
        check_scale('FeatureMap', self.scale)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def resolution(self):
        return self.data.shape[1:]


@dataclass
class MotionField:
    """2xHxW displacement field, channel 0 = dx and channel 1 = dy, in pixels of this field's own scale."""
    data: Tensor
    scale: int = 1
    endpoint: Endpoint = Endpoint.T_TO_1

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[0] != 2:
            raise ShapeMismatchError('MotionField', [self.data.shape], 'expected 2xHxW')
        check_scale('MotionField', self.scale)

    @property
    def resolution(self):
        return self.data.shape[1:]

    @property
    def dx(self) -> np.ndarray:
        return self.data.data[0]

    @property
    def dy(self) -> np.ndarray:
        return self.data.data[1]

    def numpy(self) -> np.ndarray:
        return self.data.data


class BilateralPair(twoList):
    """[V_t->0, V_t->1] built from V_t->1 alone, so that V_t->0 = -V_t->1 holds exactly."""

    def __init__(self, toZero: MotionField, toOne: MotionField):
        super(BilateralPair, self).__init__([toZero, toOne])

    @classmethod
    def from_toOne(cls, toOne: MotionField) -> 'BilateralPair':
        from Methods import TensorOps
        toOne = MotionField(toOne.data, toOne.scale, Endpoint.T_TO_1)
        toZero = MotionField(TensorOps.neg(toOne.data), toOne.scale, Endpoint.T_TO_0)
        return cls(toZero, toOne)

    @property
    def toZero(self) -> MotionField:
        return self[0]

    @property
    def toOne(self) -> MotionField:
        return self[1]

    @property
    def scale(self) -> int:
        return self[1].scale

    @property
    def resolution(self):
        return self[1].resolution

    def get_maxAsymmetry(self) -> float:
        return float(np.max(np.abs(self.toZero.numpy() + self.toOne.numpy()))) if self.toOne.data.size else 0.0

    def isSymmetric(self) -> bool:
        return bool(np.all(self.toZero.numpy() + self.toOne.numpy() == 0))


@dataclass
class DisplacementWindow:
    """Square window of displacements d = (dx, dy), |dx|, |dy| <= radius. Enumeration is row-major with dy outer and dx inner."""
    radius: int
    offsets: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError('InputError: Window radius must be non-negative, got {0}'.format(self.radius))
        if self.offsets is None:
            span = np.arange(-self.radius, self.radius + 1)
            dy, dx = np.meshgrid(span, span, indexing='ij')
            self.offsets = np.stack([dx.ravel(), dy.ravel()], axis=1)
        self.offsets = np.asarray(self.offsets, dtype=np.int64)

    @property
    def size(self) -> int:
        return len(self.offsets)

    @property
    def side(self) -> int:
        return 2 * self.radius + 1

    def index(self, dx: int, dy: int) -> int:
        matches = np.nonzero((self.offsets[:, 0] == dx) & (self.offsets[:, 1] == dy))[0]
        if len(matches) == 0:
            raise KeyError('Displacement ({0}, {1}) is outside the window of radius {2}'.format(dx, dy, self.radius))
        return int(matches[0])

    def permuted(self, order: Sequence[int]) -> 'DisplacementWindow':
        return DisplacementWindow(self.radius, self.offsets[np.asarray(order)])

    def mirrored(self) -> 'DisplacementWindow':
        return DisplacementWindow(self.radius, -self.offsets)


@dataclass
class CostVolume:
    """HxWx(2r+1)^2 matching costs. blockIndex is 0 for the global volume; centerConvention is 'bilateral' (x -/+ d) or 'motion' (motion-shifted centers)."""
    data: Tensor
    radius: int
    blockIndex: int = 0
    centerConvention: str = 'bilateral'

    def __post_init__(self):
        side = 2 * self.radius + 1
        if self.data.ndim != 3 or self.data.shape[2] != side * side:
            raise ShapeMismatchError('CostVolume', [self.data.shape], 'last axis must be (2r+1)^2 = {0}'.format(side * side))

    @property
    def resolution(self):
        return self.data.shape[:2]

    def numpy(self) -> np.ndarray:
        return self.data.data

    def as_channelsFirst(self) -> Tensor:
        from Methods import TensorOps
        return TensorOps.permute(self.data, (2, 0, 1))
