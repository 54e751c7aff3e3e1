import numpy as np

from functools import lru_cache
from typing import Tuple, Union

from Models.Tensors import Tensor
from Models.Fields import FeatureMap, MotionField, Endpoint
from Methods import TensorOps as ops
from Utilities.Exceptions import ResolutionMismatchError, InvalidTimeError, InvalidScaleError

Source = Union[Tensor, FeatureMap]
Flow = Union[Tensor, MotionField]

_scalableEndpoints = {Endpoint.ZERO_TO_1: Endpoint.ZERO_TO_T, Endpoint.ONE_TO_0: Endpoint.ONE_TO_T}


@lru_cache(maxsize=32)
def _get_grid(H: int, W: int) -> Tuple[np.ndarray, np.ndarray]:
    ys, xs = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing='ij')
    xs.setflags(write=False)
    ys.setflags(write=False)
    return xs, ys


def _unpack(source: Source, flow: Flow):
    sourceTensor = source.data if isinstance(source, FeatureMap) else source
    flowTensor = flow.data if isinstance(flow, MotionField) else flow
    if sourceTensor.ndim != 3 or flowTensor.ndim != 3 or flowTensor.shape[0] != 2 or sourceTensor.shape[1:] != flowTensor.shape[1:]:
        raise ResolutionMismatchError(sourceTensor.shape, flowTensor.shape)
    return sourceTensor, flowTensor


def get_targetCoordinates(flow: Tensor) -> Tuple[Tensor, Tensor]:
    """x + V(x) as two HxW coordinate tensors (px, py)."""
    H, W = flow.shape[1:]
    xs, ys = _get_grid(H, W)
    px = ops.add(ops.crop(flow, (0,)), xs.astype(flow.dtype))
    py = ops.add(ops.crop(flow, (1,)), ys.astype(flow.dtype))
    return px, py


def backward_warp(source: Source, flow: Flow) -> Source:
    """output(x) = source(x + flow(x)), bilinear, zero outside the frame. A FeatureMap source returns a FeatureMap at the same scale."""
    sourceTensor, flowTensor = _unpack(source, flow)
    px, py = get_targetCoordinates(flowTensor)
    warped = ops.bilinear_sample(sourceTensor, px, py)
    if isinstance(source, FeatureMap):
        return FeatureMap(warped, source.scale)
    return warped


def forward_warp(source: Source, flow: Flow) -> Tuple[Tensor, Tensor]:
    """Splats every source pixel to x + flow(x). Returns the raw accumulated image and the 1xHxW accumulated bilinear weights."""
    sourceTensor, flowTensor = _unpack(source, flow)
    px, py = get_targetCoordinates(flowTensor)
    H, W = sourceTensor.shape[1:]
    accumulated = ops.bilinear_splat(sourceTensor, px, py, H, W)
    ones = Tensor(np.ones((1, H, W), dtype=sourceTensor.dtype))
    weights = ops.bilinear_splat(ones, px, py, H, W)
    return accumulated, weights


def normalize_splat(accumulated: Tensor, weights: Tensor, tau: float = 1e-6) -> Tensor:
    """accumulated / weights where weights > tau; holes (weights <= tau) are zero."""
    covered = (weights.data > tau).astype(weights.dtype)
    safeWeights = ops.add(ops.mul(weights, covered), 1 - covered)
    return ops.mul(ops.div(accumulated, safeWeights), covered)


def scale_flow(flow: MotionField, t: float) -> MotionField:
    """Linear-motion scaling V_0->t = t * V_0->1 (and likewise from frame 1)."""
    if not 0 < t < 1:
        raise InvalidTimeError(t)
    if flow.endpoint not in _scalableEndpoints:
        raise ValueError('InputError: Only 0->1 or 1->0 fields can be time-scaled, got {0}'.format(flow.endpoint.value))
    return MotionField(ops.mul(flow.data, t), flow.scale, _scalableEndpoints[flow.endpoint])


def rescale_field(flow: MotionField, factor: float) -> MotionField:
    """Bilinear resize by factor 2 or 1/2 together with multiplying the displacement values by the same factor."""
    H, W = flow.resolution
    if factor == 2:
        if flow.scale < 2:
            raise InvalidScaleError('InputError: Field at scale 1/{0} cannot be upsampled past input resolution.'.format(flow.scale))
        resized = ops.bilinear_resize(flow.data, 2 * H, 2 * W)
        newScale = flow.scale // 2
    elif factor == 0.5:
        if H % 2 or W % 2:
            raise InvalidScaleError('InputError: Field of size {0}x{1} cannot be halved.'.format(H, W))
        resized = ops.bilinear_resize(flow.data, H // 2, W // 2)
        newScale = flow.scale * 2
    else:
        raise InvalidScaleError('InputError: Rescale factor must be 2 or 1/2, got {0}.'.format(factor))
    return MotionField(ops.mul(resized, float(factor)), newScale, flow.endpoint)


def rescale_toScale(flow: MotionField, scale: int) -> MotionField:
    """Repeated rescale_field until the field sits at 1/scale."""
    while flow.scale > scale:
        flow = rescale_field(flow, 2)
    while flow.scale < scale:
        flow = rescale_field(flow, 0.5)
    return flow
