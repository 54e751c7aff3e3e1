import logging

import numpy as np

from typing import Dict, Union

from Models.Tensors import Tensor, get_defaultDtype
from Models.Fields import FeatureMap, BilateralPair, CostVolume, DisplacementWindow
from Methods import TensorOps as ops
from Methods.WarpOps import get_targetCoordinates
from Utilities.Exceptions import ShapeMismatchError, InvalidBlockIndexError, InvalidScaleError, SymmetryViolationError

log = logging.getLogger(__name__)

Features = Union[Tensor, FeatureMap]


def _tensor(features: Features) -> Tensor:
    return features.data if isinstance(features, FeatureMap) else features


def bilateral_correlation(F0: Features, F1: Features, radius: int) -> CostVolume:
    """C(x, d) = <F0(x - d), F1(x + d)> over the (2r+1)^2 window, zero-padded reads."""
    F0, F1 = _tensor(F0), _tensor(F1)
    if F0.shape != F1.shape or F0.ndim != 3:
        raise ShapeMismatchError('bilateral_correlation', [F0.shape, F1.shape])
    window = DisplacementWindow(radius)
    volume = ops.window_dot(F0, F1, window.offsets, -1, +1)
    return CostVolume(ops.permute(volume, (1, 2, 0)), radius, 0, 'bilateral')


def get_blockCenters(pair: BilateralPair, k: int):
    """Motion-shifted centers (x + V_t->0(x)) / 2^k and (x + V_t->1(x)) / 2^k, in block coordinates."""
    divisor = float(2 ** k)
    px0, py0 = get_targetCoordinates(pair.toZero.data)
    px1, py1 = get_targetCoordinates(pair.toOne.data)
    return (ops.mul(px0, 1 / divisor), ops.mul(py0, 1 / divisor)), (ops.mul(px1, 1 / divisor), ops.mul(py1, 1 / divisor))


def bbcv(S0k: Features, S1k: Features, pair: BilateralPair, k: int, radius: int = 2) -> CostVolume:
    """Blockwise bilateral cost volume indexed by fine-grid x: B(x, d) = <S0k(c0(x) - d), S1k(c1(x) + d)>, bilinear reads at fractional centers."""
    if k not in (0, 1, 2):
        raise InvalidBlockIndexError(k)
    S0k, S1k = _tensor(S0k), _tensor(S1k)
    if S0k.shape != S1k.shape or S0k.ndim != 3:
        raise ShapeMismatchError('bbcv', [S0k.shape, S1k.shape])
    H, W = pair.resolution
    if (S0k.shape[1] * 2 ** k, S0k.shape[2] * 2 ** k) != (H, W):
        raise InvalidScaleError('InputError: Block features {0} are not at 1/{1} of the {2}x{3} motion grid.'.format(S0k.shape[1:], 2 ** k, H, W))
    if not pair.isSymmetric():
        raise SymmetryViolationError('bbcv input', pair.get_maxAsymmetry())

    (cx0, cy0), (cx1, cy1) = get_blockCenters(pair, k)
    window = DisplacementWindow(radius)
    costs = []
    for dx, dy in window.offsets:
        sample0 = ops.bilinear_sample(S0k, ops.sub(cx0, float(dx)), ops.sub(cy0, float(dy)))
        sample1 = ops.bilinear_sample(S1k, ops.add(cx1, float(dx)), ops.add(cy1, float(dy)))
        costs.append(ops.sum(ops.mul(sample0, sample1), axis=0))
    return CostVolume(ops.stack(costs, axis=-1), radius, k, 'motion')


def get_blockCoverage(radius: int, k: int) -> int:
    """Pixel area ((2r+1) * 2^k)^2 searched by one block cost volume."""
    return ((2 * radius + 1) * 2 ** k) ** 2


def get_equivalentPixelRadius(radius: int, k: int) -> int:
    """Pixel radius of a full volume whose window spans the same side length as block index k."""
    return (2 * radius + 1) * 2 ** k // 2


def memory_report(H: int, W: int, radius: int, mode: str = 'full', scalarSize: int = None, blockIndices=(0, 1, 2)) -> int:
    """Bytes of cost-volume storage. 'full' is one HxWx(2r+1)^2 volume with pixel radius r, 'blockwise' sums one radius-r volume per block index."""
    if scalarSize is None:
        scalarSize = np.dtype(get_defaultDtype()).itemsize
    perVolume = max(H, 0) * max(W, 0) * (2 * radius + 1) ** 2 * scalarSize
    if mode == 'full':
        return perVolume
    if mode == 'blockwise':
        return perVolume * len(blockIndices)
    raise ValueError('InputError: memory_report mode must be "full" or "blockwise", got {0}'.format(mode))


def get_memoryComparison(H: int, W: int, radius: int = 2, scalarSize: int = None) -> Dict[str, float]:
    """Blockwise storage against a full volume of equal pixel coverage at the largest block index."""
    equivalentRadius = get_equivalentPixelRadius(radius, 2)
    blockwise = memory_report(H, W, radius, 'blockwise', scalarSize)
    full = memory_report(H, W, equivalentRadius, 'full', scalarSize)
    log.debug('%dx%d, radius %d: blockwise %d bytes against full %d bytes at radius %d', H, W, radius, blockwise, full, equivalentRadius)
    return {'blockwise': blockwise, 'full': full, 'equivalentRadius': equivalentRadius,
            'ratio': blockwise / full if full else 0.0,
            'coverage': [get_blockCoverage(radius, k) for k in (0, 1, 2)]}
