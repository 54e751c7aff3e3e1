import numpy as np

from Models.Tensors import Tensor
from Models.Fields import BilateralPair
from Models.Configs import LossConfig
from Methods import TensorOps as ops
from Methods.WarpOps import backward_warp
from Utilities.Exceptions import ShapeMismatchError, ResolutionMismatchError

_defaultConfig = LossConfig()
_lumaWeights = np.array([0.299, 0.587, 0.114]).reshape(3, 1, 1)


def charbonnier(x: Tensor, cfg: LossConfig = _defaultConfig) -> Tensor:
    """mean((x^2 + eps^2)^alpha)"""
    return ops.mean(ops.power(ops.add(ops.mul(x, x), cfg.eps ** 2), cfg.alpha))


def charbonnier_floor(cfg: LossConfig = _defaultConfig) -> float:
    return (cfg.eps ** 2) ** cfg.alpha


def to_intensity(image: Tensor, scale: float) -> Tensor:
    """HxW luma in [0, scale] from a 3xHxW, 1xHxW or HxW image."""
    if image.ndim == 2:
        gray = image
    elif image.shape[0] == 3:
        gray = ops.sum(ops.mul(image, _lumaWeights.astype(image.dtype)), axis=0)
    elif image.shape[0] == 1:
        gray = ops.reshape(image, image.shape[1:])
    else:
        raise ShapeMismatchError('census', [image.shape], 'expected 1 or 3 channels')
    return ops.mul(gray, scale)


def soft_census(gray: Tensor, patch: int, squash: float):
    """Per neighbor offset, the squashed difference d / sqrt(squash + d^2) on the interior pixels."""
    H, W = gray.shape
    half = patch // 2
    interior = (slice(half, H - half), slice(half, W - half))
    center = ops.crop(gray, interior)
    transforms = []
    for oy in range(-half, half + 1):
        for ox in range(-half, half + 1):
            if oy == 0 and ox == 0:
                continue
            neighbor = ops.crop(gray, (slice(half + oy, H - half + oy), slice(half + ox, W - half + ox)))
            difference = ops.sub(neighbor, center)
            transforms.append(ops.div(difference, ops.power(ops.add(ops.mul(difference, difference), squash), 0.5)))
    return transforms


def census_loss(A: Tensor, B: Tensor, cfg: LossConfig = _defaultConfig) -> Tensor:
    """Soft ternary census over a patch x patch neighborhood, soft Hamming distance sum(sq / (threshold + sq)) over neighbors,
    robustified as rho(h) - rho(0) so identical images score exactly zero. Mean over the valid interior."""
    if A.shape != B.shape:
        raise ShapeMismatchError('census_loss', [A.shape, B.shape])
    H, W = A.shape[-2:]
    if H < cfg.censusPatch or W < cfg.censusPatch:
        raise ShapeMismatchError('census_loss', [A.shape], 'image smaller than the {0}x{0} census patch'.format(cfg.censusPatch))
    transformsA = soft_census(to_intensity(A, cfg.intensityScale), cfg.censusPatch, cfg.censusSquash)
    transformsB = soft_census(to_intensity(B, cfg.intensityScale), cfg.censusPatch, cfg.censusSquash)
    hamming = None
    for tA, tB in zip(transformsA, transformsB):
        delta = ops.sub(tA, tB)
        squared = ops.mul(delta, delta)
        distance = ops.div(squared, ops.add(squared, cfg.censusThreshold))
        hamming = distance if hamming is None else ops.add(hamming, distance)
    # floor evaluated elementwise through the same kernels, so h = 0 cancels bit-exactly
    floor = np.power(np.zeros_like(hamming.data) + np.asarray(cfg.eps ** 2, dtype=hamming.dtype), cfg.alpha)
    robust = ops.sub(ops.power(ops.add(ops.mul(hamming, hamming), cfg.eps ** 2), cfg.alpha), floor)
    return ops.mean(robust)


def photometric_loss(Igt: Tensor, I0: Tensor, I1: Tensor, pair: BilateralPair, cfg: LossConfig = _defaultConfig) -> Tensor:
    """rho(Igt - warp(I0, V_t->0)) + rho(Igt - warp(I1, V_t->1)) plus the census terms of both warped frames."""
    if tuple(pair.resolution) != tuple(Igt.shape[1:]):
        raise ResolutionMismatchError(Igt.shape, (2,) + tuple(pair.resolution))
    warped0 = backward_warp(I0, pair.toZero)
    warped1 = backward_warp(I1, pair.toOne)
    loss = ops.add(charbonnier(ops.sub(Igt, warped0), cfg), charbonnier(ops.sub(Igt, warped1), cfg))
    return ops.add(loss, ops.add(census_loss(Igt, warped0, cfg), census_loss(Igt, warped1, cfg)))


def synthesis_loss(Igt: Tensor, It: Tensor, cfg: LossConfig = _defaultConfig) -> Tensor:
    if Igt.shape != It.shape:
        raise ShapeMismatchError('synthesis_loss', [Igt.shape, It.shape])
    return ops.add(charbonnier(ops.sub(Igt, It), cfg), census_loss(Igt, It, cfg))
