import numpy as np

from functools import lru_cache
from typing import Tuple, NamedTuple

from Models.Tensors import Tensor
from Models.Fields import DisplacementWindow
from Methods import TensorOps as ops
from Utilities.Exceptions import ShapeMismatchError


class AttentionResult(NamedTuple):
    attended: Tensor
    logits: Tensor
    weights: Tensor


# SLIDING-WINDOW ATTENTION
# Head-split maps are h x dh x H x W; logits and weights are h x D x H x W with D the window size.

def split_heads(x: Tensor, heads: int) -> Tensor:
    C, H, W = x.shape
    if C % heads:
        raise ShapeMismatchError('split_heads', [x.shape], '{0} channels, {1} heads'.format(C, heads))
    return ops.reshape(x, (heads, C // heads, H, W))


def merge_heads(x: Tensor) -> Tensor:
    h, dh, H, W = x.shape
    return ops.reshape(x, (h * dh, H, W))


def get_shifts(mode: str, sign: int) -> Tuple[int, int]:
    """(query shift, key shift) as multipliers of d."""
    if mode == 'symmetric':
        return -1, +1
    if mode == 'anchor':
        if sign not in (-1, 1):
            raise ValueError('InputError: Anchor-mode sign must be -1 or +1, got {0}'.format(sign))
        return 0, sign
    raise ValueError('InputError: Sliding attention mode must be "symmetric" or "anchor", got {0}'.format(mode))


def sliding_logits(queries: Tensor, keys: Tensor, window: DisplacementWindow, mode: str = 'symmetric', sign: int = 1) -> Tensor:
    """Raw dot-product logits. symmetric: Q(x - d) . K(x + d); anchor: Q(x) . K(x + sign*d)."""
    shiftQ, shiftK = get_shifts(mode, sign)
    return ops.window_dot(queries, keys, window.offsets, shiftQ, shiftK)


def get_readMask(H: int, W: int, window: DisplacementWindow, shifts) -> np.ndarray:
    return ops.get_windowValidMask(H, W, window.offsets, tuple(s for s in shifts if s != 0))


def normalize_logits(logits: Tensor, mask: np.ndarray, positionBias: Tensor = None, scale: float = 1.0) -> Tensor:
    """softmax over d of scale * logits + P, masked entries get probability 0."""
    scores = ops.mul(logits, scale) if scale != 1.0 else logits
    if positionBias is not None:
        h, D = positionBias.shape
        scores = ops.add(scores, ops.reshape(positionBias, (h, D, 1, 1)))
    return ops.softmax(scores, axis=-3, mask=mask)


def sliding_cross_attention(queries: Tensor, keys: Tensor, values: Tensor, window: DisplacementWindow, mode: str = 'symmetric',
                            sign: int = 1, heads: int = 1, positionBias: Tensor = None, scale: float = 1.0) -> AttentionResult:
    """Attention of queries over a sliding displacement window of keys/values, all CxHxW. Values are read where the keys are.
    Returns the attended CxHxW map, the raw logits and the normalized weights."""
    if not (queries.shape == keys.shape == values.shape) or queries.ndim != 3:
        raise ShapeMismatchError('sliding_cross_attention', [queries.shape, keys.shape, values.shape])
    H, W = queries.shape[1:]
    shiftQ, shiftK = get_shifts(mode, sign)
    q, k, v = split_heads(queries, heads), split_heads(keys, heads), split_heads(values, heads)
    logits = ops.window_dot(q, k, window.offsets, shiftQ, shiftK)
    weights = normalize_logits(logits, get_readMask(H, W, window, (shiftQ, shiftK)), positionBias, scale)
    attended = ops.window_aggregate(weights, v, window.offsets, shiftK)
    return AttentionResult(merge_heads(attended), logits, weights)


def anchor_attention(queries: Tensor, keys0: Tensor, keys1: Tensor, values0: Tensor, values1: Tensor, window: DisplacementWindow,
                     heads: int = 1, positionBias: Tensor = None, scale: float = 1.0) -> Tuple[Tensor, Tensor, AttentionResult]:
    """Anchor-aware attention: B(x, d) = Q(x) . K0(x - d) + Q(x) . K1(x + d), one softmax over d shared by both aggregations.
    Returns (Z_0->t, Z_1->t, result) where result carries B and its normalized weights."""
    if not (queries.shape == keys0.shape == keys1.shape == values0.shape == values1.shape) or queries.ndim != 3:
        raise ShapeMismatchError('anchor_attention', [queries.shape, keys0.shape, keys1.shape, values0.shape, values1.shape])
    H, W = queries.shape[1:]
    q = split_heads(queries, heads)
    logits = ops.add(ops.window_dot(q, split_heads(keys0, heads), window.offsets, 0, -1),
                     ops.window_dot(q, split_heads(keys1, heads), window.offsets, 0, +1))
    weights = normalize_logits(logits, get_readMask(H, W, window, (-1, +1)), positionBias, scale)
    fromZero = ops.window_aggregate(weights, split_heads(values0, heads), window.offsets, -1)
    fromOne = ops.window_aggregate(weights, split_heads(values1, heads), window.offsets, +1)
    return merge_heads(fromZero), merge_heads(fromOne), AttentionResult(None, logits, weights)


# WINDOWED SELF-ATTENTION HELPERS

def window_partition(x: Tensor, windowSize: int) -> Tensor:
    """CxHxW -> (nWindows, w*w, C), windows in row-major order."""
    C, H, W = x.shape
    w = windowSize
    if H % w or W % w:
        raise ShapeMismatchError('window_partition', [x.shape], 'not divisible by window size {0}'.format(w))
    y = ops.reshape(x, (C, H // w, w, W // w, w))
    y = ops.permute(y, (1, 3, 2, 4, 0))
    return ops.reshape(y, ((H // w) * (W // w), w * w, C))


def window_reverse(windows: Tensor, windowSize: int, H: int, W: int) -> Tensor:
    w = windowSize
    C = windows.shape[-1]
    y = ops.reshape(windows, (H // w, W // w, w, w, C))
    y = ops.permute(y, (4, 0, 2, 1, 3))
    return ops.reshape(y, (C, H, W))


@lru_cache(maxsize=16)
def get_relativePositionIndex(windowSize: int) -> np.ndarray:
    """(w*w, w*w) indices into a (2w-1)^2 bias table."""
    w = windowSize
    coords = np.stack(np.meshgrid(np.arange(w), np.arange(w), indexing='ij')).reshape(2, -1)
    relative = coords[:, :, None] - coords[:, None, :] + (w - 1)
    index = relative[0] * (2 * w - 1) + relative[1]
    index.setflags(write=False)
    return index


@lru_cache(maxsize=16)
def get_shiftMask(H: int, W: int, windowSize: int, shift: int) -> np.ndarray:
    """(nWindows, w*w, w*w) boolean, True where two tokens came from the same region before the cyclic shift."""
    w = windowSize
    regions = np.zeros((H, W), dtype=np.int64)
    if shift > 0:
        label = 0
        for ys in (slice(0, -w), slice(-w, -shift), slice(-shift, None)):
            for xs in (slice(0, -w), slice(-w, -shift), slice(-shift, None)):
                regions[ys, xs] = label
                label += 1
    windows = regions.reshape(H // w, w, W // w, w).transpose(0, 2, 1, 3).reshape(-1, w * w)
    mask = windows[:, :, None] == windows[:, None, :]
    mask.setflags(write=False)
    return mask
