import numpy as np

from functools import lru_cache
from typing import Callable, Sequence, Tuple, Union

from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from Models.Tensors import Tensor, isGradEnabled
from Utilities.Exceptions import ShapeMismatchError, NonFiniteError
from Utilities.Numeric import isFinite

# Every op below validates operand shapes, computes its forward value with numpy, checks finiteness and registers a backward rule
# returning one gradient (or None) per parent, in parent order.

Operand = Union[Tensor, float, int, np.ndarray]

_SQRT_2PI = np.sqrt(2 * np.pi)


def _make(data: np.ndarray, parents: Sequence[Tensor], backwardFcn: Callable, opName: str) -> Tensor:
    if not isFinite(data):
        raise NonFiniteError(opName)
    requires_grad = isGradEnabled() and any(parent.requires_grad for parent in parents)
    if not requires_grad:
        return _constant(data)
    return Tensor(data, requires_grad=True, parents=tuple(parents), backwardFcn=backwardFcn, opName=opName)


def _constant(array: np.ndarray, like: Tensor = None) -> Tensor:
    tensor = Tensor(np.zeros(()), requires_grad=False, opName='constant')
    dtype = like.dtype if like is not None else np.asarray(array).dtype
    if dtype not in (np.float32, np.float64):
        dtype = tensor.dtype
    tensor.data = np.asarray(array, dtype=dtype)
    return tensor


def _asOperand(value: Operand, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return _constant(np.asarray(value), like=like)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(opName: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(opName, [a.shape, b.shape])


def _pair(a: Operand, b: Operand) -> Tuple[Tensor, Tensor]:
    like = a if isinstance(a, Tensor) else b
    return _asOperand(a, like), _asOperand(b, like)


# ELEMENTWISE

def add(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast('add', a, b)

    def backwardFcn(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)
    return _make(a.data + b.data, (a, b), backwardFcn, 'add')


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast('sub', a, b)

    def backwardFcn(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)
    return _make(a.data - b.data, (a, b), backwardFcn, 'sub')


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast('mul', a, b)

    def backwardFcn(grad):
        return _unbroadcast(grad * b.data, a.shape), _unbroadcast(grad * a.data, b.shape)
    return _make(a.data * b.data, (a, b), backwardFcn, 'mul')


def div(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast('div', a, b)
    out = a.data / b.data

    def backwardFcn(grad):
        return _unbroadcast(grad / b.data, a.shape), _unbroadcast(-grad * out / b.data, b.shape)
    return _make(out, (a, b), backwardFcn, 'div')


def neg(x: Tensor) -> Tensor:
    def backwardFcn(grad):
        return (-grad,)
    return _make(-x.data, (x,), backwardFcn, 'neg')


def power(x: Tensor, exponent: float) -> Tensor:
    out = np.power(x.data, exponent)

    def backwardFcn(grad):
        return (grad * exponent * np.power(x.data, exponent - 1),)
    return _make(out, (x,), backwardFcn, 'power')


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)

    def backwardFcn(grad):
        return (grad * out,)
    return _make(out, (x,), backwardFcn, 'exp')


def relu(x: Tensor) -> Tensor:
    positive = x.data > 0

    def backwardFcn(grad):
        return (grad * positive,)
    return _make(x.data * positive, (x,), backwardFcn, 'relu')


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, x * Phi(x)."""
    cdf = 0.5 * (1 + erf(x.data / np.sqrt(2)))

    def backwardFcn(grad):
        pdf = np.exp(-0.5 * x.data ** 2) / _SQRT_2PI
        return (grad * (cdf + x.data * pdf),)
    return _make(x.data * cdf, (x,), backwardFcn, 'gelu')


# REDUCTIONS AND SHAPE

def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backwardFcn(grad):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, x.shape).copy(),)
    return _make(np.asarray(out), (x,), backwardFcn, 'sum')


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeMismatchError('reshape', [x.shape, tuple(shape)])

    def backwardFcn(grad):
        return (grad.reshape(x.shape),)
    return _make(out, (x,), backwardFcn, 'reshape')


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeMismatchError('permute', [x.shape], 'axes {0}'.format(tuple(axes)))
    inverse = np.argsort(axes)

    def backwardFcn(grad):
        return (np.transpose(grad, inverse),)
    return _make(np.ascontiguousarray(np.transpose(x.data, axes)), (x,), backwardFcn, 'permute')


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    reference = tensors[0]
    axis = axis % reference.ndim
    for tensor in tensors[1:]:
        if tensor.ndim != reference.ndim or any(tensor.shape[i] != reference.shape[i] for i in range(reference.ndim) if i != axis):
            raise ShapeMismatchError('concat', [t.shape for t in tensors])
    sizes = [tensor.shape[axis] for tensor in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backwardFcn(grad):
        return tuple(np.split(grad, splits, axis=axis))
    return _make(np.concatenate([tensor.data for tensor in tensors], axis=axis), tuple(tensors), backwardFcn, 'concat')


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if any(tensor.shape != tensors[0].shape for tensor in tensors):
        raise ShapeMismatchError('stack', [t.shape for t in tensors])

    def backwardFcn(grad):
        return tuple(np.moveaxis(grad, axis, 0))
    return _make(np.stack([tensor.data for tensor in tensors], axis=axis), tuple(tensors), backwardFcn, 'stack')


def crop(x: Tensor, index: Tuple) -> Tensor:
    """Basic (slice/integer) indexing."""
    out = x.data[index]

    def backwardFcn(grad):
        full = np.zeros_like(x.data)
        full[index] = grad
        return (full,)
    return _make(np.array(out), (x,), backwardFcn, 'crop')


def gather(x: Tensor, indices: np.ndarray) -> Tensor:
    """x[indices] along the first axis; repeated indices accumulate their gradients."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < -x.shape[0] or indices.max() >= x.shape[0]):
        raise ShapeMismatchError('gather', [x.shape, indices.shape], 'index out of range')

    def backwardFcn(grad):
        full = np.zeros_like(x.data)
        np.add.at(full, indices, grad)
        return (full,)
    return _make(x.data[indices], (x,), backwardFcn, 'gather')


def pad2d(x: Tensor, top: int, bottom: int, left: int, right: int) -> Tensor:
    """Zero padding of the last two axes."""
    widths = [(0, 0)] * (x.ndim - 2) + [(top, bottom), (left, right)]
    H, W = x.shape[-2:]

    def backwardFcn(grad):
        return (grad[..., top:top + H, left:left + W],)
    return _make(np.pad(x.data, widths), (x,), backwardFcn, 'pad2d')


def roll2d(x: Tensor, shiftY: int, shiftX: int) -> Tensor:
    def backwardFcn(grad):
        return (np.roll(grad, (-shiftY, -shiftX), axis=(-2, -1)),)
    return _make(np.roll(x.data, (shiftY, shiftX), axis=(-2, -1)), (x,), backwardFcn, 'roll2d')


# LINEAR ALGEBRA

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError('matmul', [a.shape, b.shape])
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeMismatchError('matmul', [a.shape, b.shape])

    def backwardFcn(grad):
        gradA = np.matmul(grad, np.swapaxes(b.data, -1, -2))
        gradB = np.matmul(np.swapaxes(a.data, -1, -2), grad)
        return _unbroadcast(gradA, a.shape), _unbroadcast(gradB, b.shape)
    return _make(out, (a, b), backwardFcn, 'matmul')


def conv2d(x: Tensor, weight: Tensor, bias: Tensor = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of a CxHxW map with an OxCxkhxkw kernel, zero padding."""
    if x.ndim != 3 or weight.ndim != 4 or weight.shape[1] != x.shape[0]:
        raise ShapeMismatchError('conv2d', [x.shape, weight.shape])
    C, H, W = x.shape
    O, _, kh, kw = weight.shape
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    if Ho <= 0 or Wo <= 0:
        raise ShapeMismatchError('conv2d', [x.shape, weight.shape], 'kernel larger than padded input')
    if bias is not None and bias.shape != (O,):
        raise ShapeMismatchError('conv2d', [weight.shape, bias.shape], 'bias')

    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride][:, :Ho, :Wo]
    out = np.tensordot(weight.data, cols, axes=([1, 2, 3], [0, 3, 4]))
    if bias is not None:
        out = out + bias.data[:, None, None]

    def backwardFcn(grad):
        gradW = np.tensordot(grad, cols, axes=([1, 2], [1, 2]))
        gradCols = np.tensordot(weight.data, grad, axes=([0], [0]))  # C, kh, kw, Ho, Wo
        gradXp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gradXp[:, i:i + stride * (Ho - 1) + 1:stride, j:j + stride * (Wo - 1) + 1:stride] += gradCols[:, i, j]
        gradX = gradXp[:, padding:padding + H, padding:padding + W] if padding else gradXp
        gradB = grad.sum(axis=(1, 2)) if bias is not None else None
        return gradX, gradW, gradB

    parents = (x, weight) if bias is None else (x, weight, bias)
    if bias is None:
        return _make(out, parents, lambda grad: backwardFcn(grad)[:2], 'conv2d')
    return _make(out, parents, backwardFcn, 'conv2d')


def pixel_shuffle(x: Tensor, factor: int) -> Tensor:
    """(C*f*f)xHxW -> Cx(H*f)x(W*f)."""
    Cf, H, W = x.shape
    if Cf % (factor * factor):
        raise ShapeMismatchError('pixel_shuffle', [x.shape], 'channels not divisible by {0}'.format(factor * factor))
    C = Cf // (factor * factor)
    y = reshape(x, (C, factor, factor, H, W))
    y = permute(y, (0, 3, 1, 4, 2))
    return reshape(y, (C, H * factor, W * factor))


# NORMALIZATION AND ATTENTION PRIMITIVES

def softmax(x: Tensor, axis: int = -1, mask: np.ndarray = None) -> Tensor:
    """Softmax along axis. Positions where mask is False get probability 0; rows with no valid entry are all zero."""
    if mask is None:
        shifted = x.data - x.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out = e / e.sum(axis=axis, keepdims=True)
    else:
        mask = np.broadcast_to(mask, x.shape)
        masked = np.where(mask, x.data, -np.inf)
        rowMax = masked.max(axis=axis, keepdims=True)
        rowMax = np.where(np.isfinite(rowMax), rowMax, 0)
        e = np.where(mask, np.exp(np.where(mask, x.data - rowMax, 0)), 0)
        total = e.sum(axis=axis, keepdims=True)
        out = e / np.where(total > 0, total, 1)

    def backwardFcn(grad):
        return (out * (grad - (grad * out).sum(axis=axis, keepdims=True)),)
    return _make(out, (x,), backwardFcn, 'softmax')


def layer_norm(x: Tensor, weight: Tensor, bias: Tensor, axis: int = -1, eps: float = 1e-5) -> Tensor:
    axis = axis % x.ndim
    n = x.shape[axis]
    if weight.shape != (n,) or bias.shape != (n,):
        raise ShapeMismatchError('layer_norm', [x.shape, weight.shape, bias.shape])
    paramShape = [1] * x.ndim
    paramShape[axis] = n
    w = weight.data.reshape(paramShape)
    b = bias.data.reshape(paramShape)

    centered = x.data - x.data.mean(axis=axis, keepdims=True)
    inverseStd = 1.0 / np.sqrt((centered ** 2).mean(axis=axis, keepdims=True) + eps)
    normalized = centered * inverseStd
    otherAxes = tuple(i for i in range(x.ndim) if i != axis)

    def backwardFcn(grad):
        gradNormalized = grad * w
        gradX = inverseStd / n * (n * gradNormalized - gradNormalized.sum(axis=axis, keepdims=True)
                                  - normalized * (gradNormalized * normalized).sum(axis=axis, keepdims=True))
        gradW = (grad * normalized).sum(axis=otherAxes)
        gradB = grad.sum(axis=otherAxes)
        return gradX, gradW, gradB
    return _make(normalized * w + b, (x, weight, bias), backwardFcn, 'layer_norm')


# RESAMPLING

@lru_cache(maxsize=128)
def _get_interpolationMatrix(nIn: int, nOut: int) -> np.ndarray:
    """Linear interpolation weights (nOut x nIn), half-pixel centers, edge-clamped."""
    matrix = np.zeros((nOut, nIn), dtype=np.float64)
    positions = (np.arange(nOut) + 0.5) * (nIn / nOut) - 0.5
    positions = np.clip(positions, 0, nIn - 1)
    lower = np.floor(positions).astype(int)
    upper = np.minimum(lower + 1, nIn - 1)
    fraction = positions - lower
    matrix[np.arange(nOut), lower] += 1 - fraction
    matrix[np.arange(nOut), upper] += fraction
    matrix.setflags(write=False)
    return matrix


def bilinear_resize(x: Tensor, outH: int, outW: int) -> Tensor:
    """Bilinear resize of the last two axes to (outH, outW); the rational factor is outH/H."""
    H, W = x.shape[-2:]
    if outH <= 0 or outW <= 0:
        raise ShapeMismatchError('bilinear_resize', [x.shape], 'target size ({0}, {1})'.format(outH, outW))
    Ry = _get_interpolationMatrix(H, outH).astype(x.dtype)
    Rx = _get_interpolationMatrix(W, outW).astype(x.dtype)
    out = np.einsum('ih,...hw,jw->...ij', Ry, x.data, Rx, optimize=True)

    def backwardFcn(grad):
        return (np.einsum('ih,...ij,jw->...hw', Ry, grad, Rx, optimize=True),)
    return _make(out, (x,), backwardFcn, 'bilinear_resize')


def area_downsample(x: Tensor, factor: int) -> Tensor:
    """Block averaging of the last two axes by an integer factor."""
    H, W = x.shape[-2:]
    if factor < 1 or H % factor or W % factor:
        raise ShapeMismatchError('area_downsample', [x.shape], 'not divisible by {0}'.format(factor))
    lead = x.shape[:-2]
    blocks = x.data.reshape(lead + (H // factor, factor, W // factor, factor))
    out = blocks.mean(axis=(-3, -1))

    def backwardFcn(grad):
        expanded = np.repeat(np.repeat(grad, factor, axis=-2), factor, axis=-1)
        return (expanded / (factor * factor),)
    return _make(out, (x,), backwardFcn, 'area_downsample')


def _get_corners(px: np.ndarray, py: np.ndarray, H: int, W: int):
    """Yields (flatIndex, valid, weight, dWeight/dx, dWeight/dy) for the four bilinear neighbors of each coordinate."""
    x0 = np.floor(px)
    y0 = np.floor(py)
    fx = px - x0
    fy = py - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    for oy, ox in ((0, 0), (0, 1), (1, 0), (1, 1)):
        xi = x0 + ox
        yi = y0 + oy
        valid = (xi >= 0) & (xi < W) & (yi >= 0) & (yi < H)
        flatIndex = np.clip(yi, 0, H - 1) * W + np.clip(xi, 0, W - 1)
        wx = fx if ox else 1 - fx
        wy = fy if oy else 1 - fy
        dwx = 1.0 if ox else -1.0
        dwy = 1.0 if oy else -1.0
        yield flatIndex, valid, wx * wy, dwx * wy, wx * dwy


def bilinear_sample(source: Tensor, px: Tensor, py: Tensor) -> Tensor:
    """Reads source (CxHxW) at fractional coordinates (px, py) with bilinear weights; reads outside the frame are zero."""
    if source.ndim != 3 or px.shape != py.shape or px.ndim != 2:
        raise ShapeMismatchError('bilinear_sample', [source.shape, px.shape, py.shape])
    C, H, W = source.shape
    flatSource = source.data.reshape(C, H * W)
    corners = list(_get_corners(px.data, py.data, H, W))
    out = np.zeros((C,) + px.shape, dtype=source.dtype)
    for flatIndex, valid, weight, _, _ in corners:
        out += flatSource[:, flatIndex] * (weight * valid)

    def backwardFcn(grad):
        gradSource = np.zeros((C, H * W), dtype=source.dtype)
        gradPx = np.zeros(px.shape, dtype=source.dtype)
        gradPy = np.zeros(py.shape, dtype=source.dtype)
        for flatIndex, valid, weight, dWeightX, dWeightY in corners:
            contribution = (grad * (weight * valid)).reshape(C, -1)
            np.add.at(gradSource, (slice(None), flatIndex.ravel()), contribution)
            sampled = (flatSource[:, flatIndex] * grad).sum(axis=0) * valid
            gradPx += sampled * dWeightX
            gradPy += sampled * dWeightY
        return gradSource.reshape(C, H, W), gradPx, gradPy
    return _make(out, (source, px, py), backwardFcn, 'bilinear_sample')


def bilinear_splat(source: Tensor, px: Tensor, py: Tensor, outH: int = None, outW: int = None) -> Tensor:
    """Scatters every source pixel to the four bilinear neighbors of (px, py), accumulating weighted values. Targets outside the frame are dropped."""
    if source.ndim != 3 or px.shape != py.shape or px.shape != source.shape[1:]:
        raise ShapeMismatchError('bilinear_splat', [source.shape, px.shape, py.shape])
    C = source.shape[0]
    H = outH if outH is not None else source.shape[1]
    W = outW if outW is not None else source.shape[2]
    flatSourceValues = source.data.reshape(C, -1)
    corners = list(_get_corners(px.data, py.data, H, W))
    accumulated = np.zeros((C, H * W), dtype=source.dtype)
    for flatIndex, valid, weight, _, _ in corners:
        keep = valid.ravel()
        np.add.at(accumulated, (slice(None), flatIndex.ravel()[keep]), (flatSourceValues * weight.ravel())[:, keep])

    def backwardFcn(grad):
        flatGrad = grad.reshape(C, H * W)
        gradSource = np.zeros_like(flatSourceValues)
        gradPx = np.zeros(px.size, dtype=source.dtype)
        gradPy = np.zeros(py.size, dtype=source.dtype)
        for flatIndex, valid, weight, dWeightX, dWeightY in corners:
            keep = valid.ravel()
            gathered = flatGrad[:, flatIndex.ravel()] * keep
            gradSource += gathered * weight.ravel()
            projected = (gathered * flatSourceValues).sum(axis=0)
            gradPx += projected * dWeightX.ravel()
            gradPy += projected * dWeightY.ravel()
        return gradSource.reshape(source.shape), gradPx.reshape(px.shape), gradPy.reshape(py.shape)
    return _make(accumulated.reshape(C, H, W), (source, px, py), backwardFcn, 'bilinear_splat')


# SLIDING-WINDOW PRIMITIVES (offsets are rows of (dx, dy); shifts are -1, 0 or +1 multipliers of the offset)

def _windowSlice(radius: int, shift: int, dx: int, dy: int, H: int, W: int):
    y = radius + shift * dy
    x = radius + shift * dx
    return (Ellipsis, slice(y, y + H), slice(x, x + W))


def _get_radius(offsets: np.ndarray) -> int:
    return int(np.abs(offsets).max()) if len(offsets) else 0


def get_windowValidMask(H: int, W: int, offsets: np.ndarray, shifts: Sequence[int]) -> np.ndarray:
    """Boolean DxHxW map, True where every shifted read x + shift*d of the window lies inside the frame."""
    ys = np.arange(H)[:, None]
    xs = np.arange(W)[None, :]
    mask = np.ones((len(offsets), H, W), dtype=bool)
    for index, (dx, dy) in enumerate(offsets):
        for shift in shifts:
            y = ys + shift * dy
            x = xs + shift * dx
            mask[index] &= (y >= 0) & (y < H) & (x >= 0) & (x < W)
    return mask


def window_dot(a: Tensor, b: Tensor, offsets: np.ndarray, shiftA: int, shiftB: int) -> Tensor:
    """out[..., d, y, x] = sum_c a[..., c, y + shiftA*dy, x + shiftA*dx] * b[..., c, y + shiftB*dy, x + shiftB*dx], zero outside the frame."""
    if a.shape != b.shape or a.ndim < 3:
        raise ShapeMismatchError('window_dot', [a.shape, b.shape])
    H, W = a.shape[-2:]
    radius = _get_radius(offsets)
    widths = [(0, 0)] * (a.ndim - 2) + [(radius, radius), (radius, radius)]
    ap = np.pad(a.data, widths)
    bp = np.pad(b.data, widths)
    out = np.empty(a.shape[:-3] + (len(offsets), H, W), dtype=a.dtype)
    for index, (dx, dy) in enumerate(offsets):
        out[..., index, :, :] = (ap[_windowSlice(radius, shiftA, dx, dy, H, W)] * bp[_windowSlice(radius, shiftB, dx, dy, H, W)]).sum(axis=-3)

    def backwardFcn(grad):
        gradAp = np.zeros_like(ap)
        gradBp = np.zeros_like(bp)
        for index, (dx, dy) in enumerate(offsets):
            sliceA = _windowSlice(radius, shiftA, dx, dy, H, W)
            sliceB = _windowSlice(radius, shiftB, dx, dy, H, W)
            g = grad[..., index:index + 1, :, :]
            gradAp[sliceA] += g * bp[sliceB]
            gradBp[sliceB] += g * ap[sliceA]
        crop = (Ellipsis, slice(radius, radius + H), slice(radius, radius + W))
        return gradAp[crop], gradBp[crop]
    return _make(out, (a, b), backwardFcn, 'window_dot')


def window_aggregate(weights: Tensor, values: Tensor, offsets: np.ndarray, shift: int) -> Tensor:
    """out[..., c, y, x] = sum_d weights[..., d, y, x] * values[..., c, y + shift*dy, x + shift*dx], zero outside the frame."""
    if weights.shape[-3] != len(offsets) or weights.shape[-2:] != values.shape[-2:] or weights.shape[:-3] != values.shape[:-3]:
        raise ShapeMismatchError('window_aggregate', [weights.shape, values.shape])
    H, W = values.shape[-2:]
    radius = _get_radius(offsets)
    widths = [(0, 0)] * (values.ndim - 2) + [(radius, radius), (radius, radius)]
    vp = np.pad(values.data, widths)
    out = np.zeros(values.shape, dtype=values.dtype)
    for index, (dx, dy) in enumerate(offsets):
        out += weights.data[..., index:index + 1, :, :] * vp[_windowSlice(radius, shift, dx, dy, H, W)]

    def backwardFcn(grad):
        gradWeights = np.empty_like(weights.data)
        gradVp = np.zeros_like(vp)
        for index, (dx, dy) in enumerate(offsets):
            sliceV = _windowSlice(radius, shift, dx, dy, H, W)
            gradWeights[..., index, :, :] = (grad * vp[sliceV]).sum(axis=-3)
            gradVp[sliceV] += weights.data[..., index:index + 1, :, :] * grad
        return gradWeights, gradVp[..., radius:radius + H, radius:radius + W]
    return _make(out, (weights, values), backwardFcn, 'window_aggregate')
