import logging

import numpy as np

from typing import List, Tuple

from Models.Tensors import Tensor, ParamStore
from Models.Fields import DisplacementWindow
from Models.Configs import AttentionConfig
from Models.Layers import Layer, Linear, LayerNorm, MLP, Conv2d, to_tokens, from_tokens
from Methods import TensorOps as ops
from Methods.AttentionOps import sliding_cross_attention, anchor_attention, window_partition, window_reverse, \
    get_relativePositionIndex, get_shiftMask
from Utilities.Exceptions import ShapeMismatchError, AblationConfigError

log = logging.getLogger(__name__)


class MergeHead(Layer):
    """concat(Z_0->t, Z_1->t) -> Linear 2C->C -> LayerNorm = Y, then Y + MLP(LayerNorm(Y))."""

    def __init__(self, store: ParamStore, name: str, channels: int, mlpRatio: float):
        super(MergeHead, self).__init__(store, name)
        self.reduce = Linear(store, self.child('reduce'), 2 * channels, channels)
        self.norm1 = LayerNorm(store, self.child('norm1'), channels)
        self.norm2 = LayerNorm(store, self.child('norm2'), channels)
        self.mlp = MLP(store, self.child('mlp'), channels, mlpRatio)

    def forward(self, fromZero: Tensor, fromOne: Tensor) -> Tensor:
        tokens = to_tokens(ops.concat([fromZero, fromOne], axis=0))
        y = self.norm1(self.reduce(tokens))
        y = ops.add(y, self.mlp(self.norm2(y)))
        return from_tokens(y)


class _SlidingAttentionBlock(Layer):

    def __init__(self, store: ParamStore, name: str, cfg: AttentionConfig):
        super(_SlidingAttentionBlock, self).__init__(store, name)
        self.cfg = cfg
        self.window = DisplacementWindow(cfg.radius)
        C = cfg.channels
        self.query = Linear(store, self.child('query'), C, C)
        self.key = Linear(store, self.child('key'), C, C)
        self.value = Linear(store, self.child('value'), C, C)
        self.positionBias = self.add_param('positionBias', np.zeros((cfg.heads, self.window.size)))
        self.merge = MergeHead(store, self.child('merge'), C, cfg.mlpRatio)
        self.scale = 1.0 / np.sqrt(cfg.headChannels) if cfg.scaleLogits else 1.0
        self.lastWeights: List[Tensor] = []

    def project(self, projection: Linear, x: Tensor) -> Tensor:
        return from_tokens(projection(to_tokens(x)))

    def check_inputs(self, *maps: Tensor):
        if any(m.shape != maps[0].shape for m in maps) or maps[0].ndim != 3 or maps[0].shape[0] != self.cfg.channels:
            raise ShapeMismatchError(self.name, [m.shape for m in maps])


class BCANoAnchorBlock(_SlidingAttentionBlock):
    """Bilateral cross attention without anchor. Z_1->t takes queries from F0 at x - d and keys/values from F1 at x + d;
    Z_0->t runs the same computation with F0 and F1 swapped."""

    def attend(self, source: Tensor, target: Tensor):
        return sliding_cross_attention(self.project(self.query, source), self.project(self.key, target), self.project(self.value, target),
                                       self.window, mode='symmetric', heads=self.cfg.heads, positionBias=self.positionBias, scale=self.scale)

    def forward(self, F0: Tensor, F1: Tensor) -> Tensor:
        self.check_inputs(F0, F1)
        fromOne = self.attend(F0, F1)
        fromZero = self.attend(F1, F0)
        self.lastWeights = [fromOne.weights, fromZero.weights]
        return self.merge(fromZero.attended, fromOne.attended)


class BCAAnchorBlock(_SlidingAttentionBlock):
    """Bilateral cross attention with anchor. Queries come from the anchor Z at x; keys/values come from F0 at x - d and F1 at x + d
    through shared projections; one softmax over d weighs both aggregations."""

    def forward(self, Z: Tensor, F0: Tensor, F1: Tensor) -> Tensor:
        self.check_inputs(Z, F0, F1)
        fromZero, fromOne, result = anchor_attention(self.project(self.query, Z),
                                                     self.project(self.key, F0), self.project(self.key, F1),
                                                     self.project(self.value, F0), self.project(self.value, F1),
                                                     self.window, heads=self.cfg.heads, positionBias=self.positionBias, scale=self.scale)
        self.lastWeights = [result.weights]
        return self.merge(fromZero, fromOne)


class SwinBlock(Layer):
    """Pre-norm windowed multi-head self-attention with relative position bias, optionally on a half-window cyclic shift.
    Inputs whose sides are not multiples of the window size are zero-padded and cropped back."""

    def __init__(self, store: ParamStore, name: str, channels: int, heads: int, windowSize: int, shifted: bool = False, mlpRatio: float = 2.0):
        super(SwinBlock, self).__init__(store, name)
        if channels % heads:
            raise ShapeMismatchError(name, [(channels,)], 'channels not divisible by {0} heads'.format(heads))
        self.channels, self.heads, self.windowSize, self.shifted = channels, heads, windowSize, shifted
        self.scale = 1.0 / np.sqrt(channels // heads)
        self.norm1 = LayerNorm(store, self.child('norm1'), channels)
        self.qkv = Linear(store, self.child('qkv'), channels, 3 * channels)
        self.proj = Linear(store, self.child('proj'), channels, channels)
        self.biasTable = self.add_param('biasTable', np.zeros(((2 * windowSize - 1) ** 2, heads)))
        self.norm2 = LayerNorm(store, self.child('norm2'), channels)
        self.mlp = MLP(store, self.child('mlp'), channels, mlpRatio)
        self.lastWeights: Tensor = None

    def get_shift(self, H: int, W: int) -> int:
        if not self.shifted or min(H, W) <= self.windowSize:
            if self.shifted:
                log.debug('%s: %dx%d fits one window, shift disabled', self.name, H, W)
            return 0
        return self.windowSize // 2

    def attend_windows(self, windows: Tensor, mask: np.ndarray) -> Tensor:
        """(nW, w*w, C) tokens -> (nW, w*w, C) attended tokens."""
        nW, n, C = windows.shape
        h, dh = self.heads, C // self.heads
        qkv = ops.permute(ops.reshape(self.qkv(windows), (nW, n, 3, h, dh)), (2, 0, 3, 1, 4))
        q, k, v = (ops.crop(qkv, (i,)) for i in range(3))
        logits = ops.mul(ops.matmul(q, ops.permute(k, (0, 1, 3, 2))), self.scale)
        bias = ops.permute(ops.reshape(ops.gather(self.biasTable, get_relativePositionIndex(self.windowSize).ravel()), (n, n, h)), (2, 0, 1))
        weights = ops.softmax(ops.add(logits, bias), axis=-1, mask=None if mask is None else mask[:, None, :, :])
        self.lastWeights = weights
        out = ops.permute(ops.matmul(weights, v), (0, 2, 1, 3))
        return self.proj(ops.reshape(out, (nW, n, C)))

    def forward(self, Z: Tensor) -> Tensor:
        C, H, W = Z.shape
        w = self.windowSize
        padH, padW = (-H) % w, (-W) % w
        tokens = to_tokens(Z)
        x = from_tokens(self.norm1(tokens))
        if padH or padW:
            x = ops.pad2d(x, 0, padH, 0, padW)
        Hp, Wp = H + padH, W + padW
        shift = self.get_shift(Hp, Wp)
        if shift:
            x = ops.roll2d(x, -shift, -shift)
        mask = get_shiftMask(Hp, Wp, w, shift) if shift else None
        x = window_reverse(self.attend_windows(window_partition(x, w), mask), w, Hp, Wp)
        if shift:
            x = ops.roll2d(x, shift, shift)
        if padH or padW:
            x = ops.crop(x, (slice(None), slice(0, H), slice(0, W)))
        y = ops.add(tokens, to_tokens(x))
        y = ops.add(y, self.mlp(self.norm2(y)))
        return from_tokens(y)


class BilateralAttentionStack(Layer):
    """Nine-block order [BCA-A, Swin, Swin(shifted), BCA+A, Swin, Swin(shifted), BCA+A, Swin, Swin(shifted)].
    Disabled BCA blocks pass Z through unchanged; with BCA-A disabled the stream is seeded by a 1x1 projection of concat(F0, F1)."""

    def __init__(self, store: ParamStore, name: str, cfg: AttentionConfig):
        super(BilateralAttentionStack, self).__init__(store, name)
        if not cfg.useBCANoAnchor and not cfg.seedProjection:
            raise AblationConfigError('ConfigError: With BCA-A disabled the attention stack needs seedProjection to build an anchor stream.')
        self.cfg = cfg
        C = cfg.channels
        self.bcaNoAnchor = BCANoAnchorBlock(store, self.child('block1_bca'), cfg) if cfg.useBCANoAnchor else None
        self.seed = Conv2d(store, self.child('seed'), 2 * C, C, kernelSize=1) if not cfg.useBCANoAnchor else None
        anchorFlags = [cfg.useBCAAnchorFirst, cfg.useBCAAnchorSecond]
        self.blocks: List[Tuple[str, Layer]] = [('bcaNoAnchor', self.bcaNoAnchor)]
        for stage in range(3):
            if stage > 0:
                index = 3 * stage + 1
                block = BCAAnchorBlock(store, self.child('block{0}_bcaAnchor'.format(index)), cfg) if anchorFlags[stage - 1] else None
                self.blocks.append(('bcaAnchor', block))
            for shifted in (False, True):
                index = len(self.blocks) + 1
                self.blocks.append(('swin', SwinBlock(store, self.child('block{0}_swin'.format(index)), C, cfg.heads, cfg.windowSize,
                                                      shifted=shifted, mlpRatio=cfg.mlpRatio)))

    def forward(self, F0: Tensor, F1: Tensor) -> Tuple[Tensor, List[Tensor]]:
        """Returns Z_t and the nine intermediates Z^1 ... Z^9."""
        if F0.shape != F1.shape:
            raise ShapeMismatchError(self.name, [F0.shape, F1.shape])
        intermediates = []
        Z = None
        for kind, block in self.blocks:
            if kind == 'bcaNoAnchor':
                Z = block(F0, F1) if block is not None else self.seed(ops.concat([F0, F1], axis=0))
            elif kind == 'bcaAnchor':
                Z = block(Z, F0, F1) if block is not None else Z
            else:
                Z = block(Z)
            intermediates.append(Z)
        return Z, intermediates

    @property
    def enabledBlocks(self) -> List[str]:
        return [kind for kind, block in self.blocks if block is not None]
