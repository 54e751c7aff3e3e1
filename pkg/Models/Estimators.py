import logging

import numpy as np

from typing import List, NamedTuple

from Models.Tensors import Tensor, ParamStore
from Models.Fields import FeatureMap, MotionField, BilateralPair, CostVolume, Endpoint
from Models.Configs import EncoderConfig, PipelineConfig
from Models.Layers import Layer, Conv2d, ConvStack
from Models.Attentions import SwinBlock, BilateralAttentionStack
from Methods import TensorOps as ops
from Methods.CostVolumeOps import bilateral_correlation
from Utilities.Exceptions import ShapeMismatchError, ResolutionMismatchError

log = logging.getLogger(__name__)


class GlobalEncoder(Layer):
    """Stride-8 feature extractor: per stage a stride-2 patch embedding followed by windowed self-attention blocks."""

    def __init__(self, store: ParamStore, name: str, cfg: EncoderConfig, inChannels: int = 3):
        super(GlobalEncoder, self).__init__(store, name)
        self.cfg = cfg
        self.stages = []
        for index, width in enumerate(cfg.widths):
            embed = Conv2d(store, self.child('stage{0}.embed'.format(index)), inChannels, width, kernelSize=2, stride=2, padding=0)
            blocks = [SwinBlock(store, self.child('stage{0}.block{1}'.format(index, b)), width, cfg.heads, cfg.windowSize,
                                shifted=False, mlpRatio=cfg.mlpRatio) for b in range(cfg.blocksPerStage)]
            self.stages.append((embed, blocks))
            inChannels = width

    def forward(self, image: Tensor) -> FeatureMap:
        _, H, W = image.shape
        if H % self.cfg.stride or W % self.cfg.stride:
            raise ShapeMismatchError(self.name, [image.shape], 'frame sides must be divisible by {0}'.format(self.cfg.stride))
        x = image
        for embed, blocks in self.stages:
            x = embed(x)
            for block in blocks:
                x = block(x)
        return FeatureMap(x, self.cfg.stride)


class MotionHead(Layer):
    """concat(C_t over d, Z_t) -> 3x3 convs (128, 64, 2) with ReLU between. Emits V_t->1 only."""

    def __init__(self, store: ParamStore, name: str, costChannels: int, featureChannels: int, hiddenWidths=(128, 64)):
        super(MotionHead, self).__init__(store, name)
        self.convs = ConvStack(store, self.child('convs'), [costChannels + featureChannels] + list(hiddenWidths) + [2])

    def forward(self, costs: Tensor, Z: Tensor) -> Tensor:
        return self.convs(ops.concat([costs, Z], axis=0))


class BiFormerOutput(NamedTuple):
    pair: BilateralPair
    costVolume: CostVolume
    Z: Tensor
    intermediates: List[Tensor]
    features: List[FeatureMap]


class BiFormer(Layer):
    """Global bilateral motion estimator: shared encoder, bilateral correlation, attention stack and symmetric motion head."""

    def __init__(self, store: ParamStore, name: str, cfg: PipelineConfig):
        super(BiFormer, self).__init__(store, name)
        self.cfg = cfg
        self.encoder = GlobalEncoder(store, self.child('encoder'), cfg.encoder)
        self.attention = BilateralAttentionStack(store, self.child('attention'), cfg.attention)
        self.head = MotionHead(store, self.child('head'), (2 * cfg.globalRadius + 1) ** 2, cfg.attention.channels)

    def encode_global(self, image: Tensor) -> FeatureMap:
        return self.encoder(image)

    def predict_global_motion(self, costVolume: CostVolume, Z: Tensor, scale: int = None) -> BilateralPair:
        if tuple(costVolume.resolution) != tuple(Z.shape[1:]):
            raise ResolutionMismatchError(Z.shape[1:], costVolume.resolution)
        costs = costVolume.as_channelsFirst()
        if self.cfg.costVolumeNormalization == 'sqrt':
            costs = ops.mul(costs, 1.0 / np.sqrt(Z.shape[0]))
        toOne = MotionField(self.head(costs, Z), self.cfg.globalScale if scale is None else scale, Endpoint.T_TO_1)
        return BilateralPair.from_toOne(toOne)

    def forward(self, I0: Tensor, I1: Tensor) -> BiFormerOutput:
        if I0.shape != I1.shape:
            raise ShapeMismatchError(self.name, [I0.shape, I1.shape], 'frames must have equal size')
        F0 = self.encode_global(I0)
        F1 = self.encode_global(I1)
        costVolume = bilateral_correlation(F0, F1, self.cfg.globalRadius)
        Z, intermediates = self.attention(F0.data, F1.data)
        pair = self.predict_global_motion(costVolume, Z, F0.scale)
        log.debug('ModelNotification: Global motion at 1/%d, max |V_t->1| = %.3f', F0.scale, float(np.abs(pair.toOne.numpy()).max()))
        return BiFormerOutput(pair, costVolume, Z, intermediates, [F0, F1])
