import logging

from typing import List

from Models.Tensors import Tensor, ParamStore
from Models.Fields import BilateralPair
from Models.Configs import SynthesisConfig
from Models.Layers import Layer, Conv2d, ConvStack
from Methods import TensorOps as ops
from Methods.WarpOps import backward_warp, rescale_field
from Utilities.Exceptions import ShapeMismatchError, InvalidScaleError

log = logging.getLogger(__name__)


class FrameSynthesizer(Layer):
    """Encoder at 1/2, 1/4, 1/8, warped skip connections into each decoder level, bilinear upsampling between levels,
    and a bias-free sub-pixel output stage back to full resolution."""

    def __init__(self, store: ParamStore, name: str, cfg: SynthesisConfig, inChannels: int = 3):
        super(FrameSynthesizer, self).__init__(store, name)
        self.cfg = cfg
        self.inChannels = inChannels
        widths = cfg.widths
        self.encoderLevels = []
        previous = inChannels
        for level, width in enumerate(widths):
            self.encoderLevels.append(ConvStack(store, self.child('encoder{0}'.format(level)), [previous, width, width], firstStride=2))
            previous = width

        self.decoderLevels = {}
        for level in reversed(range(len(widths))):
            inWidth = 2 * widths[level]
            if level < len(widths) - 1:
                inWidth += widths[level + 1]
            if level == 0 and cfg.feedWarpedFrames:
                inWidth += 2 * inChannels
            self.decoderLevels[level] = ConvStack(store, self.child('decoder{0}'.format(level)), [inWidth, widths[level], widths[level]])
        self.output = Conv2d(store, self.child('output'), widths[0], inChannels * 4, kernelSize=3, bias=False)

    def encode(self, image: Tensor) -> List[Tensor]:
        features = []
        x = image
        for level in self.encoderLevels:
            x = ops.relu(level(x))
            features.append(x)
        return features

    def get_levelPairs(self, pair: BilateralPair) -> List[BilateralPair]:
        pairs = [pair]
        for _ in range(len(self.cfg.widths) - 1):
            pairs.append(BilateralPair.from_toOne(rescale_field(pairs[-1].toOne, 0.5)))
        return pairs

    def synthesize(self, I0: Tensor, I1: Tensor, pair: BilateralPair) -> Tensor:
        if I0.shape != I1.shape:
            raise ShapeMismatchError(self.name, [I0.shape, I1.shape])
        _, H, W = I0.shape
        if H % 8 or W % 8:
            raise ShapeMismatchError(self.name, [I0.shape], 'frame sides must be divisible by 8')
        if pair.scale != 2 or tuple(pair.resolution) != (H // 2, W // 2):
            raise InvalidScaleError('InputError: Synthesis expects fields at 1/2 scale ({0}x{1}), got 1/{2} at {3}.'.format(
                H // 2, W // 2, pair.scale, tuple(pair.resolution)))

        log.debug('%s: synthesizing %dx%d from %d levels', self.name, H, W, len(self.cfg.widths))
        levelPairs = self.get_levelPairs(pair)
        G0, G1 = self.encode(I0), self.encode(I1)
        x = None
        for level in reversed(range(len(self.cfg.widths))):
            levelPair = levelPairs[level]
            inputs = [backward_warp(G0[level], levelPair.toZero), backward_warp(G1[level], levelPair.toOne)]
            if x is not None:
                _, h, w = inputs[0].shape
                inputs.insert(0, ops.bilinear_resize(x, h, w))
            if level == 0 and self.cfg.feedWarpedFrames:
                inputs.append(backward_warp(ops.area_downsample(I0, 2), levelPair.toZero))
                inputs.append(backward_warp(ops.area_downsample(I1, 2), levelPair.toOne))
            x = ops.relu(self.decoderLevels[level](ops.concat(inputs, axis=0)))
        return ops.pixel_shuffle(self.output(x), 2)

    def forward(self, I0: Tensor, I1: Tensor, pair: BilateralPair) -> Tensor:
        return self.synthesize(I0, I1, pair)
