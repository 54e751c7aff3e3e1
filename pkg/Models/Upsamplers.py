import logging

from typing import List, NamedTuple

from Models.Tensors import Tensor, ParamStore
from Models.Fields import FeatureMap, MotionField, BilateralPair, CostVolume, Endpoint
from Models.Configs import UpsamplerConfig
from Models.Layers import Layer, Conv2d, ConvStack
from Methods import TensorOps as ops
from Methods.WarpOps import backward_warp, rescale_field
from Methods.CostVolumeOps import bbcv
from Utilities.Exceptions import ShapeMismatchError, ResolutionMismatchError

log = logging.getLogger(__name__)

BLOCK_INDICES = (0, 1, 2)


class RefinementOutput(NamedTuple):
    pair: BilateralPair
    upsampled: BilateralPair
    residual: Tensor
    costVolumes: List[CostVolume]


class MotionUpsampler(Layer):
    """Local motion refinement applied recurrently with one weight set. A pass doubles the field resolution:
    Vout_t->1 = rescale(Vin_t->1, x2) + dV, Vout_t->0 = -Vout_t->1."""

    def __init__(self, store: ParamStore, name: str, cfg: UpsamplerConfig, inChannels: int = 3):
        super(MotionUpsampler, self).__init__(store, name)
        self.cfg = cfg
        Cs, Cm = cfg.shallowChannels, cfg.matchingChannels
        D = (2 * cfg.bbcvRadius + 1) ** 2
        self.shallow = ConvStack(store, self.child('shallow'), [inChannels, Cs, Cs])
        self.blockEmbeds = [Conv2d(store, self.child('blockEmbed{0}'.format(k)), Cs, Cs, kernelSize=2 ** k, stride=2 ** k, padding=0)
                            for k in BLOCK_INDICES]
        self.matchingConvs = [Conv2d(store, self.child('matching{0}'.format(k)), D + 2, Cm, kernelSize=3) for k in BLOCK_INDICES]
        self.aggregate = Conv2d(store, self.child('aggregate'), len(BLOCK_INDICES) * Cm, Cm, kernelSize=1)
        self.decoder = ConvStack(store, self.child('decoder'), [2 * Cs + Cm + 2] + list(cfg.decoderWidths) + [2 * 4], firstStride=2)

    def shallow_encode(self, image: Tensor) -> FeatureMap:
        return FeatureMap(self.shallow(image), 1)

    def block_embed(self, S: Tensor) -> List[Tensor]:
        _, H, W = S.shape
        if H % 4 or W % 4:
            raise ShapeMismatchError(self.child('blockEmbed'), [S.shape], 'sides must be divisible by 4')
        return [embed(S) for embed in self.blockEmbeds]

    def matching_features(self, costVolumes: List[CostVolume], toOne: MotionField) -> Tensor:
        branches = []
        for volume, conv in zip(costVolumes, self.matchingConvs):
            if tuple(volume.resolution) != tuple(toOne.resolution):
                raise ResolutionMismatchError(toOne.resolution, volume.resolution)
            branches.append(ops.relu(conv(ops.concat([volume.as_channelsFirst(), toOne.data], axis=0))))
        return self.aggregate(ops.concat(branches, axis=0))

    def predict_residual(self, decoderInput: Tensor) -> Tensor:
        return ops.pixel_shuffle(self.decoder(decoderInput), 2)

    def refine_pass(self, pair: BilateralPair, I0: Tensor, I1: Tensor) -> RefinementOutput:
        """I0, I1 are frames at the pass's output scale, i.e. twice the resolution of the incoming field."""
        H, W = pair.resolution
        if I0.shape != I1.shape or tuple(I0.shape[1:]) != (2 * H, 2 * W):
            raise ResolutionMismatchError(I0.shape[1:], (2 * H, 2 * W))
        upsampled = BilateralPair.from_toOne(rescale_field(pair.toOne, 2))

        S0 = self.shallow_encode(I0).data
        S1 = self.shallow_encode(I1).data
        costVolumes = [bbcv(S0k, S1k, upsampled, k, self.cfg.bbcvRadius)
                       for k, S0k, S1k in zip(BLOCK_INDICES, self.block_embed(S0), self.block_embed(S1))]
        matching = self.matching_features(costVolumes, upsampled.toOne)

        warped0 = backward_warp(S0, upsampled.toZero)
        warped1 = backward_warp(S1, upsampled.toOne)
        residual = self.predict_residual(ops.concat([warped0, warped1, matching, upsampled.toOne.data], axis=0))

        toOne = MotionField(ops.add(upsampled.toOne.data, residual), upsampled.scale, Endpoint.T_TO_1)
        log.debug('%s: refined to 1/%d at %dx%d', self.name, upsampled.scale, 2 * H, 2 * W)
        return RefinementOutput(BilateralPair.from_toOne(toOne), upsampled, residual, costVolumes)

    def zero_decoder(self) -> None:
        """Zeroes the last decoder conv so the residual vanishes."""
        self.decoder.convs[-1].zero_parameters()
