import logging

import numpy as np

from typing import NamedTuple, Union

from Models.Tensors import Tensor, ParamStore, as_tensor, set_defaultDtype
from Models.Fields import BilateralPair, MotionField
from Models.Configs import PipelineConfig
from Models.Estimators import BiFormer
from Models.Upsamplers import MotionUpsampler
from Models.Synthesizers import FrameSynthesizer
from Methods import TensorOps as ops
from Utilities.Numeric import get_paddedSize
from Utilities.StageTracker import StageTracker
from Utilities.Exceptions import ShapeMismatchError

log = logging.getLogger(__name__)

# Global stage needs stride 8; the k = 2 block embedding of the 1/4 pass needs that grid divisible by 4.
PAD_MULTIPLE = 16
MIN_SIZE = 32

Frame = Union[Tensor, np.ndarray]


class InterpolationResult(NamedTuple):
    frame: Tensor
    pair: BilateralPair
    globalPair: BilateralPair
    tracker: StageTracker


def pad_frame(frame: np.ndarray, multiple: int = PAD_MULTIPLE) -> np.ndarray:
    """Edge-pads the bottom and right of a CxHxW frame up to a multiple of the given size."""
    _, H, W = frame.shape
    return np.pad(frame, ((0, 0), (0, get_paddedSize(H, multiple) - H), (0, get_paddedSize(W, multiple) - W)), mode='edge')


class BiMotionPipeline:
    """Global bilateral estimation at 1/8, two recurrent refinement passes (1/4, 1/2) sharing one upsampler, then synthesis at full resolution."""

    def __init__(self, cfg: PipelineConfig = None, store: ParamStore = None):
        self.cfg = cfg if cfg is not None else PipelineConfig()
        set_defaultDtype(self.cfg.dtype)
        self.store = store if store is not None else ParamStore(self.cfg.seed)
        self.biformer = BiFormer(self.store, 'biformer', self.cfg)
        self.upsampler = MotionUpsampler(self.store, 'upsampler', self.cfg.upsampler)
        self.synthesizer = FrameSynthesizer(self.store, 'synthesis', self.cfg.synthesis)

    def get_parameterCounts(self) -> dict:
        return {prefix: self.store.count(prefix + '.') for prefix in ('biformer', 'upsampler', 'synthesis')}

    def estimate_global(self, I0: Tensor, I1: Tensor) -> BilateralPair:
        return self.biformer(I0, I1).pair

    def refine(self, pair: BilateralPair, I0: Tensor, I1: Tensor, tracker: StageTracker = None) -> BilateralPair:
        """Both refinement passes with the same upsampler; frames are area-downsampled to each pass's output scale."""
        for scale in self.cfg.refineScales:
            pair = self.upsampler.refine_pass(pair, ops.area_downsample(I0, scale), ops.area_downsample(I1, scale)).pair
            if tracker is not None:
                tracker.trackStage('refine_1/{0}'.format(scale), pair)
        return pair

    def forward_padded(self, I0: Tensor, I1: Tensor) -> InterpolationResult:
        """Frames must already have sides divisible by PAD_MULTIPLE."""
        tracker = StageTracker()
        globalPair = tracker.trackStage('global_1/{0}'.format(self.cfg.globalScale), self.estimate_global(I0, I1))
        pair = self.refine(globalPair, I0, I1, tracker)
        frame = self.synthesizer(I0, I1, pair)
        return InterpolationResult(frame, pair, globalPair, tracker)

    def interpolate(self, I0: Frame, I1: Frame) -> InterpolationResult:
        """Mid frame of two equal-size CxHxW frames (sides >= 32). Pads to a multiple of PAD_MULTIPLE and crops the frame and fields back."""
        I0 = np.asarray(I0.data if isinstance(I0, Tensor) else I0)
        I1 = np.asarray(I1.data if isinstance(I1, Tensor) else I1)
        if I0.shape != I1.shape or I0.ndim != 3:
            raise ShapeMismatchError('interpolate', [I0.shape, I1.shape], 'frames must be equal-size CxHxW arrays')
        _, H, W = I0.shape
        if H < MIN_SIZE or W < MIN_SIZE:
            raise ShapeMismatchError('interpolate', [I0.shape], 'frame sides must be at least {0}'.format(MIN_SIZE))

        result = self.forward_padded(as_tensor(pad_frame(I0)), as_tensor(pad_frame(I1)))
        frame = ops.crop(result.frame, (slice(None), slice(0, H), slice(0, W)))
        fieldCrop = (slice(None), slice(0, (H + 1) // 2), slice(0, (W + 1) // 2))
        toOne = MotionField(ops.crop(result.pair.toOne.data, fieldCrop), result.pair.scale, result.pair.toOne.endpoint)
        log.info('TimeNotification: Interpolated %dx%d frame pair through %d stages', H, W, len(result.tracker))
        return InterpolationResult(frame, BilateralPair.from_toOne(toOne), result.globalPair, result.tracker)

