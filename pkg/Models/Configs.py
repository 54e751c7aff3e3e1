from dataclasses import dataclass, field, fields, is_dataclass
from typing import List

from Utilities.Exceptions import ConfigError


def _require(condition: bool, message: str):
    if not condition:
        raise ConfigError('ConfigError: ' + message)


@dataclass
class EncoderConfig:
    """Stride-8 global encoder: one stride-2 patch embedding plus one windowed self-attention block per stage."""
    widths: List[int] = field(default_factory=lambda: [32, 64, 96])
    blocksPerStage: int = 1
    heads: int = 4
    windowSize: int = 4
    mlpRatio: float = 2.0

    def __post_init__(self):
        _require(len(self.widths) == 3, 'encoder needs exactly 3 stages (2*2*2 = stride 8), got {0}'.format(self.widths))
        _require(all(width % self.heads == 0 for width in self.widths), 'encoder widths must be divisible by heads')
        _require(self.blocksPerStage >= 0, 'blocksPerStage must be non-negative')

    @property
    def stride(self) -> int:
        return 2 ** len(self.widths)


@dataclass
class AttentionConfig:
    channels: int = 96
    heads: int = 4
    radius: int = 4
    windowSize: int = 4
    mlpRatio: float = 2.0
    scaleLogits: bool = True
    useBCANoAnchor: bool = True
    useBCAAnchorFirst: bool = True
    useBCAAnchorSecond: bool = True
    seedProjection: bool = True

    def __post_init__(self):
        _require(self.channels % self.heads == 0, 'channels {0} not divisible by heads {1}'.format(self.channels, self.heads))
        _require(self.radius >= 0 and self.windowSize > 0, 'window radius must be >= 0 and window size > 0')

    @property
    def headChannels(self) -> int:
        return self.channels // self.heads


@dataclass
class UpsamplerConfig:
    shallowChannels: int = 32
    bbcvRadius: int = 2
    matchingChannels: int = 32
    decoderWidths: List[int] = field(default_factory=lambda: [96, 96, 64])

    def __post_init__(self):
        _require(self.bbcvRadius >= 0, 'bbcvRadius must be non-negative')
        _require(len(self.decoderWidths) == 3, 'decoder takes 3 hidden widths before the sub-pixel layer')


@dataclass
class SynthesisConfig:
    widths: List[int] = field(default_factory=lambda: [32, 64, 96])
    feedWarpedFrames: bool = False

    def __post_init__(self):
        _require(len(self.widths) == 3, 'synthesis uses exactly 3 levels')


@dataclass
class LossConfig:
    alpha: float = 0.5
    eps: float = 1e-3
    censusPatch: int = 7
    censusSquash: float = 0.81
    censusThreshold: float = 0.1
    intensityScale: float = 255.0

    def __post_init__(self):
        _require(self.alpha > 0 and self.eps > 0, 'Charbonnier alpha and eps must be positive')
        _require(self.censusPatch % 2 == 1 and self.censusPatch > 0, 'census patch size must be odd')


@dataclass
class TrainingConfig:
    learningRate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adamEps: float = 1e-8
    halveAfter: int = 100000
    halveEvery: int = 50000
    batchSize: int = 1
    imageSize: int = 64
    maxShift: float = 8.0
    refineSizes: List[int] = field(default_factory=lambda: [48, 64])
    augment: bool = True
    prefetch: int = 4

    def __post_init__(self):
        _require(self.learningRate > 0, 'learning rate must be positive')
        _require(0 <= self.beta1 < 1 and 0 <= self.beta2 < 1, 'moment decays must lie in [0, 1)')
        _require(self.batchSize >= 1, 'batch size must be >= 1')
        _require(self.imageSize % 16 == 0 and self.imageSize >= 32, 'training image size must be a multiple of 16 and >= 32')
        _require(all(size % 16 == 0 and size >= 32 for size in self.refineSizes), 'refine sizes must be multiples of 16 and >= 32')


@dataclass
class PipelineConfig:
    """Whole-pipeline configuration. The scale chain is fixed at 1/8 -> 1/4 -> 1/2 -> 1 and t at 1/2."""
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    attention: AttentionConfig = field(default_factory=AttentionConfig)
    upsampler: UpsamplerConfig = field(default_factory=UpsamplerConfig)
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    globalScale: int = 8
    refineScales: List[int] = field(default_factory=lambda: [4, 2])
    t: float = 0.5
    costVolumeNormalization: str = 'sqrt'
    seed: int = 0
    dtype: str = 'float32'

    def __post_init__(self):
        self.validate()

    def validate(self):
        _require(self.globalScale == 8 and list(self.refineScales) == [4, 2], 'scale chain must be 1/8 -> 1/4 -> 1/2')
        _require(self.t == 0.5, 'only t = 1/2 is supported')
        _require(self.encoder.widths[-1] == self.attention.channels, 'last encoder width must equal attention channels')
        _require(self.costVolumeNormalization in ('sqrt', 'none'), 'costVolumeNormalization must be "sqrt" or "none"')
        _require(self.dtype in ('float32', 'float64'), 'dtype must be float32 or float64')
        for child in (self.encoder, self.attention, self.upsampler, self.synthesis, self.loss, self.training):
            child.__post_init__()

    @property
    def globalRadius(self) -> int:
        return self.attention.radius

    @property
    def bbcvRadius(self) -> int:
        return self.upsampler.bbcvRadius


def get_fieldAddresses(config, prefix: str = '') -> List[str]:
    """Dotted addresses of every leaf field in a (nested) config dataclass, e.g. 'attention.heads'."""
    addresses = []
    for configField in fields(config):
        value = getattr(config, configField.name)
        address = prefix + configField.name
        if is_dataclass(value):
            addresses += get_fieldAddresses(value, address + '.')
        else:
            addresses.append(address)
    return addresses


def get_toyConfig(**overrides) -> PipelineConfig:
    """Small widths for unit tests and quick runs."""
    config = PipelineConfig(encoder=EncoderConfig(widths=[8, 8, 16], heads=2, windowSize=2),
                            attention=AttentionConfig(channels=16, heads=2, radius=2, windowSize=2),
                            upsampler=UpsamplerConfig(shallowChannels=8, matchingChannels=8, decoderWidths=[16, 16, 8]),
                            synthesis=SynthesisConfig(widths=[8, 8, 16]))
    for name, value in overrides.items():
        setattr(config, name, value)
    config.validate()
    return config
