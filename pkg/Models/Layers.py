import numpy as np

from scipy.stats import truncnorm
from typing import List, Tuple

from Models.Tensors import Tensor, ParamStore
from Methods import TensorOps as ops


def init_truncatedNormal(store: ParamStore, shape: Tuple[int, ...], std: float = 0.02) -> np.ndarray:
    return truncnorm.rvs(-2, 2, loc=0, scale=std, size=shape, random_state=store.rng)


def init_kaiming(store: ParamStore, shape: Tuple[int, ...]) -> np.ndarray:
    fanIn = int(np.prod(shape[1:]))
    return store.rng.normal(0, np.sqrt(2.0 / fanIn), size=shape)


class Layer:
    """Base for learnable blocks. Parameters are registered in a shared ParamStore under '<name>.<param>'."""

    def __init__(self, store: ParamStore, name: str):
        self.store = store
        self.name = name

    def add_param(self, paramName: str, data: np.ndarray) -> Tensor:
        return self.store.add('{0}.{1}'.format(self.name, paramName), data)

    def child(self, childName: str) -> str:
        return '{0}.{1}'.format(self.name, childName)

    @property
    def parameters(self) -> List[Tensor]:
        return self.store.tensors(self.name + '.')

    def count_parameters(self) -> int:
        return self.store.count(self.name + '.')

    def zero_parameters(self) -> None:
        for paramName in self.store.names(self.name + '.'):
            self.store.assign(paramName, np.zeros(self.store[paramName].shape))

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class Conv2d(Layer):
    def __init__(self, store: ParamStore, name: str, inChannels: int, outChannels: int, kernelSize: int = 3, stride: int = 1,
                 padding: int = None, bias: bool = True):
        super(Conv2d, self).__init__(store, name)
        self.stride = stride
        self.padding = kernelSize // 2 if padding is None else padding
        self.weight = self.add_param('weight', init_kaiming(store, (outChannels, inChannels, kernelSize, kernelSize)))
        self.bias = self.add_param('bias', np.zeros(outChannels)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class Linear(Layer):
    """Acts on the last axis: y = x W + b."""

    def __init__(self, store: ParamStore, name: str, inFeatures: int, outFeatures: int, bias: bool = True):
        super(Linear, self).__init__(store, name)
        self.weight = self.add_param('weight', init_truncatedNormal(store, (inFeatures, outFeatures)))
        self.bias = self.add_param('bias', np.zeros(outFeatures)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        y = ops.matmul(x, self.weight)
        return ops.add(y, self.bias) if self.bias is not None else y


class LayerNorm(Layer):
    def __init__(self, store: ParamStore, name: str, features: int, eps: float = 1e-5):
        super(LayerNorm, self).__init__(store, name)
        self.eps = eps
        self.weight = self.add_param('weight', np.ones(features))
        self.bias = self.add_param('bias', np.zeros(features))

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.weight, self.bias, axis=-1, eps=self.eps)


class MLP(Layer):
    def __init__(self, store: ParamStore, name: str, features: int, ratio: float = 2.0):
        super(MLP, self).__init__(store, name)
        hidden = max(1, int(round(features * ratio)))
        self.fc1 = Linear(store, self.child('fc1'), features, hidden)
        self.fc2 = Linear(store, self.child('fc2'), hidden, features)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(ops.gelu(self.fc1(x)))


class ConvStack(Layer):
    """3x3 convolutions with ReLU between them and no activation after the last."""

    def __init__(self, store: ParamStore, name: str, channels: List[int], firstStride: int = 1, lastBias: bool = True):
        super(ConvStack, self).__init__(store, name)
        self.convs = []
        for index, (inChannels, outChannels) in enumerate(zip(channels[:-1], channels[1:])):
            isLast = index == len(channels) - 2
            self.convs.append(Conv2d(store, self.child('conv{0}'.format(index)), inChannels, outChannels, 3,
                                     stride=firstStride if index == 0 else 1, bias=lastBias or not isLast))

    def forward(self, x: Tensor) -> Tensor:
        for index, conv in enumerate(self.convs):
            x = conv(x)
            if index < len(self.convs) - 1:
                x = ops.relu(x)
        return x


def to_tokens(x: Tensor) -> Tensor:
    """CxHxW -> HxWxC."""
    return ops.permute(x, (1, 2, 0))


def from_tokens(x: Tensor) -> Tensor:
    """HxWxC -> CxHxW."""
    return ops.permute(x, (2, 0, 1))
