import threading
import logging

import numpy as np

from collections import OrderedDict
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, List, Tuple, Union

from Utilities.Exceptions import ShapeMismatchError

log = logging.getLogger(__name__)

_dtypeState = {'dtype': np.float32}
_gradState = threading.local()
_gradientFaults: Dict[str, float] = {}


def set_defaultDtype(dtype: Union[str, type]) -> None:
    """Selects the scalar type new tensors are created with (float32 for pipeline runs, float64 for gradient checks)."""
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError('Scalar type must be float32 or float64, got {0}'.format(dtype))
    _dtypeState['dtype'] = dtype.type


def get_defaultDtype() -> type:
    return _dtypeState['dtype']


@contextmanager
def defaultDtype(dtype: Union[str, type]):
    previous = get_defaultDtype()
    set_defaultDtype(dtype)
    try:
        yield
    finally:
        set_defaultDtype(previous)


def isGradEnabled() -> bool:
    return getattr(_gradState, 'enabled', True)


@contextmanager
def gradientsDisabled():
    """Ops run inside this context record no graph; outputs never require gradients."""
    previous = isGradEnabled()
    _gradState.enabled = False
    try:
        yield
    finally:
        _gradState.enabled = previous


@contextmanager
def gradientFault(opName: str, bias: float = 0.1):
    """Scales every gradient leaving the backward rule of opName by (1 + bias). Negative control for gradient checks."""
    _gradientFaults[opName] = bias
    try:
        yield
    finally:
        _gradientFaults.pop(opName, None)


class Tensor:
    """Dense array with an optional gradient slot. Tensors produced by ops keep references to their parents and a backward rule."""

    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, parents: Tuple['Tensor', ...] = (), backwardFcn: Callable = None,
                 opName: str = 'leaf', name: str = None):
        array = np.asarray(data)
        if not parents or array.dtype not in (np.float32, np.float64):
            array = array.astype(get_defaultDtype(), copy=False)
        self.data: np.ndarray = array
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray = None
        self.name = name

        self._parents = parents
        self._backwardFcn = backwardFcn
        self._opName = opName

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatchError('item', [self.shape], 'only single-element tensors convert to a float')
        return float(self.data.reshape(-1)[0])

    def detach(self) -> 'Tensor':
        return Tensor(self.data, requires_grad=False, opName='detach')

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray = None) -> None:
        """Reverse-mode sweep over the graph reachable from this tensor. Gradients are added into the grad slots of every tensor that requires them."""
        if not self.requires_grad:
            return
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatchError('backward', [self.shape], 'implicit gradient is only defined for scalar outputs')
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=self.data.dtype)
        if grad.shape != self.shape:
            raise ShapeMismatchError('backward', [self.shape, grad.shape])

        topo = self._build_topo()
        pending = {id(self): grad}
        for node in reversed(topo):
            nodeGrad = pending.pop(id(node), None)
            if nodeGrad is None:
                continue
            if node.grad is None:
                node.grad = np.array(nodeGrad, dtype=node.data.dtype, copy=True)
            else:
                node.grad = node.grad + nodeGrad
            if node._backwardFcn is None:
                continue
            parentGrads = node._backwardFcn(nodeGrad)
            faultBias = _gradientFaults.get(node._opName)
            for parent, parentGrad in zip(node._parents, parentGrads):
                if parentGrad is None or not parent.requires_grad:
                    continue
                if faultBias is not None:
                    parentGrad = parentGrad * (1 + faultBias)
                if id(parent) in pending:
                    pending[id(parent)] = pending[id(parent)] + parentGrad
                else:
                    pending[id(parent)] = parentGrad

    def _build_topo(self) -> List['Tensor']:
        visited = set()
        topo = []
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return topo

    # Operator overloads delegate to Methods.TensorOps
    def __add__(self, other):
        from Methods import TensorOps
        return TensorOps.add(self, other)

    def __radd__(self, other):
        from Methods import TensorOps
        return TensorOps.add(other, self)

    def __sub__(self, other):
        from Methods import TensorOps
        return TensorOps.sub(self, other)

    def __rsub__(self, other):
        from Methods import TensorOps
        return TensorOps.sub(other, self)

    def __mul__(self, other):
        from Methods import TensorOps
        return TensorOps.mul(self, other)

    def __rmul__(self, other):
        from Methods import TensorOps
        return TensorOps.mul(other, self)

    def __truediv__(self, other):
        from Methods import TensorOps
        return TensorOps.div(self, other)

    def __neg__(self):
        from Methods import TensorOps
        return TensorOps.neg(self)

    def __matmul__(self, other):
        from Methods import TensorOps
        return TensorOps.matmul(self, other)

    def __pow__(self, exponent: float):
        from Methods import TensorOps
        return TensorOps.power(self, exponent)

    def __repr__(self):
        return 'Tensor(shape={0}, dtype={1}, requires_grad={2}, op={3})'.format(self.shape, self.dtype, self.requires_grad, self._opName)


class ParamStore:
    """Named parameter tensors in insertion order. Names are hierarchical and dot-separated, e.g. 'biformer.head.conv0.weight'."""

    def __init__(self, seed: int = 0):
        self._params: 'OrderedDict[str, Tensor]' = OrderedDict()
        self.rng = np.random.default_rng(seed)

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError('ParamStore: Parameter name {0} is already registered.'.format(name))
        tensor = Tensor(np.array(data, dtype=get_defaultDtype()), requires_grad=True, name=name)
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self, prefix: str = '') -> List[str]:
        return [name for name in self._params if name.startswith(prefix)]

    def tensors(self, prefix: str = '') -> List[Tensor]:
        return [tensor for name, tensor in self._params.items() if name.startswith(prefix)]

    def count(self, prefix: str = '') -> int:
        return sum(tensor.size for tensor in self.tensors(prefix))

    def zero_grad(self, prefix: str = '') -> None:
        for tensor in self.tensors(prefix):
            tensor.zero_grad()

    def set_frozen(self, prefix: str, frozen: bool = True) -> None:
        for tensor in self.tensors(prefix):
            tensor.requires_grad = not frozen

    def assign(self, name: str, data: np.ndarray) -> None:
        """Overwrites the values of a registered parameter in place, keeping tensor identity."""
        tensor = self._params[name]
        data = np.asarray(data)
        if data.shape != tensor.shape:
            raise ShapeMismatchError('ParamStore.assign', [tensor.shape, data.shape], name)
        tensor.data[...] = data

    def get_asDict(self) -> 'OrderedDict[str, np.ndarray]':
        return OrderedDict((name, tensor.data) for name, tensor in self._params.items())

    def load_fromDict(self, arrays: Dict[str, np.ndarray], strict: bool = True) -> List[str]:
        """Copies arrays into registered parameters. Returns names present in the store but absent from arrays."""
        missing = [name for name in self._params if name not in arrays]
        unexpected = [name for name in arrays if name not in self._params]
        if strict and (missing or unexpected):
            raise KeyError('ParamStore: missing {0}, unexpected {1}'.format(missing, unexpected))
        for name, array in arrays.items():
            if name in self._params:
                self.assign(name, array)
        if unexpected:
            log.warning('DataWarning: Ignoring %d unknown parameters: %s', len(unexpected), unexpected[:5])
        return missing

    def snapshot(self, prefix: str = '') -> Dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self._params.items() if name.startswith(prefix)}


def as_tensor(value, requires_grad: bool = False) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=get_defaultDtype()), requires_grad=requires_grad)
