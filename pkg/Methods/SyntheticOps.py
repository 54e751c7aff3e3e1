import numpy as np

from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

from scipy.ndimage import gaussian_filter, map_coordinates

from Models.Tensors import get_defaultDtype


@dataclass
class SyntheticSample:
    """Triplet (I0, Igt, I1) of 3xHxW frames in [0, 1] under a global translation. shift is the total I0 -> I1 motion (dx, dy)
    at full resolution; the ground-truth bilateral field is V_t->1 = +shift/2 everywhere, V_t->0 = -shift/2."""
    I0: np.ndarray
    Igt: np.ndarray
    I1: np.ndarray
    flowToOne: np.ndarray

    @property
    def size(self) -> Tuple[int, int]:
        return self.Igt.shape[1:]

    def get_flowToOne(self, scale: int = 1) -> np.ndarray:
        """Ground-truth V_t->1 at 1/scale, in pixels of that scale."""
        if scale == 1:
            return self.flowToOne
        C, H, W = self.flowToOne.shape
        blocks = self.flowToOne.reshape(C, H // scale, scale, W // scale, scale).mean(axis=(2, 4))
        return blocks / scale

    def get_frames(self) -> List[np.ndarray]:
        return [self.I0, self.Igt, self.I1]


def make_texture(rng: np.random.Generator, H: int, W: int, channels: int = 3, sigma: float = 2.0, squares: int = 3) -> np.ndarray:
    """Gaussian-filtered noise normalized to [0, 1] per channel, with a few solid squares for sharp boundaries."""
    noise = rng.standard_normal((channels, H, W))
    texture = np.stack([gaussian_filter(noise[c], sigma, mode='reflect') for c in range(channels)])
    low = texture.min(axis=(1, 2), keepdims=True)
    high = texture.max(axis=(1, 2), keepdims=True)
    texture = (texture - low) / np.maximum(high - low, 1e-12)
    for _ in range(squares):
        side = int(rng.integers(max(2, min(H, W) // 8), max(3, min(H, W) // 3)))
        top = int(rng.integers(0, H - side))
        left = int(rng.integers(0, W - side))
        texture[:, top:top + side, left:left + side] = rng.uniform(0, 1, size=(channels, 1, 1))
    return texture


def translate(texture: np.ndarray, dx: float, dy: float, margin: int, H: int, W: int) -> np.ndarray:
    """Crop of the texture whose content is displaced by (dx, dy): out(y, x) = texture(y - dy + margin, x - dx + margin)."""
    ys, xs = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing='ij')
    coordinates = np.stack([ys - dy + margin, xs - dx + margin])
    return np.stack([map_coordinates(channel, coordinates, order=1, mode='reflect') for channel in texture])


def make_sample(rng: np.random.Generator, size: int, maxShift: float = 8.0, static: bool = False) -> SyntheticSample:
    margin = int(np.ceil(maxShift / 2)) + 2
    texture = make_texture(rng, size + 2 * margin, size + 2 * margin)
    if static:
        dx = dy = 0.0
    else:
        dx, dy = rng.uniform(-maxShift, maxShift, size=2)
    dtype = get_defaultDtype()
    Igt = translate(texture, 0.0, 0.0, margin, size, size)
    I0 = translate(texture, -dx / 2, -dy / 2, margin, size, size)
    I1 = translate(texture, dx / 2, dy / 2, margin, size, size)
    flowToOne = np.stack([np.full((size, size), dx / 2), np.full((size, size), dy / 2)])
    return SyntheticSample(I0.astype(dtype), Igt.astype(dtype), I1.astype(dtype), flowToOne.astype(dtype))


def augment_sample(sample: SyntheticSample, rng: np.random.Generator) -> SyntheticSample:
    """Random horizontal/vertical flip, 90-degree rotation and temporal order reversal, with the ground-truth field transformed to match."""
    frames = sample.get_frames()
    flow = sample.flowToOne.copy()
    if rng.random() < 0.5:
        frames = [frame[:, :, ::-1] for frame in frames]
        flow = flow[:, :, ::-1] * np.array([-1, 1]).reshape(2, 1, 1)
    if rng.random() < 0.5:
        frames = [frame[:, ::-1, :] for frame in frames]
        flow = flow[:, ::-1, :] * np.array([1, -1]).reshape(2, 1, 1)
    turns = int(rng.integers(0, 4))
    for _ in range(turns):
        frames = [np.rot90(frame, 1, axes=(1, 2)) for frame in frames]
        rotated = np.rot90(flow, 1, axes=(1, 2))
        flow = np.stack([rotated[1], -rotated[0]])
    if rng.random() < 0.5:
        frames = frames[::-1]
        flow = -flow
    I0, Igt, I1 = (np.ascontiguousarray(frame) for frame in frames)
    return replace(sample, I0=I0, Igt=Igt, I1=I1, flowToOne=np.ascontiguousarray(flow, dtype=sample.flowToOne.dtype))


class SyntheticDataset:
    """Deterministic translation triplets: sample i depends only on (seed, i, size)."""

    def __init__(self, seed: int = 0, size: int = 64, maxShift: float = 8.0, static: bool = False, augment: bool = False, count: int = None):
        self.seed = seed
        self.size = size
        self.maxShift = maxShift
        self.static = static
        self.augment = augment
        self.count = count

    def get_sample(self, index: int, size: int = None) -> SyntheticSample:
        rng = np.random.default_rng([self.seed, index])
        sample = make_sample(rng, size if size is not None else self.size, self.maxShift, self.static)
        if self.augment:
            sample = augment_sample(sample, rng)
        return sample

    def get_batch(self, indices: Sequence[int], size: int = None) -> List[SyntheticSample]:
        return [self.get_sample(index, size) for index in indices]

    def __len__(self):
        if self.count is None:
            raise TypeError('SyntheticDataset without count is unbounded')
        return self.count

    def __getitem__(self, index: int) -> SyntheticSample:
        if self.count is not None and not 0 <= index < self.count:
            raise IndexError(index)
        return self.get_sample(index)
