import logging

import numpy as np

from contextlib import nullcontext
from typing import Callable, Dict, List, NamedTuple, Sequence

from pandas import DataFrame

from Models.Tensors import Tensor, ParamStore, gradientsDisabled, defaultDtype, gradientFault
from Models.Fields import MotionField, BilateralPair, DisplacementWindow, Endpoint
from Models.Configs import AttentionConfig, UpsamplerConfig, SynthesisConfig, LossConfig, EncoderConfig
from Models.Layers import Conv2d
from Models.Attentions import BCANoAnchorBlock, BCAAnchorBlock, SwinBlock
from Models.Estimators import GlobalEncoder
from Models.Upsamplers import MotionUpsampler
from Models.Synthesizers import FrameSynthesizer
from Methods import TensorOps as ops
from Methods.WarpOps import backward_warp, forward_warp, rescale_field
from Methods.CostVolumeOps import bilateral_correlation, bbcv
from Methods.LossOps import charbonnier, census_loss, photometric_loss, synthesis_loss
from Utilities.Numeric import get_maxRelativeError, isFinite
from Utilities.Exceptions import NonFiniteError, GradientCheckError

log = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-4


def finite_difference_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-4, maxCoordinates: int = None,
                            rng: np.random.Generator = None, zeroTolerance: float = 1e-10) -> float:
    """Max relative error between the backward-pass gradient of scalar f at x and central differences.
    maxCoordinates limits the check to a random subset of coordinates."""
    x.zero_grad()
    x.requires_grad = True
    out = f(x)
    if out.size != 1 or not isFinite(out.data):
        raise NonFiniteError('finite_difference_check')
    out.backward()
    analytic = x.grad.copy() if x.grad is not None else np.zeros_like(x.data)

    flat = x.data.reshape(-1)
    coordinates = np.arange(flat.size)
    if maxCoordinates is not None and flat.size > maxCoordinates:
        rng = rng if rng is not None else np.random.default_rng(0)
        coordinates = np.sort(rng.choice(flat.size, size=maxCoordinates, replace=False))

    numeric = np.zeros(len(coordinates))
    with gradientsDisabled():
        for i, coordinate in enumerate(coordinates):
            original = flat[coordinate]
            flat[coordinate] = original + eps
            plus = f(x).item()
            flat[coordinate] = original - eps
            minus = f(x).item()
            flat[coordinate] = original
            if not (np.isfinite(plus) and np.isfinite(minus)):
                raise NonFiniteError('finite_difference_check')
            numeric[i] = (plus - minus) / (2 * eps)
    return get_maxRelativeError(analytic.reshape(-1)[coordinates], numeric, zeroTolerance)


def readout(rng: np.random.Generator, shape) -> Callable[[Tensor], Tensor]:
    """Scalar sum(y * P) with a fixed random projection P."""
    projection = rng.standard_normal(shape)
    return lambda y: ops.sum(ops.mul(y, projection))


def random_tensor(rng: np.random.Generator, shape, low: float = -1.0, high: float = 1.0) -> Tensor:
    return Tensor(rng.uniform(low, high, size=shape))


def off_grid_flow(rng: np.random.Generator, H: int, W: int, maxInteger: int = 2) -> np.ndarray:
    """Flow whose fractional parts stay in [0.2, 0.8], away from bilinear kinks."""
    return rng.integers(-maxInteger, maxInteger + 1, size=(2, H, W)) + rng.uniform(0.2, 0.8, size=(2, H, W))


def constant_flow(rng: np.random.Generator, H: int, W: int, low: float, high: float) -> np.ndarray:
    """Spatially constant flow; resizing and halving keep it constant, so the fractional offsets stay controlled at every scale."""
    return np.broadcast_to(rng.uniform(low, high, size=(2, 1, 1)), (2, H, W)).copy()


def _pair(flow: Tensor, scale: int = 1) -> BilateralPair:
    return BilateralPair.from_toOne(MotionField(flow, scale, Endpoint.T_TO_1))


class GradientCheck(NamedTuple):
    name: str
    module: str
    run: Callable[[np.random.Generator], float]
    tolerance: float = DEFAULT_TOLERANCE


# Each check builds its inputs from rng and returns the max relative error of one finite_difference_check.

def _check_elementwise(rng):
    a, b = random_tensor(rng, (3, 4)), random_tensor(rng, (3, 4), 0.5, 1.5)
    r = readout(rng, (3, 4))
    return max(finite_difference_check(lambda x: r(ops.div(ops.mul(ops.add(x, b), ops.sub(x, b)), b)), a),
               finite_difference_check(lambda x: r(ops.gelu(ops.exp(ops.mul(x, 0.5)))), a),
               finite_difference_check(lambda x: r(ops.power(x, 1.5)), b))


def _check_matmul(rng):
    a, b = random_tensor(rng, (2, 3, 4)), random_tensor(rng, (4, 5))
    r = readout(rng, (2, 3, 5))
    return max(finite_difference_check(lambda x: r(ops.matmul(x, b)), a), finite_difference_check(lambda x: r(ops.matmul(a, x)), b))


def _check_conv2d(rng):
    image, weight, bias = random_tensor(rng, (2, 6, 7)), random_tensor(rng, (3, 2, 3, 3)), random_tensor(rng, (3,))
    r = readout(rng, (3, 3, 4))
    return max(finite_difference_check(lambda x: r(ops.conv2d(x, weight, bias, stride=2, padding=1)), image),
               finite_difference_check(lambda x: r(ops.conv2d(image, x, bias, stride=2, padding=1)), weight),
               finite_difference_check(lambda x: r(ops.conv2d(image, weight, x, stride=2, padding=1)), bias))


def _check_softmax(rng):
    logits = random_tensor(rng, (2, 5, 3), -2, 2)
    mask = rng.random((2, 5, 3)) > 0.3
    r = readout(rng, (2, 5, 3))
    return finite_difference_check(lambda x: r(ops.softmax(x, axis=1, mask=mask)), logits)


def _check_layer_norm(rng):
    x0, w, b = random_tensor(rng, (4, 6)), random_tensor(rng, (6,)), random_tensor(rng, (6,))
    r = readout(rng, (4, 6))
    return max(finite_difference_check(lambda x: r(ops.layer_norm(x, w, b)), x0),
               finite_difference_check(lambda x: r(ops.layer_norm(x0, x, b)), w))


def _check_resampling(rng):
    x0 = random_tensor(rng, (2, 4, 6))
    r1, r2, r3 = readout(rng, (2, 8, 12)), readout(rng, (2, 2, 3)), readout(rng, (2, 4, 6))
    table = random_tensor(rng, (5, 3))
    r4 = readout(rng, (7, 3))
    return max(finite_difference_check(lambda x: r1(ops.bilinear_resize(x, 8, 12)), x0),
               finite_difference_check(lambda x: r2(ops.area_downsample(x, 2)), x0),
               finite_difference_check(lambda x: r3(ops.pixel_shuffle(ops.reshape(x, (8, 2, 3)), 2)), random_tensor(rng, (2, 4, 2, 3))),
               finite_difference_check(lambda x: r4(ops.gather(x, [0, 2, 2, 4, 1, 0, 3])), table))


def _check_window_ops(rng):
    a, b = random_tensor(rng, (2, 3, 5, 5)), random_tensor(rng, (2, 3, 5, 5))
    window = DisplacementWindow(1)
    weights = random_tensor(rng, (2, window.size, 5, 5))
    r1, r2 = readout(rng, (2, window.size, 5, 5)), readout(rng, (2, 3, 5, 5))
    return max(finite_difference_check(lambda x: r1(ops.window_dot(x, b, window.offsets, -1, 1)), a),
               finite_difference_check(lambda x: r1(ops.window_dot(a, x, window.offsets, 0, 1)), b),
               finite_difference_check(lambda x: r2(ops.window_aggregate(x, b, window.offsets, -1)), weights),
               finite_difference_check(lambda x: r2(ops.window_aggregate(weights, x, window.offsets, 1)), b))


def _check_backward_warp(rng):
    source, flow = random_tensor(rng, (2, 6, 6)), Tensor(off_grid_flow(rng, 6, 6))
    r = readout(rng, (2, 6, 6))
    return max(finite_difference_check(lambda x: r(backward_warp(x, flow)), source),
               finite_difference_check(lambda x: r(backward_warp(source, x)), flow))


def _check_forward_warp(rng):
    source, flow = random_tensor(rng, (2, 6, 6)), Tensor(off_grid_flow(rng, 6, 6))
    r1, r2 = readout(rng, (2, 6, 6)), readout(rng, (1, 6, 6))

    def f(x, s):
        accumulated, weights = forward_warp(s, x)
        return ops.add(r1(accumulated), r2(weights))
    return max(finite_difference_check(lambda x: f(flow, x), source), finite_difference_check(lambda x: f(x, source), flow))


def _check_rescale(rng):
    flow = random_tensor(rng, (2, 4, 6))
    r1, r2 = readout(rng, (2, 8, 12)), readout(rng, (2, 2, 3))
    return max(finite_difference_check(lambda x: r1(rescale_field(MotionField(x, 4), 2).data), flow),
               finite_difference_check(lambda x: r2(rescale_field(MotionField(x, 4), 0.5).data), flow))


def _check_bilateral_correlation(rng):
    F0, F1 = random_tensor(rng, (3, 5, 5)), random_tensor(rng, (3, 5, 5))
    r = readout(rng, (5, 5, 25))
    return max(finite_difference_check(lambda x: r(bilateral_correlation(x, F1, 2).data), F0),
               finite_difference_check(lambda x: r(bilateral_correlation(F0, x, 2).data), F1))


def _check_bbcv(rng):
    errors = []
    for k in (0, 1, 2):
        S0, S1 = random_tensor(rng, (2, 8 // 2 ** k, 8 // 2 ** k)), random_tensor(rng, (2, 8 // 2 ** k, 8 // 2 ** k))
        flow = Tensor(off_grid_flow(rng, 8, 8))
        r = readout(rng, (8, 8, 9))
        errors += [finite_difference_check(lambda x: r(bbcv(x, S1, _pair(flow), k, 1).data), S0, maxCoordinates=40, rng=rng),
                   finite_difference_check(lambda x: r(bbcv(S0, x, _pair(flow), k, 1).data), S1, maxCoordinates=40, rng=rng),
                   finite_difference_check(lambda x: r(bbcv(S0, S1, _pair(x), k, 1).data), flow, maxCoordinates=40, rng=rng)]
    return max(errors)


def _attentionConfig():
    return AttentionConfig(channels=8, heads=2, radius=1, windowSize=4)


def _randomize(store: ParamStore, rng, std: float = 0.3):
    """Replaces zero-initialized tables so bias gradients are exercised at a generic point."""
    for name, tensor in store.items():
        if not np.any(tensor.data):
            store.assign(name, rng.normal(0, std, size=tensor.shape))


def _check_bca_no_anchor(rng):
    store = ParamStore(int(rng.integers(1 << 30)))
    block = BCANoAnchorBlock(store, 'bca', _attentionConfig())
    _randomize(store, rng)
    F0, F1 = random_tensor(rng, (8, 6, 6)), random_tensor(rng, (8, 6, 6))
    r = readout(rng, (8, 6, 6))
    return max(finite_difference_check(lambda x: r(block(x, F1)), F0, maxCoordinates=40, rng=rng),
               finite_difference_check(lambda x: r(block(F0, F1)), store['bca.positionBias']),
               finite_difference_check(lambda x: r(block(F0, F1)), store['bca.query.weight'], maxCoordinates=40, rng=rng))


def _check_bca_anchor(rng):
    store = ParamStore(int(rng.integers(1 << 30)))
    block = BCAAnchorBlock(store, 'bca', _attentionConfig())
    _randomize(store, rng)
    Z, F0, F1 = (random_tensor(rng, (8, 6, 6)) for _ in range(3))
    r = readout(rng, (8, 6, 6))
    return max(finite_difference_check(lambda x: r(block(x, F0, F1)), Z, maxCoordinates=40, rng=rng),
               finite_difference_check(lambda x: r(block(Z, F0, x)), F1, maxCoordinates=40, rng=rng),
               finite_difference_check(lambda x: r(block(Z, F0, F1)), store['bca.key.weight'], maxCoordinates=40, rng=rng))


def _check_swin(rng):
    store = ParamStore(int(rng.integers(1 << 30)))
    block = SwinBlock(store, 'swin', 8, 2, 4, shifted=True)
    _randomize(store, rng)
    Z = random_tensor(rng, (8, 10, 10))
    r = readout(rng, (8, 10, 10))
    return max(finite_difference_check(lambda x: r(block(x)), Z, maxCoordinates=40, rng=rng),
               finite_difference_check(lambda x: r(block(Z)), store['swin.biasTable'], maxCoordinates=40, rng=rng))


def _check_encoder(rng):
    store = ParamStore(int(rng.integers(1 << 30)))
    encoder = GlobalEncoder(store, 'encoder', EncoderConfig(widths=[4, 4, 8], heads=2, windowSize=2))
    image = random_tensor(rng, (3, 16, 16), 0, 1)
    r = readout(rng, (8, 2, 2))
    return finite_difference_check(lambda x: r(encoder(x).data), image, maxCoordinates=40, rng=rng)


def _check_charbonnier(rng):
    return finite_difference_check(lambda x: charbonnier(x), random_tensor(rng, (2, 4, 4)))


def _check_census(rng):
    A, B = random_tensor(rng, (3, 10, 10), 0, 1), random_tensor(rng, (3, 10, 10), 0, 1)
    return finite_difference_check(lambda x: census_loss(x, B), A, maxCoordinates=60, rng=rng)


def _check_photometric(rng):
    I0, I1, Igt = (random_tensor(rng, (3, 10, 10), 0, 1) for _ in range(3))
    flow = Tensor(off_grid_flow(rng, 10, 10, 1))
    cfg = LossConfig()
    return max(finite_difference_check(lambda x: photometric_loss(Igt, I0, I1, _pair(x), cfg), flow, maxCoordinates=60, rng=rng),
               finite_difference_check(lambda x: photometric_loss(Igt, x, I1, _pair(flow), cfg), I0, maxCoordinates=60, rng=rng))


def _check_synthesis_loss(rng):
    Igt, It = random_tensor(rng, (3, 10, 10), 0, 1), random_tensor(rng, (3, 10, 10), 0, 1)
    return finite_difference_check(lambda x: synthesis_loss(Igt, x), It, maxCoordinates=60, rng=rng)


def _check_upsampler(rng):
    store = ParamStore(int(rng.integers(1 << 30)))
    upsampler = MotionUpsampler(store, 'upsampler', UpsamplerConfig(shallowChannels=4, bbcvRadius=1, matchingChannels=4, decoderWidths=[8, 8, 8]))
    I0, I1 = random_tensor(rng, (3, 16, 16), 0, 1), random_tensor(rng, (3, 16, 16), 0, 1)
    flow = Tensor(constant_flow(rng, 8, 8, 0.1, 0.4))
    r = readout(rng, (2, 16, 16))
    return max(finite_difference_check(lambda x: r(upsampler.refine_pass(_pair(x, 4), I0, I1).pair.toOne.data), flow,
                                       eps=1e-6, maxCoordinates=30, rng=rng),
               finite_difference_check(lambda x: r(upsampler.refine_pass(_pair(flow, 4), x, I1).pair.toOne.data), I0,
                                       eps=1e-6, maxCoordinates=30, rng=rng))


def _check_synthesizer(rng):
    store = ParamStore(int(rng.integers(1 << 30)))
    synthesizer = FrameSynthesizer(store, 'synthesis', SynthesisConfig(widths=[4, 4, 8]))
    I0, I1 = random_tensor(rng, (3, 16, 16), 0, 1), random_tensor(rng, (3, 16, 16), 0, 1)
    flow = Tensor(constant_flow(rng, 8, 8, 0.3, 0.9))
    r = readout(rng, (3, 16, 16))
    return max(finite_difference_check(lambda x: r(synthesizer(I0, I1, _pair(x, 2))), flow, eps=1e-6, maxCoordinates=30, rng=rng),
               finite_difference_check(lambda x: r(synthesizer(x, I1, _pair(flow, 2))), I0, eps=1e-6, maxCoordinates=30, rng=rng))


def _check_conv_layer(rng):
    store = ParamStore(int(rng.integers(1 << 30)))
    conv = Conv2d(store, 'conv', 2, 3, kernelSize=2, stride=2, padding=0)
    image = random_tensor(rng, (2, 6, 6))
    r = readout(rng, (3, 3, 3))
    return finite_difference_check(lambda x: r(conv(x)), image)


GRADIENT_CHECKS: List[GradientCheck] = [
    GradientCheck('elementwise', 'core', _check_elementwise),
    GradientCheck('matmul', 'core', _check_matmul),
    GradientCheck('conv2d', 'core', _check_conv2d),
    GradientCheck('conv_layer', 'core', _check_conv_layer),
    GradientCheck('softmax', 'core', _check_softmax),
    GradientCheck('layer_norm', 'core', _check_layer_norm),
    GradientCheck('resampling', 'core', _check_resampling),
    GradientCheck('window_ops', 'core', _check_window_ops),
    GradientCheck('backward_warp', 'warp', _check_backward_warp),
    GradientCheck('forward_warp', 'warp', _check_forward_warp),
    GradientCheck('rescale_field', 'warp', _check_rescale),
    GradientCheck('bilateral_correlation', 'costvol', _check_bilateral_correlation),
    GradientCheck('bbcv', 'costvol', _check_bbcv),
    GradientCheck('bca_no_anchor', 'attention', _check_bca_no_anchor),
    GradientCheck('bca_with_anchor', 'attention', _check_bca_anchor),
    GradientCheck('swin_block', 'attention', _check_swin),
    GradientCheck('encode_global', 'estimator', _check_encoder),
    GradientCheck('charbonnier', 'losses', _check_charbonnier),
    GradientCheck('census_loss', 'losses', _check_census),
    GradientCheck('photometric_loss', 'losses', _check_photometric),
    GradientCheck('synthesis_loss', 'losses', _check_synthesis_loss),
    GradientCheck('refine_pass', 'upsampler', _check_upsampler),
    GradientCheck('synthesize', 'synthesis', _check_synthesizer),
]

MODULES = sorted({check.module for check in GRADIENT_CHECKS})


def get_checkRng(seed: int, index: int) -> np.random.Generator:
    """Stream for one (seed, registry index); every check draws from its own."""
    return np.random.default_rng([seed, index])


def run_gradientChecks(module: str = None, seeds: Sequence[int] = (0, 1, 2), faultOp: str = None, faultBias: float = 0.1) -> DataFrame:
    """Runs the registered checks in float64, one row per (check, seed). faultOp injects a gradient bias into that op's backward rule."""
    if module is not None and module not in MODULES:
        raise ValueError('InputError: Unknown gradient-check module "{0}", choose from {1}'.format(module, MODULES))
    rows: List[Dict] = []
    checks = [(index, check) for index, check in enumerate(GRADIENT_CHECKS) if module is None or check.module == module]
    fault = gradientFault(faultOp, faultBias) if faultOp else nullcontext()
    with defaultDtype('float64'), fault:
        for index, check in checks:
            for seed in seeds:
                error = check.run(get_checkRng(seed, index))
                passed = bool(error < check.tolerance)
                rows.append({'check': check.name, 'module': check.module, 'seed': seed, 'error': error,
                             'tolerance': check.tolerance, 'passed': passed})
                if not passed:
                    log.warning('DataWarning: Gradient check %s (seed %d) error %.3e exceeds %.1e', check.name, seed, error, check.tolerance)
    return DataFrame(rows, columns=['check', 'module', 'seed', 'error', 'tolerance', 'passed'])


def raise_onFailure(table: DataFrame) -> None:
    """Raises GradientCheckError for the worst failing row of a run_gradientChecks table."""
    failed = table[~table['passed']]
    if len(failed):
        worst = failed.loc[failed['error'].idxmax()]
        raise GradientCheckError(worst['check'], float(worst['error']), float(worst['tolerance']))
