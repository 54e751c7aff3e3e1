import logging
import time

import numpy as np

from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Sequence

from pandas import DataFrame

from Models.Tensors import Tensor, gradientsDisabled
from Models.Fields import MotionField, BilateralPair, Endpoint
from Models.Configs import PipelineConfig
from Models.Pipelines import BiMotionPipeline
from Methods.CostVolumeOps import bilateral_correlation, bbcv, memory_report, get_equivalentPixelRadius, get_blockCoverage
from Utilities.PrgUtilities import get_workerThreads

log = logging.getLogger(__name__)

BENCH_COLUMNS = ['size', 'mode', 'bytes', 'ms']


def _elapsedMs(fcn) -> float:
    started = time.perf_counter()
    with gradientsDisabled():
        fcn()
    return 1000 * (time.perf_counter() - started)


def get_coverageLines(radius: int = 2) -> List[str]:
    lines = ['k={0}: ((2*{1}+1) x 2^{0})^2 = {2} px'.format(k, radius, get_blockCoverage(radius, k)) for k in (0, 1, 2)]
    lines.append('equivalent full-volume pixel radius: {0}'.format(get_equivalentPixelRadius(radius, 2)))
    return lines


def bench_costVolumes(size: int, radius: int = 2, channels: int = 8, seed: int = 0) -> List[Dict]:
    """Storage and time of the three blockwise volumes against one full volume of equal pixel coverage."""
    rng = np.random.default_rng([seed, size])
    equivalentRadius = get_equivalentPixelRadius(radius, 2)
    F0, F1 = (Tensor(rng.standard_normal((channels, size, size))) for _ in range(2))
    pair = BilateralPair.from_toOne(MotionField(Tensor(rng.uniform(-2, 2, size=(2, size, size))), 1, Endpoint.T_TO_1))
    blockFeatures = [(Tensor(rng.standard_normal((channels, size // 2 ** k, size // 2 ** k))),
                      Tensor(rng.standard_normal((channels, size // 2 ** k, size // 2 ** k)))) for k in (0, 1, 2)]

    fullMs = _elapsedMs(lambda: bilateral_correlation(F0, F1, equivalentRadius))
    blockMs = _elapsedMs(lambda: [bbcv(S0, S1, pair, k, radius) for k, (S0, S1) in enumerate(blockFeatures)])
    return [{'size': size, 'mode': 'full', 'bytes': memory_report(size, size, equivalentRadius, 'full'), 'ms': fullMs},
            {'size': size, 'mode': 'blockwise', 'bytes': memory_report(size, size, radius, 'blockwise'), 'ms': blockMs}]


def bench_pipeline(size: int, cfg: PipelineConfig = None, seed: int = 0) -> List[Dict]:
    """Time of one interpolation at size x size; bytes is the parameter storage."""
    pipeline = BiMotionPipeline(cfg)
    rng = np.random.default_rng([seed, size])
    I0, I1 = rng.uniform(0, 1, size=(3, size, size)), rng.uniform(0, 1, size=(3, size, size))
    ms = _elapsedMs(lambda: pipeline.interpolate(I0, I1))
    parameterBytes = int(sum(tensor.data.nbytes for tensor in pipeline.store.tensors()))
    return [{'size': size, 'mode': 'pipeline', 'bytes': parameterBytes, 'ms': ms}]


def run_benchmark(mode: str, sizes: Sequence[int], cfg: PipelineConfig = None, seed: int = 0) -> DataFrame:
    if mode == 'costvol':
        task = lambda size: bench_costVolumes(size, cfg.bbcvRadius if cfg is not None else 2, seed=seed)
    elif mode == 'pipeline':
        task = lambda size: bench_pipeline(size, cfg, seed)
    else:
        raise ValueError('InputError: Benchmark mode must be "costvol" or "pipeline", got {0}'.format(mode))
    with ThreadPoolExecutor(max_workers=get_workerThreads()) as executor:
        results = list(executor.map(task, sizes))
    table = DataFrame([row for rows in results for row in rows], columns=BENCH_COLUMNS)
    log.info('TimeNotification: Benchmarked %s at sizes %s', mode, list(sizes))
    return table
