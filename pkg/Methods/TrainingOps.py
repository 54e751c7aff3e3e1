import logging
import queue
import threading
import time

import numpy as np

from typing import Callable, Iterator, List, NamedTuple, Sequence

from Models.Tensors import Tensor, ParamStore, as_tensor, gradientsDisabled
from Models.Fields import BilateralPair
from Models.Configs import TrainingConfig
from Models.Pipelines import BiMotionPipeline
from Methods import TensorOps as ops
from Methods.WarpOps import rescale_toScale
from Methods.LossOps import photometric_loss, synthesis_loss
from Methods.SyntheticOps import SyntheticDataset, SyntheticSample
from Utilities.PrgUtilities import Logbook, get_workerThreads
from Utilities.Exceptions import DivergenceError, NonFiniteError
from Utilities.Numeric import isFinite

log = logging.getLogger(__name__)


def get_learningRate(cfg: TrainingConfig, iteration: int) -> float:
    """Constant until halveAfter, then halved every halveEvery iterations."""
    if iteration < cfg.halveAfter:
        return cfg.learningRate
    return cfg.learningRate * 0.5 ** (1 + (iteration - cfg.halveAfter) // cfg.halveEvery)


class Adam:
    """First-order adaptive optimizer with bias-corrected moments. Tensors without a gradient are left untouched."""

    def __init__(self, params: Sequence[Tensor], cfg: TrainingConfig):
        self.params = list(params)
        self.cfg = cfg
        self.firstMoments = [np.zeros_like(p.data) for p in self.params]
        self.secondMoments = [np.zeros_like(p.data) for p in self.params]
        self.stepCount = 0

    def step(self, iteration: int = None) -> float:
        cfg = self.cfg
        self.stepCount += 1
        lr = get_learningRate(cfg, self.stepCount - 1 if iteration is None else iteration)
        correction1 = 1 - cfg.beta1 ** self.stepCount
        correction2 = 1 - cfg.beta2 ** self.stepCount
        for param, m, v in zip(self.params, self.firstMoments, self.secondMoments):
            if param.grad is None or not param.requires_grad:
                continue
            m *= cfg.beta1
            m += (1 - cfg.beta1) * param.grad
            v *= cfg.beta2
            v += (1 - cfg.beta2) * param.grad ** 2
            param.data -= (lr * (m / correction1) / (np.sqrt(v / correction2) + cfg.adamEps)).astype(param.dtype)
        return lr


class Prefetcher:
    """Iterates over produce(i) for i in range(count). With more than one worker thread allowed, batches are built ahead
    on a background thread through a bounded queue; order is unchanged either way."""

    _done = object()

    def __init__(self, produce: Callable[[int], object], count: int, depth: int = 4, threads: int = None):
        self.produce = produce
        self.count = count
        self.depth = max(1, depth)
        self.threads = get_workerThreads() if threads is None else threads

    def __iter__(self) -> Iterator:
        if self.threads <= 1:
            for index in range(self.count):
                yield self.produce(index)
            return

        buffer = queue.Queue(maxsize=self.depth)
        stop = threading.Event()

        def worker():
            try:
                for index in range(self.count):
                    if stop.is_set():
                        return
                    buffer.put(self.produce(index))
            except Exception as error:
                buffer.put(error)
            buffer.put(self._done)

        thread = threading.Thread(target=worker, name='bimotion-prefetch', daemon=True)
        thread.start()
        try:
            while True:
                item = buffer.get()
                if item is self._done:
                    break
                if isinstance(item, Exception):
                    raise item
                yield item
        finally:
            stop.set()
            while thread.is_alive():
                try:
                    buffer.get_nowait()
                except queue.Empty:
                    thread.join(timeout=0.01)


class TrainingResult(NamedTuple):
    store: ParamStore
    logbook: Logbook


def _frames(sample: SyntheticSample):
    return as_tensor(sample.I0), as_tensor(sample.Igt), as_tensor(sample.I1)


def _check_loss(loss: Tensor, iteration: int, lastLoss: float) -> float:
    value = loss.item()
    if not isFinite(value):
        raise DivergenceError(iteration, lastLoss, 'loss evaluated to {0}'.format(value))
    return value


def _run(phase: str, pipeline: BiMotionPipeline, batches, params: List[Tensor], lossFcn: Callable, cfg: TrainingConfig,
         logbook: Logbook, logEvery: int) -> Logbook:
    optimizer = Adam(params, cfg)
    lastLoss = float('nan')
    completed = 0
    started = time.time()
    for iteration, batch in enumerate(batches):
        pipeline.store.zero_grad()
        try:
            losses = [lossFcn(sample) for sample in batch]
            loss = losses[0] if len(losses) == 1 else ops.mean(ops.stack(losses))
            lastLoss = _check_loss(loss, iteration, lastLoss)
            loss.backward()
        except NonFiniteError as error:
            raise DivergenceError(iteration, lastLoss, str(error))
        lr = optimizer.step(iteration)
        logbook.log('trainingStep', phase, lastLoss, workedOn=len(batch), inRelationTo=lr, iteration=iteration)
        if logEvery and iteration % logEvery == 0:
            log.info('TrainingNotification: %s iteration %d, loss %.6f, lr %.2e', phase, iteration, lastLoss, lr)
        completed += 1
    log.info('TimeNotification: %s finished %d iterations in %.1f s', phase, completed, time.time() - started)
    return logbook


def get_fullResolutionPair(pair: BilateralPair) -> BilateralPair:
    return BilateralPair.from_toOne(rescale_toScale(pair.toOne, 1))


def train_biformer(pipeline: BiMotionPipeline, dataset: SyntheticDataset, iterations: int, cfg: TrainingConfig = None,
                   logbook: Logbook = None, logEvery: int = 50) -> TrainingResult:
    """Minimizes the photometric loss of the global field upsampled to full resolution. Only BiFormer parameters are updated."""
    cfg = cfg if cfg is not None else pipeline.cfg.training
    logbook = logbook if logbook is not None else Logbook()
    lossCfg = pipeline.cfg.loss

    def lossFcn(sample: SyntheticSample) -> Tensor:
        I0, Igt, I1 = _frames(sample)
        pair = get_fullResolutionPair(pipeline.estimate_global(I0, I1))
        return photometric_loss(Igt, I0, I1, pair, lossCfg)

    def produce(iteration: int):
        return dataset.get_batch(range(iteration * cfg.batchSize, (iteration + 1) * cfg.batchSize))

    batches = Prefetcher(produce, iterations, cfg.prefetch)
    _run('train_biformer', pipeline, batches, pipeline.store.tensors('biformer.'), lossFcn, cfg, logbook, logEvery)
    return TrainingResult(pipeline.store, logbook)


def train_refinement(pipeline: BiMotionPipeline, dataset: SyntheticDataset, iterations: int, cfg: TrainingConfig = None,
                     logbook: Logbook = None, freezeGlobal: bool = True, logEvery: int = 50) -> TrainingResult:
    """Trains the upsampler and the synthesis network with the synthesis loss at a random working size per batch.
    With freezeGlobal the BiFormer forward runs without a graph and its parameters are never updated."""
    cfg = cfg if cfg is not None else pipeline.cfg.training
    logbook = logbook if logbook is not None else Logbook()
    lossCfg = pipeline.cfg.loss
    sizeRng = np.random.default_rng([dataset.seed, 7919])
    sizes = [int(sizeRng.choice(cfg.refineSizes)) for _ in range(iterations)]

    def lossFcn(sample: SyntheticSample) -> Tensor:
        I0, Igt, I1 = _frames(sample)
        if freezeGlobal:
            with gradientsDisabled():
                globalPair = pipeline.estimate_global(I0, I1)
        else:
            globalPair = pipeline.estimate_global(I0, I1)
        pair = pipeline.refine(globalPair, I0, I1)
        return synthesis_loss(Igt, pipeline.synthesizer(I0, I1, pair), lossCfg)

    def produce(iteration: int):
        indices = range(iteration * cfg.batchSize, (iteration + 1) * cfg.batchSize)
        return dataset.get_batch(indices, sizes[iteration])

    params = pipeline.store.tensors('upsampler.') + pipeline.store.tensors('synthesis.')
    if not freezeGlobal:
        params += pipeline.store.tensors('biformer.')
    batches = Prefetcher(produce, iterations, cfg.prefetch)
    _run('train_refinement', pipeline, batches, params, lossFcn, cfg, logbook, logEvery)
    return TrainingResult(pipeline.store, logbook)
