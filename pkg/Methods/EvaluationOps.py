import logging

import numpy as np

from pandas import DataFrame
from scipy.ndimage import gaussian_filter

from Models.Pipelines import BiMotionPipeline
from Methods.SyntheticOps import SyntheticDataset
from Methods.WarpOps import rescale_toScale
from Utilities.Numeric import get_psnr, get_epe

log = logging.getLogger(__name__)


def psnr(estimate: np.ndarray, reference: np.ndarray) -> float:
    return get_psnr(np.clip(estimate, 0, 1), reference, peak=1.0)


def ssim(estimate: np.ndarray, reference: np.ndarray, sigma: float = 1.5, peak: float = 1.0) -> float:
    """Gaussian-window structural similarity, averaged over channels and pixels."""
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    scores = []
    for x, y in zip(np.asarray(estimate, dtype=np.float64), np.asarray(reference, dtype=np.float64)):
        muX, muY = gaussian_filter(x, sigma), gaussian_filter(y, sigma)
        varX = gaussian_filter(x * x, sigma) - muX ** 2
        varY = gaussian_filter(y * y, sigma) - muY ** 2
        covariance = gaussian_filter(x * y, sigma) - muX * muY
        scores.append(((2 * muX * muY + c1) * (2 * covariance + c2)) / ((muX ** 2 + muY ** 2 + c1) * (varX + varY + c2)))
    return float(np.mean(scores))


def epe(flow: np.ndarray, referenceFlow: np.ndarray) -> float:
    return get_epe(flow, referenceFlow)


def evaluate_interpolation(pipeline: BiMotionPipeline, dataset: SyntheticDataset, count: int, offset: int = 0) -> DataFrame:
    """Per-sample PSNR/SSIM of the interpolated frame, the copy-nearest-input baseline PSNR, and the EPE at 1/2 scale of the
    refined field and of the global field rescaled to the same grid."""
    rows = []
    for index in range(offset, offset + count):
        sample = dataset.get_sample(index)
        result = pipeline.interpolate(sample.I0, sample.I1)
        frame = result.frame.numpy()
        groundTruth = sample.get_flowToOne(2)
        globalAtHalf = rescale_toScale(result.globalPair.toOne, 2).numpy()
        rows.append({'sample': index,
                     'psnr': psnr(frame, sample.Igt),
                     'ssim': ssim(np.clip(frame, 0, 1), sample.Igt),
                     'baselinePsnr': psnr(sample.I0, sample.Igt),
                     'epeRefined': epe(result.pair.toOne.numpy(), groundTruth),
                     'epeGlobal': epe(globalAtHalf, groundTruth)})
    table = DataFrame(rows, columns=['sample', 'psnr', 'ssim', 'baselinePsnr', 'epeRefined', 'epeGlobal'])
    log.info('TrainingNotification: Evaluated %d samples, mean PSNR %.2f dB (baseline %.2f dB)', count, table['psnr'].mean(), table['baselinePsnr'].mean())
    return table
