import numpy as np

from math import log10
from typing import Union


def isFinite(array) -> bool:
    return bool(np.all(np.isfinite(array)))


def isWithin(value_1: float, within_value: float, within_unit: str, value_2: float):
    if within_unit == 'units':
        return abs(value_1 - value_2) <= within_value
    elif within_unit == '%':
        if value_1 == value_2:
            return True
        return 100 * abs(value_1 - value_2)/((abs(value_1) + abs(value_2)) / 2) <= within_value
    else:
        return None


def get_maxRelativeError(analytic: np.ndarray, numeric: np.ndarray, zeroTolerance: float = 0.0) -> float:
    """Max over coordinates of |a - n| / (|a| + |n| + 1e-12). Coordinates where both values are below zeroTolerance are skipped."""
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    relevant = (np.abs(analytic) > zeroTolerance) | (np.abs(numeric) > zeroTolerance)
    if not relevant.any():
        return 0.0
    a, n = analytic[relevant], numeric[relevant]
    return float(np.max(np.abs(a - n) / (np.abs(a) + np.abs(n) + 1e-12)))


def get_psnr(estimate: np.ndarray, reference: np.ndarray, peak: float = 1.0) -> float:
    mse = float(np.mean((np.asarray(estimate, dtype=np.float64) - np.asarray(reference, dtype=np.float64)) ** 2))
    if mse == 0:
        return float('inf')
    return 10 * log10(peak ** 2 / mse)


def get_epe(flow: np.ndarray, referenceFlow: np.ndarray) -> float:
    """Mean end-point error between two 2xHxW displacement arrays."""
    difference = np.asarray(flow, dtype=np.float64) - np.asarray(referenceFlow, dtype=np.float64)
    return float(np.mean(np.sqrt(difference[0] ** 2 + difference[1] ** 2)))


def get_paddedSize(size: int, multiple: int) -> int:
    return ((size + multiple - 1) // multiple) * multiple


def isPowerOfTwo(value: Union[int, float]) -> bool:
    if value <= 0:
        return False
    if value < 1:
        value = 1 / value
    return float(value).is_integer() and (int(value) & (int(value) - 1)) == 0
