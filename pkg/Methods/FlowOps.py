import numpy as np

from matplotlib.colors import hsv_to_rgb

from Models.Fields import MotionField


def flow_colorize(flow, maxMagnitude: float = None) -> np.ndarray:
    """HxWx3 RGB in [0, 1]: hue encodes direction (0 at +x), saturation the magnitude relative to the field's maximum, value 1.
    A zero field is white."""
    data = flow.numpy() if isinstance(flow, MotionField) else np.asarray(flow)
    dx, dy = data[0].astype(np.float64), data[1].astype(np.float64)
    magnitude = np.hypot(dx, dy)
    if maxMagnitude is None:
        maxMagnitude = float(magnitude.max()) if magnitude.size else 0.0
    hue = np.mod(np.arctan2(dy, dx) / (2 * np.pi), 1.0)
    saturation = np.clip(magnitude / maxMagnitude, 0, 1) if maxMagnitude > 0 else np.zeros_like(magnitude)
    return hsv_to_rgb(np.stack([hue, saturation, np.ones_like(magnitude)], axis=-1))
