"""Sobel gradients and the textured ("active") pixel mask."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .core import ImageTooSmall, WrongChannelCount, as_image, validate_mask

SOBEL7_SMOOTH = np.array([1.0, 6.0, 15.0, 20.0, 15.0, 6.0, 1.0])
SOBEL7_DERIV = np.array([-1.0, -4.0, -5.0, 0.0, 5.0, 4.0, 1.0])
DEFAULT_THRESHOLD = 0.1


@dataclass(frozen=True)
class GradientField:
    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray


def _single_channel(gray) -> np.ndarray:
    arr = as_image(gray)
    if arr.shape[2] != 1:
        raise WrongChannelCount(f"expected a single-channel image, got {arr.shape[2]} channels")
    return arr[:, :, 0]


def sobel7(gray, strict: bool = True) -> GradientField:
    """7-tap Sobel responses with edge replication at the borders.

    ``gx`` smooths along columns and differentiates along rows' x axis, so a
    left-to-right brightening ramp gives positive ``gx``. With ``strict=False``
    images smaller than the kernel are accepted; replication keeps the result
    well defined (used on coarse pyramid levels).
    """
    g = _single_channel(gray)
    if strict and min(g.shape) < 7:
        raise ImageTooSmall(f"sobel7 needs both dimensions >= 7, got {g.shape}")
    smooth_y = correlate1d(g, SOBEL7_SMOOTH, axis=0, mode="nearest")
    gx = correlate1d(smooth_y, SOBEL7_DERIV, axis=1, mode="nearest")
    smooth_x = correlate1d(g, SOBEL7_SMOOTH, axis=1, mode="nearest")
    gy = correlate1d(smooth_x, SOBEL7_DERIV, axis=0, mode="nearest")
    return GradientField(gx, gy, np.hypot(gx, gy))


def texture_mask(gray, threshold: float = DEFAULT_THRESHOLD, strict: bool = True) -> np.ndarray:
    """Pixels whose max-normalised gradient magnitude exceeds ``threshold``.

    A constant image (zero maximum) yields an all-inactive mask.
    """
    mag = sobel7(gray, strict=strict).magnitude
    peak = mag.max()
    if peak <= 0:
        return np.zeros(mag.shape, dtype=bool)
    return (mag / peak) > threshold


def texturedness(mask) -> float:
    """Fraction of active pixels."""
    m = validate_mask(mask)
    return float(np.count_nonzero(m)) / m.size
