"""Horizontal bilinear warping for rectified stereo.

Sign convention: disparities are non-negative and a scene point at left
column ``j`` appears at right column ``j - d``. The left view is therefore
synthesised by sampling the right image at ``j - d_left`` and the right view
by sampling the left image at ``j + d_right``. Sample positions outside the
image are clamped to the border column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DimensionMismatch,
    RowOutOfBounds,
    as_image,
    check_same_grid,
)

LEFT = "left"
RIGHT = "right"


@dataclass(frozen=True)
class StereoPair:
    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        left, right = as_image(self.left), as_image(self.right)
        if left.shape != right.shape:
            raise DimensionMismatch(f"left {left.shape} and right {right.shape} differ")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @property
    def shape(self) -> tuple[int, int]:
        return self.left.shape[:2]


@dataclass(frozen=True)
class Samples:
    """Bilinear sample positions along rows, plus what gradients need."""

    x0: np.ndarray  # left tap column
    x1: np.ndarray  # right tap column
    t: np.ndarray  # weight of the right tap
    inside: np.ndarray  # position not clamped, so d(value)/dx is the cell slope


def sample_positions(x: np.ndarray, width: int) -> Samples:
    x = np.asarray(x, dtype=np.float64)
    xc = np.clip(x, 0.0, width - 1)
    x0 = np.floor(xc).astype(np.intp)
    x1 = np.minimum(x0 + 1, width - 1)
    return Samples(x0, x1, xc - x0, (x >= 0) & (x < width - 1))


def gather(src: np.ndarray, s: Samples) -> tuple[np.ndarray, np.ndarray]:
    """Sampled values and their x-derivative for an ``(H, W[, C])`` source."""
    rows = np.arange(src.shape[0])[:, None]
    v0 = src[rows, s.x0]
    v1 = src[rows, s.x1]
    t = s.t if src.ndim == 2 else s.t[..., None]
    inside = s.inside if src.ndim == 2 else s.inside[..., None]
    return v0 + t * (v1 - v0), np.where(inside, v1 - v0, 0.0)


def sample_h(img, row: int, x: float) -> np.ndarray:
    """Per-channel value of ``img`` at (``row``, fractional column ``x``)."""
    arr = as_image(img)
    h, w = arr.shape[:2]
    if not 0 <= row < h:
        raise RowOutOfBounds(f"row {row} outside [0, {h})")
    s = sample_positions(np.array([[x]]), w)
    value, _ = gather(arr[row : row + 1], s)
    return value[0, 0]


def sample_coords(d: np.ndarray, side: str) -> np.ndarray:
    """Source columns sampled when synthesising view ``side`` from the other."""
    cols = np.arange(d.shape[1], dtype=np.float64)[None, :]
    if side == LEFT:
        return cols - d
    if side == RIGHT:
        return cols + d
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def warp(src, d, side: str) -> np.ndarray:
    """Synthesise view ``side`` by sampling ``src`` (the other view)."""
    arr = as_image(src)
    d = np.asarray(d, dtype=np.float64)
    check_same_grid(arr, d)
    value, _ = gather(arr, sample_positions(sample_coords(d, side), arr.shape[1]))
    return value


def reconstruct_left(right, d_left) -> np.ndarray:
    return warp(right, d_left, LEFT)


def reconstruct_right(left, d_right) -> np.ndarray:
    return warp(left, d_right, RIGHT)


def project_disparity(d_other, d_self, side: str) -> np.ndarray:
    """The other view's disparity resampled onto view ``side``."""
    d_other = np.asarray(d_other, dtype=np.float64)
    d_self = np.asarray(d_self, dtype=np.float64)
    check_same_grid(d_other, d_self)
    value, _ = gather(d_other, sample_positions(sample_coords(d_self, side), d_self.shape[1]))
    return value
