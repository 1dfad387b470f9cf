"""Shared containers, camera/loss parameters, errors and validation.

Images are numpy arrays of shape ``(H, W, C)`` with ``C`` in ``{1, 3}`` and
values in ``[0, 1]``. Disparity maps are ``(H, W)`` arrays of non-negative
horizontal pixel shifts. Active masks are ``(H, W)`` boolean arrays. All
in-memory arithmetic is done in float64; float32 only appears at file
boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


class FDLossError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(FDLossError, ValueError):
    pass


class NonFiniteValue(FDLossError, ValueError):
    pass


class OutOfRange(FDLossError, ValueError):
    pass


class WrongChannelCount(FDLossError, ValueError):
    pass


class ImageTooSmall(FDLossError, ValueError):
    pass


class NoActivePixels(FDLossError):
    """Raised when a mask has no textured pixel to propagate from."""

    def __init__(self, message: str = "mask has no active pixels", scale: int | None = None):
        if scale is not None:
            message = f"{message} (scale {scale})"
        super().__init__(message)
        self.scale = scale


class IncompleteFill(FDLossError):
    pass


class RowOutOfBounds(FDLossError, IndexError):
    pass


class NonFiniteLoss(FDLossError):
    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value!r} at step {step}")
        self.step = step


class ZeroGroundTruthDepth(FDLossError, ValueError):
    pass


class EmptyValidSet(FDLossError, ValueError):
    pass


class CovariateOutOfRange(FDLossError, ValueError):
    pass


class RegionOutOfBounds(FDLossError, ValueError):
    pass


class UnknownFixture(FDLossError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown fixture"


class MalformedHeader(FDLossError, ValueError):
    pass


class TruncatedData(FDLossError, ValueError):
    pass


class UnsupportedChannelCount(FDLossError, ValueError):
    pass


class UnsupportedMaxval(FDLossError, ValueError):
    pass


@dataclass(frozen=True)
class CameraRig:
    baseline_m: float = 0.2
    focal_px: float = 100.0
    depth_min_m: float = 0.0
    depth_max_m: float = 80.0

    def __post_init__(self):
        if not self.baseline_m > 0 or not self.focal_px > 0:
            raise OutOfRange("baseline_m and focal_px must be positive")
        if not 0 <= self.depth_min_m < self.depth_max_m:
            raise OutOfRange("need 0 <= depth_min_m < depth_max_m")


@dataclass(frozen=True)
class LossWeights:
    """Weights of the four loss terms plus the SSIM/L1 blend."""

    alpha_ap: float = 1.0
    alpha_ds: float = 0.1
    alpha_lr: float = 1.0
    alpha_fd: float = 0.5
    ssim_alpha: float = 0.85

    def __post_init__(self):
        for name in ("alpha_ap", "alpha_ds", "alpha_lr", "alpha_fd"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise OutOfRange(f"{name} must be a finite non-negative number, got {value!r}")
        if not 0 <= self.ssim_alpha <= 1:
            raise OutOfRange(f"ssim_alpha must lie in [0, 1], got {self.ssim_alpha!r}")

    def scaled(self, factor: float) -> "LossWeights":
        return LossWeights(
            self.alpha_ap * factor,
            self.alpha_ds * factor,
            self.alpha_lr * factor,
            self.alpha_fd * factor,
            self.ssim_alpha,
        )


def _first_index(bad: np.ndarray) -> tuple[int, ...]:
    return tuple(int(i) for i in np.argwhere(bad)[0])


def _check_finite(data: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(data)
    if bad.any():
        raise NonFiniteValue(f"{what} has a non-finite value at index {_first_index(bad)}")


def validate_image(img, shape: tuple[int, ...] | None = None) -> np.ndarray:
    """Check image invariants and return it as a float64 ``(H, W, C)`` array.

    A flat buffer is accepted when ``shape`` gives the full ``(H, W, C)`` grid.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 1:
        if shape is None or len(shape) != 3:
            raise DimensionMismatch("flat image data needs an (H, W, C) shape")
        expected = shape[0] * shape[1] * shape[2]
        if arr.size != expected:
            raise DimensionMismatch(
                f"data length {arr.size} does not match {shape[0]}x{shape[1]}x{shape[2]} = {expected}"
            )
        arr = arr.reshape(shape)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise DimensionMismatch(f"image must be HxW, HxWx1 or HxWx3, got shape {arr.shape}")
    if shape is not None and arr.shape[: len(shape)] != tuple(shape):
        raise DimensionMismatch(f"image shape {arr.shape} does not match {tuple(shape)}")
    _check_finite(arr, "image")
    bad = (arr < 0) | (arr > 1)
    if bad.any():
        idx = _first_index(bad)
        raise OutOfRange(f"image value {arr[idx]!r} at index {idx} outside [0, 1]")
    return arr


def validate_disparity(disp, shape: tuple[int, int] | None = None) -> np.ndarray:
    arr = np.asarray(disp, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise DimensionMismatch(f"disparity must be HxW, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape[:2]):
        raise DimensionMismatch(f"disparity shape {arr.shape} does not match {tuple(shape[:2])}")
    _check_finite(arr, "disparity")
    bad = arr < 0
    if bad.any():
        idx = _first_index(bad)
        raise OutOfRange(f"disparity value {arr[idx]!r} at index {idx} is negative")
    return arr


def validate_mask(mask, shape: tuple[int, int] | None = None) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise DimensionMismatch(f"mask must be HxW, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape[:2]):
        raise DimensionMismatch(f"mask shape {arr.shape} does not match {tuple(shape[:2])}")
    if arr.dtype != bool:
        if not np.isin(arr, (0, 1)).all():
            raise OutOfRange("mask values must be boolean")
        arr = arr.astype(bool)
    return arr


def validate(field, kind: str = "image", **kwargs) -> np.ndarray:
    """Validate ``field`` as ``"image"``, ``"disparity"`` or ``"mask"``."""
    checkers = {"image": validate_image, "disparity": validate_disparity, "mask": validate_mask}
    try:
        checker = checkers[kind]
    except KeyError:
        raise ValueError(f"unknown field kind {kind!r}") from None
    return checker(field, **kwargs)


def as_image(img) -> np.ndarray:
    """Float64 ``(H, W, C)`` view without range checks (hot paths)."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def to_grayscale(img) -> np.ndarray:
    """Rec. 601 luma of a 3-channel image, returned as ``(H, W, 1)``."""
    arr = as_image(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise WrongChannelCount(f"expected 3 channels, got {arr.shape[2]}")
    gray = arr @ LUMA_WEIGHTS
    return np.clip(gray, 0.0, 1.0)[:, :, None]


def gray_of(img) -> np.ndarray:
    """Grayscale ``(H, W, 1)`` version of an image of either channel count."""
    arr = as_image(img)
    return arr if arr.shape[2] == 1 else to_grayscale(arr)


def check_same_grid(*arrays) -> tuple[int, int]:
    shapes = {tuple(np.shape(a)[:2]) for a in arrays}
    if len(shapes) != 1:
        raise DimensionMismatch(f"grid dimensions differ: {sorted(shapes)}")
    return shapes.pop()
