"""Loss terms for stereo self-supervision and their multi-scale combination.

Per scale ``s`` the objective is::

    L_s = a_ap (ir_l + ir_r) + a_ds (ds_l + ds_r) + a_lr (lr_l + lr_r) + a_fd (fd_l + fd_r)

and the total is the sum over four scales. Each coarser level halves the grid
by 2x2 average pooling and halves disparities so they stay in that level's
pixel units.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .core import (
    DimensionMismatch,
    ImageTooSmall,
    LossWeights,
    NoActivePixels,
    as_image,
    check_same_grid,
    gray_of,
)
from .filler import FillPlan
from .texture import DEFAULT_THRESHOLD, texture_mask
from .warp import LEFT, RIGHT, StereoPair, project_disparity, warp

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
NUM_SCALES = 4
MIN_PYRAMID_SIZE = 8


# -- 3x3 box filter with edge replication, and its adjoint ------------------


def _box3_axis(x: np.ndarray, axis: int) -> np.ndarray:
    x = np.moveaxis(x, axis, 0)
    out = x.copy()
    out[1:] += x[:-1]
    out[0] += x[0]
    out[:-1] += x[1:]
    out[-1] += x[-1]
    return np.moveaxis(out / 3.0, 0, axis)


def _box3_axis_adjoint(g: np.ndarray, axis: int) -> np.ndarray:
    g = np.moveaxis(g, axis, 0)
    out = g.copy()
    out[:-1] += g[1:]
    out[0] += g[0]
    out[1:] += g[:-1]
    out[-1] += g[-1]
    return np.moveaxis(out / 3.0, 0, axis)


def box3(x: np.ndarray) -> np.ndarray:
    return _box3_axis(_box3_axis(x, 0), 1)


def box3_adjoint(g: np.ndarray) -> np.ndarray:
    return _box3_axis_adjoint(_box3_axis_adjoint(g, 1), 0)


@dataclass(frozen=True)
class SSIMStats:
    """Local statistics of one SSIM evaluation, kept for differentiation."""

    mu_x: np.ndarray
    mu_y: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    ssim: np.ndarray  # per pixel and channel


def ssim_stats(x: np.ndarray, y: np.ndarray) -> SSIMStats:
    mu_x, mu_y = box3(x), box3(y)
    var_x = box3(x * x) - mu_x**2
    var_y = box3(y * y) - mu_y**2
    cov = box3(x * y) - mu_x * mu_y
    a1 = 2 * mu_x * mu_y + SSIM_C1
    a2 = 2 * cov + SSIM_C2
    b1 = mu_x**2 + mu_y**2 + SSIM_C1
    b2 = var_x + var_y + SSIM_C2
    return SSIMStats(mu_x, mu_y, a1, a2, b1, b2, (a1 * a2) / (b1 * b2))


def ssim_map(a, b) -> np.ndarray:
    """Per-pixel SSIM over 3x3 windows, averaged over channels."""
    a, b = as_image(a), as_image(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    return ssim_stats(a, b).ssim.mean(axis=2)


# -- individual terms -------------------------------------------------------


def image_recon_loss(image, recon, ssim_alpha: float = 0.85) -> float:
    image, recon = as_image(image), as_image(recon)
    if image.shape != recon.shape:
        raise DimensionMismatch(f"{image.shape} vs {recon.shape}")
    s = ssim_stats(image, recon).ssim
    per_pixel = ssim_alpha * (1 - s) / 2 + (1 - ssim_alpha) * np.abs(image - recon)
    return float(per_pixel.mean())


def edge_weights(image) -> tuple[np.ndarray, np.ndarray]:
    """``exp(-|dI|)`` along x and y with forward differences (0 past the border)."""
    img = as_image(image)
    gx = np.zeros(img.shape[:2])
    gy = np.zeros(img.shape[:2])
    gx[:, :-1] = np.abs(np.diff(img, axis=1)).mean(axis=2)
    gy[:-1, :] = np.abs(np.diff(img, axis=0)).mean(axis=2)
    return np.exp(-gx), np.exp(-gy)


def forward_diffs(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dx = np.zeros_like(d)
    dy = np.zeros_like(d)
    dx[:, :-1] = np.diff(d, axis=1)
    dy[:-1, :] = np.diff(d, axis=0)
    return dx, dy


def _smoothness(d: np.ndarray, wx: np.ndarray, wy: np.ndarray) -> float:
    dx, dy = forward_diffs(d)
    return float((np.abs(dx) * wx + np.abs(dy) * wy).mean())


def smoothness_loss(d, image) -> float:
    d = np.asarray(d, dtype=np.float64)
    check_same_grid(d, as_image(image))
    return _smoothness(d, *edge_weights(image))


def lr_consistency_loss(d_self, d_other, side: str) -> float:
    d_self = np.asarray(d_self, dtype=np.float64)
    projected = project_disparity(d_other, d_self, side)
    return float(np.abs(d_self - projected).mean())


def filled_disparity_loss(d, d_filled) -> float:
    d = np.asarray(d, dtype=np.float64)
    d_filled = np.asarray(d_filled, dtype=np.float64)
    if d.shape != d_filled.shape:
        raise DimensionMismatch(f"{d.shape} vs {d_filled.shape}")
    return float(np.abs(d - d_filled).mean())


# -- pyramids ---------------------------------------------------------------


def _pool_index(n: int) -> tuple[np.ndarray, np.ndarray]:
    first = np.arange(0, n, 2)
    return first, np.minimum(first + 1, n - 1)


def pool2(x: np.ndarray) -> np.ndarray:
    """2x2 average pooling; a trailing odd row/column pools with itself."""
    r0, r1 = _pool_index(x.shape[0])
    c0, c1 = _pool_index(x.shape[1])
    rows = x[r0] + x[r1]
    return (rows[:, c0] + rows[:, c1]) / 4.0


def pool2_adjoint(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Transpose of :func:`pool2` for an input grid of ``shape``."""
    r0, r1 = _pool_index(shape[0])
    c0, c1 = _pool_index(shape[1])
    cols = np.zeros((g.shape[0], shape[1]) + g.shape[2:])
    np.add.at(cols, (slice(None), c0), g / 4.0)
    np.add.at(cols, (slice(None), c1), g / 4.0)
    out = np.zeros(tuple(shape[:2]) + g.shape[2:])
    np.add.at(out, r0, cols)
    np.add.at(out, r1, cols)
    return out


def _check_pyramid_size(shape, levels: int) -> None:
    if levels > 1 and min(shape[:2]) < MIN_PYRAMID_SIZE:
        raise ImageTooSmall(f"pyramid needs both dimensions >= {MIN_PYRAMID_SIZE}, got {shape[:2]}")


def pyramid(image, levels: int = NUM_SCALES) -> list[np.ndarray]:
    img = as_image(image)
    _check_pyramid_size(img.shape, levels)
    out = [img]
    for _ in range(levels - 1):
        out.append(pool2(out[-1]))
    return out


def pyramid_d(d, levels: int = NUM_SCALES) -> list[np.ndarray]:
    d = np.asarray(d, dtype=np.float64)
    _check_pyramid_size(d.shape, levels)
    out = [d]
    for _ in range(levels - 1):
        out.append(pool2(out[-1]) / 2.0)
    return out


# -- multi-scale objective --------------------------------------------------


@dataclass(frozen=True)
class ScaleTerms:
    l_ir_left: float
    l_ir_right: float
    l_ds_left: float
    l_ds_right: float
    l_lr_left: float
    l_lr_right: float
    l_fd_left: float
    l_fd_right: float

    def weighted(self, w: LossWeights) -> float:
        return (
            w.alpha_ap * (self.l_ir_left + self.l_ir_right)
            + w.alpha_ds * (self.l_ds_left + self.l_ds_right)
            + w.alpha_lr * (self.l_lr_left + self.l_lr_right)
            + w.alpha_fd * (self.l_fd_left + self.l_fd_right)
        )

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, f.name) for f in fields(self))


TERM_NAMES = tuple(f.name for f in fields(ScaleTerms))


@dataclass(frozen=True)
class LossBreakdown:
    scales: tuple[ScaleTerms, ...]
    scale_totals: tuple[float, ...]
    total: float


@dataclass
class ScaleLevel:
    """Everything about one pyramid level that does not depend on disparity."""

    left: np.ndarray
    right: np.ndarray
    wx_left: np.ndarray
    wy_left: np.ndarray
    wx_right: np.ndarray
    wy_right: np.ndarray
    mask_left: np.ndarray
    mask_right: np.ndarray
    plan_left: FillPlan
    plan_right: FillPlan

    @property
    def shape(self) -> tuple[int, int]:
        return self.left.shape[:2]


class PreparedPair:
    """Pyramids, edge weights, texture masks and fill plans for a stereo pair.

    Building this once and reusing it across many disparity evaluations is
    what makes per-pixel optimisation affordable.
    """

    def __init__(self, pair: StereoPair, levels: int = NUM_SCALES, threshold: float = DEFAULT_THRESHOLD):
        self.pair = pair
        self.levels = levels
        self.shape = pair.shape
        lefts = pyramid(pair.left, levels)
        rights = pyramid(pair.right, levels)
        self.scales: list[ScaleLevel] = []
        for s, (left, right) in enumerate(zip(lefts, rights), start=1):
            mask_l = texture_mask(gray_of(left), threshold, strict=False)
            mask_r = texture_mask(gray_of(right), threshold, strict=False)
            try:
                plan_l = FillPlan.from_mask(mask_l)
                plan_r = FillPlan.from_mask(mask_r)
            except NoActivePixels:
                raise NoActivePixels(scale=s) from None
            self.scales.append(
                ScaleLevel(left, right, *edge_weights(left), *edge_weights(right), mask_l, mask_r, plan_l, plan_r)
            )

    def disparity_pyramids(self, d_left, d_right) -> tuple[list[np.ndarray], list[np.ndarray]]:
        d_left = np.asarray(d_left, dtype=np.float64)
        d_right = np.asarray(d_right, dtype=np.float64)
        if d_left.shape != self.shape or d_right.shape != self.shape:
            raise DimensionMismatch(f"disparities {d_left.shape}/{d_right.shape} vs images {self.shape}")
        return pyramid_d(d_left, self.levels), pyramid_d(d_right, self.levels)

    def fill_targets(self, d_left, d_right) -> list[tuple[np.ndarray, np.ndarray]]:
        """Filled disparity targets per scale for the given estimates."""
        pl, pr = self.disparity_pyramids(d_left, d_right)
        return [(lv.plan_left.apply(dl), lv.plan_right.apply(dr)) for lv, dl, dr in zip(self.scales, pl, pr)]

    def scale_terms(self, s: int, dl: np.ndarray, dr: np.ndarray, targets, ssim_alpha: float) -> ScaleTerms:
        lv = self.scales[s]
        fd_l, fd_r = targets
        return ScaleTerms(
            l_ir_left=image_recon_loss(lv.left, warp(lv.right, dl, LEFT), ssim_alpha),
            l_ir_right=image_recon_loss(lv.right, warp(lv.left, dr, RIGHT), ssim_alpha),
            l_ds_left=_smoothness(dl, lv.wx_left, lv.wy_left),
            l_ds_right=_smoothness(dr, lv.wx_right, lv.wy_right),
            l_lr_left=lr_consistency_loss(dl, dr, LEFT),
            l_lr_right=lr_consistency_loss(dr, dl, RIGHT),
            l_fd_left=filled_disparity_loss(dl, fd_l),
            l_fd_right=filled_disparity_loss(dr, fd_r),
        )

    def loss(self, d_left, d_right, w: LossWeights, targets=None) -> LossBreakdown:
        pl, pr = self.disparity_pyramids(d_left, d_right)
        if targets is None:
            targets = [(lv.plan_left.apply(dl), lv.plan_right.apply(dr)) for lv, dl, dr in zip(self.scales, pl, pr)]
        terms = tuple(
            self.scale_terms(s, dl, dr, tg, w.ssim_alpha) for s, (dl, dr, tg) in enumerate(zip(pl, pr, targets))
        )
        totals = tuple(t.weighted(w) for t in terms)
        return LossBreakdown(terms, totals, float(sum(totals)))


def total_loss(
    pair: StereoPair,
    d_left,
    d_right,
    w: LossWeights,
    levels: int = NUM_SCALES,
    targets=None,
) -> LossBreakdown:
    """Weighted multi-scale loss with a per-term, per-scale breakdown.

    ``targets`` optionally freezes the filled-disparity targets (one
    ``(left, right)`` pair per scale); by default they are recomputed from the
    current estimates.
    """
    return PreparedPair(pair, levels).loss(d_left, d_right, w, targets)
