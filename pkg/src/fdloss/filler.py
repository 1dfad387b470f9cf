"""Disparity filling: propagate textured-pixel disparities into untextured areas.

Propagation is a simultaneous update: at every iteration each inactive pixel
with at least one active 4-neighbour takes the mean of those neighbours and
becomes active for the next iteration. Which pixels update at which iteration,
and from which neighbours, depends only on the mask, so :class:`FillPlan`
compiles that schedule once and replays it cheaply on any disparity map. The
optimizer relies on this: the fill target is recomputed every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .core import (
    DimensionMismatch,
    IncompleteFill,
    NoActivePixels,
    gray_of,
    validate_disparity,
    validate_mask,
)
from .texture import DEFAULT_THRESHOLD, texture_mask

_NEIGHBOURS = ((-1, 0), (1, 0), (0, -1), (0, 1))


def inverse_distance_kernel(radius: int = 2) -> np.ndarray:
    """Normalised 5x5 kernel: 1 at the centre, 1/distance elsewhere."""
    off = np.arange(-radius, radius + 1)
    dist = np.hypot(off[:, None], off[None, :])
    with np.errstate(divide="ignore"):
        k = np.where(dist > 0, 1.0 / dist, 1.0)
    return k / k.sum()


@dataclass(frozen=True)
class FillResult:
    filled: np.ndarray
    iterations: int
    initially_active: np.ndarray


@dataclass
class _Step:
    targets: np.ndarray  # flat indices updated in this iteration
    sources: np.ndarray  # (n, 4) flat neighbour indices, padded with 0
    valid: np.ndarray  # (n, 4) bool, neighbour active at start of iteration
    counts: np.ndarray  # (n,) number of active neighbours


@dataclass
class FillPlan:
    """Compiled propagation schedule and smoothing weights for one mask."""

    mask: np.ndarray
    steps: list[_Step] = field(default_factory=list)
    smoother: sparse.csr_matrix | None = None

    @classmethod
    def from_mask(cls, mask) -> "FillPlan":
        mask = validate_mask(mask)
        if not mask.any():
            raise NoActivePixels()
        h, w = mask.shape
        plan = cls(mask=mask.copy())
        active = mask.copy()
        rows, cols = np.indices((h, w))
        while not active.all():
            nb_idx = []
            nb_ok = []
            for dr, dc in _NEIGHBOURS:
                r, c = rows + dr, cols + dc
                inside = (r >= 0) & (r < h) & (c >= 0) & (c < w)
                rc, cc = np.clip(r, 0, h - 1), np.clip(c, 0, w - 1)
                nb_idx.append(rc * w + cc)
                nb_ok.append(inside & active[rc, cc])
            nb_idx = np.stack(nb_idx, axis=-1)
            nb_ok = np.stack(nb_ok, axis=-1)
            counts = nb_ok.sum(axis=-1)
            frontier = ~active & (counts > 0)
            flat = np.flatnonzero(frontier)
            plan.steps.append(
                _Step(
                    targets=flat,
                    sources=nb_idx.reshape(-1, 4)[flat],
                    valid=nb_ok.reshape(-1, 4)[flat],
                    counts=counts.ravel()[flat].astype(np.float64),
                )
            )
            active = active | frontier
        plan._compile_smoothing()
        return plan

    def _compile_smoothing(self, radius: int = 2) -> None:
        h, w = self.mask.shape
        kernel = inverse_distance_kernel(radius)
        size = 2 * radius + 1
        targets = np.flatnonzero(~self.mask)
        r0, c0 = np.divmod(targets, w)
        sources = np.zeros((targets.size, size * size), dtype=np.int64)
        weights = np.zeros((targets.size, size * size))
        for k, (dr, dc) in enumerate(np.ndindex(size, size)):
            r, c = r0 + dr - radius, c0 + dc - radius
            inside = (r >= 0) & (r < h) & (c >= 0) & (c < w)
            sources[:, k] = np.where(inside, r * w + c, 0)
            weights[:, k] = np.where(inside, kernel[dr, dc], 0.0)
        # renormalise over in-bounds taps
        weights /= weights.sum(axis=1, keepdims=True)
        # initially active pixels keep their value: identity rows
        keep = np.flatnonzero(self.mask)
        rows = np.concatenate([np.repeat(targets, size * size), keep])
        cols = np.concatenate([sources.ravel(), keep])
        vals = np.concatenate([weights.ravel(), np.ones(keep.size)])
        self.smoother = sparse.csr_matrix((vals, (rows, cols)), shape=(h * w, h * w))

    @property
    def iterations(self) -> int:
        return len(self.steps)

    def propagate(self, disp: np.ndarray) -> np.ndarray:
        if disp.shape != self.mask.shape:
            raise DimensionMismatch(f"disparity {disp.shape} vs mask {self.mask.shape}")
        values = np.where(self.mask, disp, 0.0).ravel()
        for step in self.steps:
            gathered = np.where(step.valid, values[step.sources], 0.0)
            values[step.targets] = gathered.sum(axis=1) / step.counts
        return values.reshape(self.mask.shape)

    def smooth(self, filled: np.ndarray) -> np.ndarray:
        return (self.smoother @ filled.ravel()).reshape(filled.shape)

    def apply(self, disp: np.ndarray) -> np.ndarray:
        """Propagate then smooth: the filled target for ``disp``."""
        return self.smooth(self.propagate(disp))


def propagate(disp, mask) -> FillResult:
    d = validate_disparity(disp)
    m = validate_mask(mask)
    if d.shape != m.shape:
        raise DimensionMismatch(f"disparity {d.shape} vs mask {m.shape}")
    plan = FillPlan.from_mask(m)
    return FillResult(plan.propagate(d), plan.iterations, m)


def smooth(fill: FillResult) -> np.ndarray:
    """One inverse-distance smoothing pass over the initially inactive pixels."""
    if fill.filled.shape != fill.initially_active.shape:
        raise DimensionMismatch("filled map and mask differ in shape")
    if not np.isfinite(fill.filled).all():
        raise IncompleteFill("filled map still has unfilled (non-finite) pixels")
    plan = FillPlan(mask=validate_mask(fill.initially_active))
    plan._compile_smoothing()
    return plan.smooth(np.asarray(fill.filled, dtype=np.float64))


def fill_disparity(disp, gray, threshold: float = DEFAULT_THRESHOLD) -> tuple[np.ndarray, np.ndarray]:
    """Filled disparity map and the texture mask it was built from."""
    d = validate_disparity(disp)
    g = gray_of(gray)
    if g.shape[:2] != d.shape:
        raise DimensionMismatch(f"disparity {d.shape} vs image {g.shape[:2]}")
    mask = texture_mask(g, threshold)
    return FillPlan.from_mask(mask).apply(d), mask
