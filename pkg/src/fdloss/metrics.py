"""Depth conversion, error metrics and covariate-binned summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .core import (
    CameraRig,
    CovariateOutOfRange,
    DimensionMismatch,
    EmptyValidSet,
    ZeroGroundTruthDepth,
)

DELTA_THRESHOLDS = (1.25, 1.25**2, 1.25**3)


def disp_to_depth(d, rig: CameraRig) -> np.ndarray:
    """Depth ``b * f / d`` clamped to the rig's range; ``d = 0`` saturates to max."""
    d = np.asarray(d, dtype=np.float64)
    with np.errstate(divide="ignore"):
        depth = np.where(d > 0, rig.baseline_m * rig.focal_px / np.where(d > 0, d, 1.0), np.inf)
    return np.clip(depth, rig.depth_min_m, rig.depth_max_m)


def depth_to_disp(depth, rig: CameraRig) -> np.ndarray:
    depth = np.asarray(depth, dtype=np.float64)
    return rig.baseline_m * rig.focal_px / depth


@dataclass(frozen=True)
class DepthMetricsReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta_1: float
    delta_2: float
    delta_3: float
    pixel_count: int

    @classmethod
    def columns(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, name) for name in self.columns())


def depth_metrics(depth, depth_true, valid=None) -> DepthMetricsReport:
    depth = np.asarray(depth, dtype=np.float64)
    depth_true = np.asarray(depth_true, dtype=np.float64)
    if depth.shape != depth_true.shape:
        raise DimensionMismatch(f"{depth.shape} vs {depth_true.shape}")
    if valid is None:
        valid = np.ones(depth.shape, dtype=bool)
    else:
        valid = np.asarray(valid, dtype=bool)
        if valid.shape != depth.shape:
            raise DimensionMismatch(f"valid mask {valid.shape} vs depth {depth.shape}")
    pred = depth[valid]
    gt = depth_true[valid]
    if pred.size == 0:
        raise EmptyValidSet("no valid pixels to evaluate")
    if (gt <= 0).any():
        raise ZeroGroundTruthDepth("ground-truth depth must be positive on valid pixels")

    err = pred - gt
    ratio = np.maximum(pred / gt, gt / pred)
    return DepthMetricsReport(
        abs_rel=float(np.mean(np.abs(err) / gt)),
        sq_rel=float(np.mean(err**2 / gt)),
        rmse=float(np.sqrt(np.mean(err**2))),
        rmse_log=float(np.sqrt(np.mean((np.log(pred) - np.log(gt)) ** 2))),
        delta_1=float(np.mean(ratio < DELTA_THRESHOLDS[0])),
        delta_2=float(np.mean(ratio < DELTA_THRESHOLDS[1])),
        delta_3=float(np.mean(ratio < DELTA_THRESHOLDS[2])),
        pixel_count=int(pred.size),
    )


@dataclass(frozen=True)
class Sample:
    covariate: float
    depth: np.ndarray
    depth_true: np.ndarray
    valid: np.ndarray | None = None


@dataclass(frozen=True)
class BinStats:
    lower: float
    upper: float
    count: int
    pooled: DepthMetricsReport | None
    mean_abs_rel: float
    mean_rmse: float
    abs_rel_p25: float
    abs_rel_p50: float
    abs_rel_p75: float


@dataclass(frozen=True)
class BinnedReport:
    covariate: str
    edges: tuple[float, ...]
    bins: tuple[BinStats, ...]

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(b.count for b in self.bins)


def _bin_index(value: float, edges: np.ndarray) -> int:
    # half-open bins, except the last one also takes its upper edge
    if not edges[0] <= value <= edges[-1]:
        raise CovariateOutOfRange(f"covariate {value!r} outside [{edges[0]}, {edges[-1]}]")
    k = int(np.searchsorted(edges, value, side="right")) - 1
    return min(k, len(edges) - 2)


def bin_metrics(samples, edges, covariate: str = "covariate") -> BinnedReport:
    """Per-bin pooled metrics plus per-sample mean and percentile summaries.

    ``samples`` are :class:`Sample` objects or ``(covariate, depth, depth_true
    [, valid])`` tuples. Percentiles use linear interpolation.
    """
    samples = [s if isinstance(s, Sample) else Sample(*s) for s in samples]
    if not samples:
        raise EmptyValidSet("bin_metrics needs at least one sample")
    edges = np.asarray(edges, dtype=np.float64)
    if edges.ndim != 1 or edges.size < 2 or not (np.diff(edges) > 0).all():
        raise ValueError("edges must be a strictly ascending sequence of at least two values")

    members: list[list[Sample]] = [[] for _ in range(edges.size - 1)]
    for s in samples:
        members[_bin_index(s.covariate, edges)].append(s)

    bins = []
    for k, group in enumerate(members):
        if not group:
            bins.append(BinStats(edges[k], edges[k + 1], 0, None, *([math.nan] * 5)))
            continue
        per_sample = [depth_metrics(s.depth, s.depth_true, s.valid) for s in group]
        pooled = depth_metrics(
            np.concatenate([np.asarray(s.depth, dtype=np.float64)[_valid(s)] for s in group]),
            np.concatenate([np.asarray(s.depth_true, dtype=np.float64)[_valid(s)] for s in group]),
        )
        abs_rels = np.array([m.abs_rel for m in per_sample])
        p25, p50, p75 = np.percentile(abs_rels, [25, 50, 75])
        bins.append(
            BinStats(
                float(edges[k]),
                float(edges[k + 1]),
                len(group),
                pooled,
                float(abs_rels.mean()),
                float(np.mean([m.rmse for m in per_sample])),
                float(p25),
                float(p50),
                float(p75),
            )
        )
    return BinnedReport(covariate, tuple(float(e) for e in edges), tuple(bins))


def _valid(s: Sample) -> np.ndarray:
    if s.valid is None:
        return np.ones(np.shape(s.depth), dtype=bool)
    return np.asarray(s.valid, dtype=bool)
