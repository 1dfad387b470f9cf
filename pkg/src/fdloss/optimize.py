"""Direct per-pixel disparity optimisation with Adam."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import CameraRig, LossWeights, NonFiniteLoss, OutOfRange, check_same_grid, validate_mask
from .grad import loss_and_grad
from .losses import NUM_SCALES, TERM_NAMES, PreparedPair
from .metrics import DepthMetricsReport, depth_metrics, disp_to_depth
from .warp import StereoPair

log = logging.getLogger(__name__)

JITTER = 0.1


@dataclass(frozen=True)
class OptimizerConfig:
    steps: int = 1000
    learning_rate: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    init_disparity: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise OutOfRange("steps must be >= 1")
        if not self.learning_rate > 0:
            raise OutOfRange("learning_rate must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise OutOfRange("beta1 and beta2 must lie in [0, 1)")
        if not self.epsilon > 0:
            raise OutOfRange("epsilon must be > 0")
        if not self.init_disparity >= 0:
            raise OutOfRange("init_disparity must be >= 0")


@dataclass(frozen=True)
class OptimizeTrace:
    totals: np.ndarray  # (steps,) loss before each update
    terms: np.ndarray  # (steps, 8) per-term values summed over scales
    d_left: np.ndarray
    d_right: np.ndarray

    def __len__(self) -> int:
        return len(self.totals)

    term_names = TERM_NAMES


def initial_disparity(shape: tuple[int, int], cfg: OptimizerConfig) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(cfg.seed)
    d_left = cfg.init_disparity + rng.uniform(0.0, JITTER, size=shape)
    d_right = cfg.init_disparity + rng.uniform(0.0, JITTER, size=shape)
    return d_left, d_right


class Adam:
    def __init__(self, shape, cfg: OptimizerConfig):
        self.cfg = cfg
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        c = self.cfg
        self.t += 1
        self.m = c.beta1 * self.m + (1 - c.beta1) * g
        self.v = c.beta2 * self.v + (1 - c.beta2) * g * g
        m_hat = self.m / (1 - c.beta1**self.t)
        v_hat = self.v / (1 - c.beta2**self.t)
        return x - c.learning_rate * m_hat / (np.sqrt(v_hat) + c.epsilon)


def optimize_disparity(
    pair: StereoPair,
    w: LossWeights,
    cfg: OptimizerConfig,
    levels: int = NUM_SCALES,
    prepared: PreparedPair | None = None,
) -> OptimizeTrace:
    """Minimise the total loss over both disparity maps, clamping them at 0."""
    prep = prepared or PreparedPair(pair, levels)
    d_left, d_right = initial_disparity(pair.shape, cfg)
    # both maps share one Adam state; the update is element-wise anyway
    adam = Adam((2,) + pair.shape, cfg)
    x = np.stack([d_left, d_right])
    totals = np.empty(cfg.steps)
    terms = np.empty((cfg.steps, len(TERM_NAMES)))
    for step in range(cfg.steps):
        breakdown, g = loss_and_grad(prep, x[0], x[1], w)
        if not np.isfinite(breakdown.total):
            raise NonFiniteLoss(step, breakdown.total)
        totals[step] = breakdown.total
        terms[step] = np.sum([t.as_tuple() for t in breakdown.scales], axis=0)
        x = np.maximum(adam.step(x, np.stack([g.d_dleft, g.d_dright])), 0.0)
        if step % 100 == 0:
            log.debug("step %d loss %.6g", step, breakdown.total)
    return OptimizeTrace(totals, terms, x[0], x[1])


@dataclass(frozen=True)
class RunEvaluation:
    all: DepthMetricsReport
    active: DepthMetricsReport | None
    inactive: DepthMetricsReport | None

    def regions(self) -> dict[str, DepthMetricsReport | None]:
        return {"all": self.all, "active": self.active, "inactive": self.inactive}


def evaluate_run(trace: OptimizeTrace, d_true, rig: CameraRig, mask, valid=None) -> RunEvaluation:
    """Depth metrics of the final left disparity over all, active and inactive pixels.

    ``valid`` optionally restricts every region (e.g. to non-occluded pixels).
    A region with no pixels reports ``None``.
    """
    d_true = np.asarray(d_true, dtype=np.float64)
    mask = validate_mask(mask)
    check_same_grid(trace.d_left, d_true, mask)
    base = np.ones(mask.shape, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    depth = disp_to_depth(trace.d_left, rig)
    depth_true = disp_to_depth(d_true, rig)

    def region(sel):
        if not sel.any():
            return None
        return depth_metrics(depth, depth_true, sel)

    return RunEvaluation(depth_metrics(depth, depth_true, base), region(base & mask), region(base & ~mask))
