"""Analytic gradients of the loss terms with respect to the disparity maps.

Conventions: the L1 subgradient at zero is 0, clamped samples have zero slope,
and the filled-disparity target is a constant (no gradient flows through the
filler).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LossWeights, NonFiniteValue, as_image, check_same_grid
from .losses import (
    NUM_SCALES,
    LossBreakdown,
    PreparedPair,
    ScaleTerms,
    box3_adjoint,
    edge_weights,
    forward_diffs,
    pool2_adjoint,
    ssim_stats,
)
from .warp import LEFT, RIGHT, StereoPair, gather, sample_coords, sample_positions


@dataclass(frozen=True)
class GradField:
    d_dleft: np.ndarray
    d_dright: np.ndarray

    def __post_init__(self):
        for name in ("d_dleft", "d_dright"):
            g = getattr(self, name)
            if not np.isfinite(g).all():
                raise NonFiniteValue(f"{name} has non-finite entries")


def _coord_sign(side: str) -> float:
    # d(sample column)/d(disparity)
    if side == LEFT:
        return -1.0
    if side == RIGHT:
        return 1.0
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def _recon(image, other, d, side, ssim_alpha) -> tuple[float, np.ndarray]:
    h, w, c = image.shape
    samples = sample_positions(sample_coords(d, side), w)
    rec, slope = gather(other, samples)
    st = ssim_stats(image, rec)
    diff = rec - image
    scale = 1.0 / (h * w * c)
    value = float((ssim_alpha * (1 - st.ssim) / 2 + (1 - ssim_alpha) * np.abs(diff)).mean())

    # SSIM quotient rule over mu_y, E[xy] and E[y^2]
    up = -ssim_alpha / 2 * scale * st.ssim
    g_mu = up * (2 * st.mu_x / st.a1 - 2 * st.mu_x / st.a2 - 2 * st.mu_y / st.b1 + 2 * st.mu_y / st.b2)
    g_xy = up * 2 / st.a2
    g_yy = -up / st.b2
    d_rec = box3_adjoint(g_mu) + image * box3_adjoint(g_xy) + 2 * rec * box3_adjoint(g_yy)
    d_rec += (1 - ssim_alpha) * scale * np.sign(diff)

    grad = (d_rec * slope).sum(axis=2) * _coord_sign(side)
    return value, grad


def _smooth(d, wx, wy) -> tuple[float, np.ndarray]:
    n = d.size
    dx, dy = forward_diffs(d)
    value = float((np.abs(dx) * wx + np.abs(dy) * wy).mean())
    sx = np.sign(dx) * wx / n
    sy = np.sign(dy) * wy / n
    grad = np.zeros_like(d)
    grad[:, 1:] += sx[:, :-1]
    grad[:, :-1] -= sx[:, :-1]
    grad[1:, :] += sy[:-1, :]
    grad[:-1, :] -= sy[:-1, :]
    return value, grad


def _lr(d_self, d_other, side) -> tuple[float, np.ndarray, np.ndarray]:
    h, w = d_self.shape
    n = d_self.size
    samples = sample_positions(sample_coords(d_self, side), w)
    proj, slope = gather(d_other, samples)
    resid = d_self - proj
    value = float(np.abs(resid).mean())
    sg = np.sign(resid) / n
    g_self = sg * (1 - slope * _coord_sign(side))
    rows = np.arange(h)[:, None] * w
    g_other = np.bincount((rows + samples.x0).ravel(), (-sg * (1 - samples.t)).ravel(), minlength=n)
    g_other += np.bincount((rows + samples.x1).ravel(), (-sg * samples.t).ravel(), minlength=n)
    return value, g_self, g_other.reshape(h, w)


def _fd(d, target) -> tuple[float, np.ndarray]:
    diff = d - target
    return float(np.abs(diff).mean()), np.sign(diff) / d.size


def grad_recon(image, image_other, d, side: str, ssim_alpha: float = 0.85) -> np.ndarray:
    """Gradient of the reconstruction loss of view ``side`` w.r.t. its disparity.

    ``image`` is the view being reconstructed and ``image_other`` the view it is
    sampled from.
    """
    image, image_other = as_image(image), as_image(image_other)
    d = np.asarray(d, dtype=np.float64)
    check_same_grid(image, image_other, d)
    return _recon(image, image_other, d, side, ssim_alpha)[1]


def grad_smooth(d, image) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    check_same_grid(d, as_image(image))
    return _smooth(d, *edge_weights(image))[1]


def grad_lr(d_self, d_other, side: str) -> tuple[np.ndarray, np.ndarray]:
    d_self = np.asarray(d_self, dtype=np.float64)
    d_other = np.asarray(d_other, dtype=np.float64)
    check_same_grid(d_self, d_other)
    _, g_self, g_other = _lr(d_self, d_other, side)
    return g_self, g_other


def grad_fd(d, d_filled) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    d_filled = np.asarray(d_filled, dtype=np.float64)
    check_same_grid(d, d_filled)
    return _fd(d, d_filled)[1]


def loss_and_grad(
    prep: PreparedPair, d_left, d_right, w: LossWeights, targets=None
) -> tuple[LossBreakdown, GradField]:
    """Loss breakdown and full-resolution gradients in one pass."""
    pl, pr = prep.disparity_pyramids(d_left, d_right)
    if targets is None:
        targets = [(lv.plan_left.apply(dl), lv.plan_right.apply(dr)) for lv, dl, dr in zip(prep.scales, pl, pr)]
    terms = []
    grads = []
    for lv, dl, dr, (tl, tr) in zip(prep.scales, pl, pr, targets):
        ir_l, g_ir_l = _recon(lv.left, lv.right, dl, LEFT, w.ssim_alpha)
        ir_r, g_ir_r = _recon(lv.right, lv.left, dr, RIGHT, w.ssim_alpha)
        ds_l, g_ds_l = _smooth(dl, lv.wx_left, lv.wy_left)
        ds_r, g_ds_r = _smooth(dr, lv.wx_right, lv.wy_right)
        lr_l, g_lr_ll, g_lr_lr = _lr(dl, dr, LEFT)
        lr_r, g_lr_rr, g_lr_rl = _lr(dr, dl, RIGHT)
        fd_l, g_fd_l = _fd(dl, tl)
        fd_r, g_fd_r = _fd(dr, tr)
        terms.append(ScaleTerms(ir_l, ir_r, ds_l, ds_r, lr_l, lr_r, fd_l, fd_r))
        gl = w.alpha_ap * g_ir_l + w.alpha_ds * g_ds_l + w.alpha_lr * (g_lr_ll + g_lr_rl) + w.alpha_fd * g_fd_l
        gr = w.alpha_ap * g_ir_r + w.alpha_ds * g_ds_r + w.alpha_lr * (g_lr_rr + g_lr_lr) + w.alpha_fd * g_fd_r
        grads.append((gl, gr))

    # back through the pyramid, coarsest first; each level pooled and halved
    acc_l, acc_r = grads[-1]
    for s in range(len(grads) - 2, -1, -1):
        shape = pl[s].shape
        acc_l = grads[s][0] + pool2_adjoint(acc_l, shape) / 2.0
        acc_r = grads[s][1] + pool2_adjoint(acc_r, shape) / 2.0

    totals = tuple(t.weighted(w) for t in terms)
    return LossBreakdown(tuple(terms), totals, float(sum(totals))), GradField(acc_l, acc_r)


def grad_total(
    pair: StereoPair, d_left, d_right, w: LossWeights, levels: int = NUM_SCALES, targets=None
) -> GradField:
    return loss_and_grad(PreparedPair(pair, levels), d_left, d_right, w, targets)[1]


def central_difference(fun, x: np.ndarray, pixels, h: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Central differences of scalar ``fun`` at the given ``(row, col)`` pixels.

    Also returns, per pixel, the gap between the forward and backward one-sided
    differences; a large gap flags a kink (L1 zero crossing, bilinear cell
    boundary) inside ``[x - h, x + h]`` where the derivative is not defined.
    """
    central = np.empty(len(pixels))
    gap = np.empty(len(pixels))
    f0 = fun(x)
    for k, (i, j) in enumerate(pixels):
        xp = x.copy()
        xp[i, j] += h
        xm = x.copy()
        xm[i, j] -= h
        fp, fm = fun(xp), fun(xm)
        central[k] = (fp - fm) / (2 * h)
        gap[k] = abs((fp - f0) - (f0 - fm)) / h
    return central, gap


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


@dataclass(frozen=True)
class GradientCheck:
    pixels: np.ndarray  # (n, 2) row, col
    analytic: np.ndarray
    numeric: np.ndarray

    @property
    def rel_error(self) -> np.ndarray:
        return relative_error(self.analytic, self.numeric, floor=1e-10)

    @property
    def max_rel_error(self) -> float:
        return float(self.rel_error.max()) if len(self.pixels) else 0.0


def gradient_check(
    fun,
    x: np.ndarray,
    analytic: np.ndarray,
    samples: int = 50,
    rng=None,
    h: float = 1e-3,
    kink_rtol: float = 1e-3,
) -> GradientCheck:
    """Compare ``analytic`` with central differences of ``fun`` at random pixels.

    Pixels are drawn without replacement; those whose one-sided differences
    disagree by more than ``kink_rtol`` (a kink inside the stencil) are skipped
    until ``samples`` usable pixels are found or candidates run out. A kink
    inside the stencil biases the central difference by up to about half the
    gap, so ``kink_rtol`` should sit below the accuracy being tested.
    """
    rng = np.random.default_rng(rng)
    order = rng.permutation(x.size)
    kept, num = [], []
    for start in range(0, order.size, max(samples, 1)):
        batch = [tuple(int(v) for v in np.unravel_index(k, x.shape)) for k in order[start : start + samples]]
        central, gap = central_difference(fun, x, batch, h)
        for p, c, g in zip(batch, central, gap):
            if g <= kink_rtol * max(abs(c), 1e-10) and len(kept) < samples:
                kept.append(p)
                num.append(c)
        if len(kept) >= samples:
            break
    pixels = np.array(kept, dtype=int).reshape(-1, 2)
    a = analytic[pixels[:, 0], pixels[:, 1]] if len(kept) else np.empty(0)
    return GradientCheck(pixels, np.asarray(a, dtype=np.float64), np.array(num))
