import numpy as np
import pytest

from fdloss.core import LossWeights
from fdloss.filler import fill_disparity
from fdloss.grad import (
    central_difference,
    grad_fd,
    grad_lr,
    grad_recon,
    grad_smooth,
    grad_total,
    gradient_check,
    loss_and_grad,
)
from fdloss.losses import (
    PreparedPair,
    filled_disparity_loss,
    image_recon_loss,
    lr_consistency_loss,
    smoothness_loss,
    total_loss,
)
from fdloss.warp import LEFT, RIGHT, StereoPair, warp

H, W = 12, 16


def _instance(seed):
    rng = np.random.default_rng(seed)
    left = rng.random((H, W, 3))
    right = rng.random((H, W, 3))
    dl = rng.uniform(0.3, 4.0, (H, W))
    dr = rng.uniform(0.3, 4.0, (H, W))
    return rng, left, right, dl, dr


@pytest.mark.parametrize("side", [LEFT, RIGHT])
@pytest.mark.parametrize("seed", [0, 1])
def test_recon_gradient(side, seed):
    rng, image, other, d, _ = _instance(seed)
    fun = lambda x: image_recon_loss(image, warp(other, x, side))  # noqa: E731
    chk = gradient_check(fun, d, grad_recon(image, other, d, side), 100, rng)
    assert len(chk.pixels) >= 50
    assert chk.max_rel_error < 1e-3


def test_smooth_gradient():
    rng, image, _, d, _ = _instance(2)
    chk = gradient_check(lambda x: smoothness_loss(x, image), d, grad_smooth(d, image), 100, rng)
    assert len(chk.pixels) >= 50
    assert chk.max_rel_error < 1e-3


@pytest.mark.parametrize("side", [LEFT, RIGHT])
def test_lr_gradients(side):
    rng, _, _, d_self, d_other = _instance(3)
    g_self, g_other = grad_lr(d_self, d_other, side)
    chk = gradient_check(lambda x: lr_consistency_loss(x, d_other, side), d_self, g_self, 100, rng)
    assert len(chk.pixels) >= 50 and chk.max_rel_error < 1e-3
    # only pixels that some sample touches carry a gradient on the other map
    fun = lambda x: lr_consistency_loss(d_self, x, side)  # noqa: E731
    chk = gradient_check(fun, d_other, g_other, 100, rng)
    assert len(chk.pixels) >= 50 and chk.max_rel_error < 1e-3


def test_fd_gradient_with_frozen_target():
    rng, image, _, d, _ = _instance(4)
    target, _ = fill_disparity(d + rng.uniform(-0.05, 0.05, d.shape), image)
    chk = gradient_check(lambda x: filled_disparity_loss(x, target), d, grad_fd(d, target), 100, rng)
    assert len(chk.pixels) >= 50 and chk.max_rel_error < 1e-3


def test_trivial_gradients():
    d = np.full((H, W), 2.0)
    img = np.random.default_rng(5).random((H, W))
    assert not grad_smooth(d, img).any()
    g_self, g_other = grad_lr(d, d, LEFT)
    assert not g_self.any() and not g_other.any()
    assert not grad_fd(d, d).any()
    np.testing.assert_array_equal(grad_fd(d + 1, d), np.full((H, W), 1 / d.size))


def test_lr_zero_self_scatters_to_other():
    d_other = np.random.default_rng(6).uniform(0.5, 2.0, (H, W))
    _, g_other = grad_lr(np.zeros((H, W)), d_other, LEFT)
    # the loss is mean |d_other| here, so the field is +sign(d_other) / N
    np.testing.assert_allclose(g_other, np.sign(d_other) / d_other.size)
    pixels = [(0, 0), (5, 7), (11, 15)]
    central, _ = central_difference(lambda x: lr_consistency_loss(np.zeros((H, W)), x, LEFT), d_other, pixels)
    np.testing.assert_allclose(central, [g_other[p] for p in pixels], rtol=1e-6)


def test_clamped_samples_have_zero_gradient():
    rng = np.random.default_rng(7)
    image, other = rng.random((H, W)), rng.random((H, W))
    d = np.full((H, W), W + 5.0)
    assert not grad_recon(image, other, d, LEFT).any()


def test_recon_gradient_vanishes_at_exact_reconstruction():
    right = np.tile(np.linspace(0.1, 0.9, W), (H, 1))
    d = np.full((H, W), 1.5)
    left = warp(right, d, LEFT)[:, :, 0]
    # SSIM is at its maximum and the L1 subgradient at 0 is 0
    np.testing.assert_allclose(grad_recon(left, right, d, LEFT), 0.0, atol=1e-12)


def test_zero_weights_give_zero_gradient():
    _, left, right, dl, dr = _instance(8)
    g = grad_total(StereoPair(left, right), dl, dr, LossWeights(0, 0, 0, 0))
    assert not g.d_dleft.any() and not g.d_dright.any()


def test_single_scale_composition():
    _, left, right, dl, dr = _instance(9)
    w = LossWeights(0.7, 0.3, 0.9, 0.4, 0.85)
    prep = PreparedPair(StereoPair(left, right), levels=1)
    tl, tr = prep.fill_targets(dl, dr)[0]
    _, g = loss_and_grad(prep, dl, dr, w)
    gl_lr, gr_from_l = grad_lr(dl, dr, LEFT)
    gr_lr, gl_from_r = grad_lr(dr, dl, RIGHT)
    manual_l = (
        w.alpha_ap * grad_recon(left, right, dl, LEFT)
        + w.alpha_ds * grad_smooth(dl, left)
        + w.alpha_lr * (gl_lr + gl_from_r)
        + w.alpha_fd * grad_fd(dl, tl)
    )
    manual_r = (
        w.alpha_ap * grad_recon(right, left, dr, RIGHT)
        + w.alpha_ds * grad_smooth(dr, right)
        + w.alpha_lr * (gr_lr + gr_from_l)
        + w.alpha_fd * grad_fd(dr, tr)
    )
    np.testing.assert_allclose(g.d_dleft, manual_l, rtol=0, atol=1e-12)
    np.testing.assert_allclose(g.d_dright, manual_r, rtol=0, atol=1e-12)


@pytest.mark.parametrize("seed", [10, 11])
def test_total_gradient_multiscale(seed):
    rng, left, right, dl, dr = _instance(seed)
    pair = StereoPair(left, right)
    w = LossWeights()
    prep = PreparedPair(pair)
    targets = prep.fill_targets(dl + rng.uniform(-0.05, 0.05, dl.shape), dr + rng.uniform(-0.05, 0.05, dr.shape))
    g = grad_total(pair, dl, dr, w, targets=targets)
    fun_l = lambda x: total_loss(pair, x, dr, w, targets=targets).total  # noqa: E731
    fun_r = lambda x: total_loss(pair, dl, x, w, targets=targets).total  # noqa: E731
    for fun, x, ga in ((fun_l, dl, g.d_dleft), (fun_r, dr, g.d_dright)):
        chk = gradient_check(fun, x, ga, 50, rng)
        assert len(chk.pixels) >= 50
        assert chk.max_rel_error < 1e-2


def test_central_difference_flags_kinks():
    x = np.array([[0.0, 1.0]])
    central, gap = central_difference(lambda v: float(np.abs(v).sum()), x, [(0, 0), (0, 1)])
    assert gap[0] > 1.0 and gap[1] == pytest.approx(0.0, abs=1e-9)
    assert central[1] == pytest.approx(1.0)
