import numpy as np
import pytest

from fdloss.core import ImageTooSmall, WrongChannelCount
from fdloss.texture import sobel7, texture_mask, texturedness

from oracles import sobel_dense


def test_constant_image_has_no_gradient():
    g = sobel7(np.full((10, 12), 0.3))
    assert not g.gx.any() and not g.gy.any() and not g.magnitude.any()
    assert not texture_mask(np.full((10, 12), 0.3)).any()


def test_matches_dense_oracle():
    img = np.random.default_rng(1).random((16, 16))
    g = sobel7(img)
    gx, gy = sobel_dense(img)
    np.testing.assert_allclose(g.gx, gx, atol=1e-5)
    np.testing.assert_allclose(g.gy, gy, atol=1e-5)


def test_horizontal_ramp():
    img = np.tile(np.arange(16) / 16, (16, 1))
    g = sobel7(img)
    gx, _ = sobel_dense(img)
    np.testing.assert_allclose(g.gx, gx, atol=1e-12)
    inner = (slice(3, -3), slice(3, -3))
    assert np.abs(g.gy[inner]).max() < 1e-12
    assert np.allclose(g.gx[inner], g.gx[3, 3]) and g.gx[3, 3] > 0


def test_vertical_step_edge():
    img = np.zeros((12, 20))
    img[:, 10:] = 1.0
    mask = texture_mask(img)
    # partial sums of the derivative taps across the step: 1, 5, 10, 10, 5, 1
    per_col = np.array([1, 5, 10, 10, 5, 1]) / 10
    assert mask[:, 8:12].all()
    # the outermost columns sit exactly at the threshold, which is strict
    assert not mask[:, :8].any() and not mask[:, 12:].any()
    mag = sobel7(img).magnitude
    np.testing.assert_allclose(mag[5, 7:13] / mag.max(), per_col)


def test_threshold_zero_marks_all_nonzero():
    img = np.random.default_rng(2).random((9, 9))
    mag = sobel7(img).magnitude
    np.testing.assert_array_equal(texture_mask(img, threshold=0.0), mag > 0)


def test_scale_invariant():
    img = np.random.default_rng(3).random((10, 10)) * 0.5
    np.testing.assert_array_equal(texture_mask(img), texture_mask(img * 2))


def test_too_small_and_channels():
    with pytest.raises(ImageTooSmall):
        sobel7(np.zeros((6, 10)))
    assert sobel7(np.zeros((4, 4)), strict=False).gx.shape == (4, 4)
    with pytest.raises(WrongChannelCount):
        sobel7(np.zeros((8, 8, 3)))


@pytest.mark.parametrize(
    "mask, expected",
    [(np.ones((3, 3), bool), 1.0), (np.zeros((3, 3), bool), 0.0), (np.eye(4, dtype=bool), 0.25)],
)
def test_texturedness(mask, expected):
    assert texturedness(mask) == expected
