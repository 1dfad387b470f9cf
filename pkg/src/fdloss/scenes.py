"""Synthetic rectified stereo scenes with exact ground-truth disparity.

A scene is a background plane plus axis-aligned fronto-parallel rectangles,
each at constant disparity and covered by seeded value-noise texture. Both
views are painted from the same texture functions: a layer pixel at left
column ``j`` shows texture coordinate ``j`` and the same surface point appears
at right column ``j - d``. Layers are painted in list order in both views, so
later regions occlude earlier ones.

Camera pitch/roll is mimicked by an in-plane rotation (roll) and a vertical
shear (pitch) applied identically to both views and the disparity maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import affine_transform

from .core import OutOfRange, RegionOutOfBounds, UnknownFixture
from .texture import texture_mask, texturedness
from .warp import StereoPair

DATASETS = ("N", "R", "P", "PR")
DEFAULT_SIGMA_DEG = 10.0


@dataclass(frozen=True)
class Layer:
    true_disparity: float
    texture_amplitude: float
    texture_cell: int = 4
    base: float = 0.5


@dataclass(frozen=True)
class Region(Layer):
    x: int = 0
    y: int = 0
    width: int = 0
    height: int = 0


@dataclass(frozen=True)
class SceneSpec:
    width: int = 256
    height: int = 128
    background: Layer = field(default_factory=lambda: Layer(4.0, 0.5))
    regions: tuple[Region, ...] = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        for layer in (self.background, *self.regions):
            if not layer.true_disparity >= 0:
                raise OutOfRange(f"disparity must be >= 0, got {layer.true_disparity}")
            if not 0 <= layer.texture_amplitude <= 1:
                raise OutOfRange(f"texture amplitude must lie in [0, 1], got {layer.texture_amplitude}")
            if layer.texture_cell < 1:
                raise OutOfRange("texture cell must be >= 1 pixel")
        for k, r in enumerate(self.regions):
            if r.width <= 0 or r.height <= 0:
                raise RegionOutOfBounds(f"region {k} has empty extent")
            if r.x < 0 or r.y < 0 or r.x + r.width > self.width or r.y + r.height > self.height:
                raise RegionOutOfBounds(
                    f"region {k} ({r.x},{r.y},{r.width}x{r.height}) exceeds {self.width}x{self.height}"
                )

    @property
    def layers(self) -> tuple[Layer, ...]:
        return (self.background, *self.regions)


@dataclass(frozen=True)
class RotationSample:
    pitch_deg: float = 0.0
    roll_deg: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.pitch_deg) and math.isfinite(self.roll_deg)):
            raise OutOfRange("rotation angles must be finite")


def sample_rotation(dataset: str, sigma_deg: float = DEFAULT_SIGMA_DEG, rng=None) -> RotationSample:
    """Draw camera pitch/roll for one frame of dataset ``N``, ``R``, ``P`` or ``PR``.

    ``rng`` is a ``numpy.random.Generator`` (or a seed). Dataset N never draws
    from the generator.
    """
    if dataset not in DATASETS:
        raise ValueError(f"dataset must be one of {DATASETS}, got {dataset!r}")
    if sigma_deg < 0:
        raise OutOfRange("sigma_deg must be >= 0")
    rng = np.random.default_rng(rng)
    pitch = float(rng.normal(0.0, sigma_deg)) if "P" in dataset else 0.0
    roll = float(rng.normal(0.0, sigma_deg)) if "R" in dataset else 0.0
    return RotationSample(pitch, roll)


@dataclass(frozen=True)
class RenderedScene:
    pair: StereoPair
    disparity: np.ndarray  # left-view ground truth
    disparity_right: np.ndarray
    visible: np.ndarray  # left pixels also seen by the right camera
    rotation: RotationSample
    spec: SceneSpec

    @property
    def texturedness(self) -> float:
        return texturedness(texture_mask(self.pair.left))

    def metadata(self) -> dict:
        return {
            "pitch_deg": self.rotation.pitch_deg,
            "roll_deg": self.rotation.roll_deg,
            "texturedness": self.texturedness,
            "seed": self.spec.seed,
        }


class _ValueNoise:
    """Bilinearly interpolated lattice noise in ``[-1, 1]``."""

    def __init__(self, rng: np.random.Generator, rows: float, cols: float, cell: int):
        self.cell = cell
        self.lattice = rng.uniform(-1.0, 1.0, size=(int(rows // cell) + 3, int(cols // cell) + 3))

    def __call__(self, y: np.ndarray, x: np.ndarray) -> np.ndarray:
        gy, gx = y / self.cell, x / self.cell
        y0, x0 = np.floor(gy).astype(int), np.floor(gx).astype(int)
        ty, tx = gy - y0, gx - x0
        lat = self.lattice
        top = lat[y0, x0] * (1 - tx) + lat[y0, x0 + 1] * tx
        bottom = lat[y0 + 1, x0] * (1 - tx) + lat[y0 + 1, x0 + 1] * tx
        return top * (1 - ty) + bottom * ty


def _render_views(spec: SceneSpec):
    h, w = spec.height, spec.width
    left = np.zeros((h, w))
    right = np.zeros((h, w))
    d_left = np.zeros((h, w))
    d_right = np.zeros((h, w))
    id_left = np.zeros((h, w), dtype=int)
    id_right = np.zeros((h, w), dtype=int)
    rows, cols = np.indices((h, w), dtype=np.float64)

    for k, layer in enumerate(spec.layers):
        d = float(layer.true_disparity)
        noise = _ValueNoise(np.random.default_rng([spec.seed, k]), h, w + math.ceil(d), layer.texture_cell)

        def paint(tex_x):
            value = layer.base + 0.5 * layer.texture_amplitude * noise(rows, tex_x)
            return np.clip(value, 0.0, 1.0)

        if isinstance(layer, Region):
            in_left = (
                (cols >= layer.x) & (cols < layer.x + layer.width) & (rows >= layer.y) & (rows < layer.y + layer.height)
            )
            shifted = cols + d
            in_right = (
                (shifted >= layer.x)
                & (shifted < layer.x + layer.width)
                & (rows >= layer.y)
                & (rows < layer.y + layer.height)
            )
        else:
            in_left = in_right = np.ones((h, w), dtype=bool)
        left = np.where(in_left, paint(cols), left)
        right = np.where(in_right, paint(cols + d), right)
        d_left[in_left] = d
        d_right[in_right] = d
        id_left[in_left] = k
        id_right[in_right] = k
    return left, right, d_left, d_right, id_left, id_right


def _visibility(d_left: np.ndarray, id_left: np.ndarray, id_right: np.ndarray) -> np.ndarray:
    h, w = d_left.shape
    x = np.arange(w)[None, :] - d_left
    inside = (x >= 0) & (x <= w - 1)
    xc = np.clip(x, 0, w - 1)
    rows = np.arange(h)[:, None]
    lo = id_right[rows, np.floor(xc).astype(int)]
    hi = id_right[rows, np.ceil(xc).astype(int)]
    return inside & (lo == id_left) & (hi == id_left)


def _rotate(arr: np.ndarray, rotation: RotationSample, order: int) -> np.ndarray:
    """Roll about the image centre, then shear rows by ``tan(pitch)`` per column."""
    h, w = arr.shape
    c = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    a = math.radians(rotation.roll_deg)
    rot = np.array([[math.cos(a), math.sin(a)], [-math.sin(a), math.cos(a)]])
    shear = np.array([[1.0, math.tan(math.radians(rotation.pitch_deg))], [0.0, 1.0]])
    forward = shear @ rot  # input (row, col) offsets -> output offsets
    inverse = np.linalg.inv(forward)
    offset = c - inverse @ c
    return affine_transform(arr, inverse, offset=offset, order=order, mode="nearest")


def render_stereo(spec: SceneSpec, rotation: RotationSample | None = None) -> RenderedScene:
    rotation = rotation or RotationSample()
    left, right, d_left, d_right, id_left, id_right = _render_views(spec)
    visible = _visibility(d_left, id_left, id_right)
    if rotation.pitch_deg != 0 or rotation.roll_deg != 0:
        left = np.clip(_rotate(left, rotation, 1), 0.0, 1.0)
        right = np.clip(_rotate(right, rotation, 1), 0.0, 1.0)
        d_left = _rotate(d_left, rotation, 0)
        d_right = _rotate(d_right, rotation, 0)
        visible = _rotate(visible.astype(np.float64), rotation, 0) > 0.5
    pair = StereoPair(left[:, :, None], right[:, :, None])
    return RenderedScene(pair, d_left, d_right, visible, rotation, spec)


# -- presets ----------------------------------------------------------------


def untextured_wall_spec(
    wall_fraction: float = 0.65,
    width: int = 256,
    height: int = 128,
    wall_disparity: float = 6.0,
    background_disparity: float = 2.0,
    rim: int = 6,
    seed: int = 0,
) -> SceneSpec:
    """Textured background with a centred wall covering ``wall_fraction`` of the frame.

    The wall is untextured except for a textured ``rim`` pixels wide at the
    wall's own disparity; without the rim the wall's disparity would only be
    observable along its occluding right edge.
    """
    side = math.sqrt(wall_fraction)
    ww = max(1, round(width * side))
    wh = max(1, round(height * side))
    x, y = (width - ww) // 2, (height - wh) // 2
    regions = []
    if rim > 0:
        regions.append(Region(wall_disparity, 0.5, x=x, y=y, width=ww, height=wh))
    inner_w, inner_h = ww - 2 * rim, wh - 2 * rim
    if inner_w > 0 and inner_h > 0:
        regions.append(Region(wall_disparity, 0.0, x=x + rim, y=y + rim, width=inner_w, height=inner_h))
    return SceneSpec(width, height, Layer(background_disparity, 0.5), tuple(regions), seed)


def _textured_shift(width, height, seed):
    return SceneSpec(width, height, Layer(4.0, 0.5), (), seed)


def _framed_hole(width, height, seed):
    border = max(2, min(width, height) // 8)
    hole = Region(5.0, 0.0, base=0.5, x=border, y=border, width=width - 2 * border, height=height - 2 * border)
    return SceneSpec(width, height, Layer(5.0, 0.5), (hole,), seed)


def _multi_plane(width, height, seed):
    third = height // 3
    bands = (
        Region(4.0, 0.25, texture_cell=6, base=0.45, x=0, y=third, width=width, height=third),
        Region(8.0, 0.0, base=0.65, x=0, y=2 * third, width=width, height=height - 2 * third),
    )
    return SceneSpec(width, height, Layer(2.0, 0.6), bands, seed)


FIXTURES = {
    "textured_shift": _textured_shift,
    "untextured_wall": lambda width, height, seed: untextured_wall_spec(width=width, height=height, seed=seed),
    "framed_hole": _framed_hole,
    "multi_plane": _multi_plane,
}


def fixture(name: str, width: int = 256, height: int = 128, seed: int = 0) -> SceneSpec:
    try:
        build = FIXTURES[name]
    except KeyError:
        raise UnknownFixture(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None
    return build(width, height, seed)


# -- plain-text serialisation ----------------------------------------------


def _layer_lines(layer: Layer) -> list[str]:
    lines = [
        f"true_disparity = {layer.true_disparity!r}",
        f"texture_amplitude = {layer.texture_amplitude!r}",
        f"texture_cell = {layer.texture_cell}",
        f"base = {layer.base!r}",
    ]
    if isinstance(layer, Region):
        lines += [f"x = {layer.x}", f"y = {layer.y}", f"width = {layer.width}", f"height = {layer.height}"]
    return lines


def spec_to_text(spec: SceneSpec) -> str:
    """``key = value`` lines; one ``background`` block and one ``region`` block per region."""
    lines = [f"width = {spec.width}", f"height = {spec.height}", f"seed = {spec.seed}", "", "background"]
    lines += ["  " + s for s in _layer_lines(spec.background)]
    for r in spec.regions:
        lines += ["", "region"] + ["  " + s for s in _layer_lines(r)]
    return "\n".join(lines) + "\n"


_INT_KEYS = {"width", "height", "seed", "texture_cell", "x", "y"}


def spec_from_text(text: str) -> SceneSpec:
    top: dict = {}
    blocks: list[tuple[str, dict]] = []
    current = top
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line in ("background", "region"):
            current = {}
            blocks.append((line, current))
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"expected 'key = value', got {raw!r}")
        key = key.strip()
        current[key] = int(value) if key in _INT_KEYS else float(value)
    # a region's width/height keys share names with the scene's
    background = Layer(4.0, 0.5)
    regions = []
    for kind, values in blocks:
        if kind == "background":
            background = Layer(**values)
        else:
            regions.append(Region(**values))
    return SceneSpec(
        width=int(top.get("width", 256)),
        height=int(top.get("height", 128)),
        background=background,
        regions=tuple(regions),
        seed=int(top.get("seed", 0)),
    )


def with_seed(spec: SceneSpec, seed: int) -> SceneSpec:
    return replace(spec, seed=seed)
