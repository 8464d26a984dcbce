"""Multi-region colour and texture descriptors for person images.

An image is resized to 126x64 and described by 20 channels: five feature
families (HS, RGB, Lab, HOG, LBP) over four horizontal components (the full
image plus upper, middle and lower thirds).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import cv2
import numpy as np
from skimage import color as skcolor

from .errors import ComponentTooSmall, EmptyImage

HEIGHT = 126
WIDTH = 64

FAMILIES = ("HS", "RGB", "Lab", "HOG", "LBP")
COLOR_FAMILIES = ("HS", "RGB", "Lab")
COMPONENTS = ("full", "upper", "middle", "lower")


@dataclass(frozen=True)
class ComponentSpec:
    kind: str
    row_range: tuple[int, int]

    @property
    def rows(self) -> int:
        return self.row_range[1] - self.row_range[0]


COMPONENT_SPECS = {
    "full": ComponentSpec("full", (0, HEIGHT)),
    "upper": ComponentSpec("upper", (0, 42)),
    "middle": ComponentSpec("middle", (42, 84)),
    "lower": ComponentSpec("lower", (84, HEIGHT)),
}


@dataclass(frozen=True, order=True)
class ChannelId:
    family: str
    component: str

    def __str__(self) -> str:
        return f"{self.family}_{self.component}"

    @classmethod
    def parse(cls, text: str) -> "ChannelId":
        family, component = text.split("_", 1)
        if family not in FAMILIES or component not in COMPONENTS:
            raise ValueError(f"unknown channel {text!r}")
        return cls(family, component)


ALL_CHANNELS = tuple(ChannelId(f, c) for f in FAMILIES for c in COMPONENTS)


@dataclass(frozen=True)
class PersonImage:
    pixels: np.ndarray  # (126, 64, 3) uint8
    source_id: str = ""
    camera_id: str = "a"
    sample_index: int = 0


@dataclass(frozen=True)
class ChannelDescriptor:
    """One feature vector made of equally sized histogram blocks.

    ``block_norm`` is ``"l1"`` for colour and LBP histograms and ``"l2"``
    for HOG blocks.
    """

    channel: ChannelId
    values: np.ndarray
    block_size: int
    block_norm: str = "l1"

    def blocks(self) -> np.ndarray:
        return self.values.reshape(-1, self.block_size)


@dataclass(frozen=True)
class GaussianWeightMap:
    weights: np.ndarray
    sigma_x: float
    sigma_y: float


@dataclass(frozen=True)
class DescriptorConfig:
    hs_bins: int = 16
    rgb_bins: int = 32
    lab_bins: int = 32
    stripe_height: int = 16
    stripe_stride: int = 8
    sigma_x: float = WIDTH / 4
    sigma_y: float = math.inf
    border: int = 6
    hog_cell: int = 8
    hog_block: int = 2
    hog_bins: int = 4
    hog_eps: float = 1.0
    components: dict = field(default_factory=lambda: dict(COMPONENT_SPECS))


def normalize_image(raw, source_id: str = "", camera_id: str = "a",
                    sample_index: int = 0) -> PersonImage:
    """Stretch an RGB image to 126x64 with bilinear interpolation."""
    raw = np.asarray(raw)
    if raw.ndim != 3 or raw.shape[2] != 3:
        if raw.ndim >= 2 and 0 in raw.shape[:2]:
            raise EmptyImage(f"image has shape {raw.shape}")
        raise ValueError(f"expected an HxWx3 image, got shape {raw.shape}")
    if raw.shape[0] == 0 or raw.shape[1] == 0:
        raise EmptyImage(f"image has shape {raw.shape}")
    if raw.dtype != np.uint8:
        raw = np.clip(np.rint(raw.astype(np.float64)), 0, 255).astype(np.uint8)
    if raw.shape[:2] == (HEIGHT, WIDTH):
        pixels = raw.copy()
    else:
        pixels = cv2.resize(raw, (WIDTH, HEIGHT), interpolation=cv2.INTER_LINEAR)
    pixels.setflags(write=False)
    return PersonImage(pixels, source_id, camera_id, sample_index)


def gaussian_weight_map(sigma_x: float = WIDTH / 4, sigma_y: float = math.inf,
                        shape: tuple[int, int] = (HEIGHT, WIDTH)) -> GaussianWeightMap:
    """Separable Gaussian centred on the image; ``inf`` disables an axis."""
    h, w = shape
    ys = np.arange(h) - (h - 1) / 2
    xs = np.arange(w) - (w - 1) / 2
    wx = np.ones(w) if math.isinf(sigma_x) else np.exp(-xs**2 / (2 * sigma_x**2))
    wy = np.ones(h) if math.isinf(sigma_y) else np.exp(-ys**2 / (2 * sigma_y**2))
    weights = np.outer(wy, wx)
    weights.setflags(write=False)
    return GaussianWeightMap(weights, sigma_x, sigma_y)


def stripe_ranges(component: ComponentSpec, height: int = 16, stride: int = 8):
    """Overlapping stripes covering a component band.

    Stripes start every ``stride`` rows; when the last regular stripe stops
    short of the band end, one extra stripe aligned to the band bottom is
    added so that every row is covered.
    """
    r0, r1 = component.row_range
    if r1 - r0 <= height:
        return [(r0, r1)]
    starts = list(range(r0, r1 - height + 1, stride))
    if starts[-1] + height < r1:
        starts.append(r1 - height)
    return [(s, s + height) for s in starts]


def _l1(hist: np.ndarray) -> np.ndarray:
    total = hist.sum()
    if total <= 0:
        return np.zeros_like(hist)
    return hist / total


def _bin(values: np.ndarray, lo: float, hi: float, bins: int) -> np.ndarray:
    idx = np.floor((values - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def _color_indices(pixels: np.ndarray, family: str, cfg: DescriptorConfig):
    """Per-pixel bin indices, one (H, W) array per histogram block."""
    if family == "HS":
        hsv = skcolor.rgb2hsv(pixels)
        b = cfg.hs_bins
        joint = _bin(hsv[..., 0], 0.0, 1.0, b) * b + _bin(hsv[..., 1], 0.0, 1.0, b)
        return [joint], b * b
    if family == "RGB":
        b = cfg.rgb_bins
        return [_bin(pixels[..., k].astype(np.float64), 0.0, 256.0, b) for k in range(3)], b
    if family == "Lab":
        lab = skcolor.rgb2lab(pixels)  # sRGB, D65
        b = cfg.lab_bins
        return [_bin(lab[..., 0], 0.0, 100.0, b),
                _bin(lab[..., 1], -128.0, 128.0, b),
                _bin(lab[..., 2], -128.0, 128.0, b)], b
    raise ValueError(f"not a colour family: {family}")


def extract_color(img: PersonImage, family: str, component: ComponentSpec,
                  w: GaussianWeightMap, cfg: DescriptorConfig = DescriptorConfig(),
                  _indices=None) -> ChannelDescriptor:
    indices, nbins = _indices if _indices is not None else _color_indices(img.pixels, family, cfg)
    blocks = []
    for r0, r1 in stripe_ranges(component, cfg.stripe_height, cfg.stripe_stride):
        weights = w.weights[r0:r1].ravel()
        for idx in indices:
            hist = np.bincount(idx[r0:r1].ravel(), weights=weights, minlength=nbins)
            blocks.append(_l1(hist))
    return ChannelDescriptor(ChannelId(family, component.kind), np.concatenate(blocks), nbins)


def _gray(pixels: np.ndarray) -> np.ndarray:
    p = pixels.astype(np.float64)
    return 0.299 * p[..., 0] + 0.587 * p[..., 1] + 0.114 * p[..., 2]


def _inner_rows(component: ComponentSpec, border: int, height: int = HEIGHT):
    """Component rows after border removal, in cropped-image coordinates."""
    r0 = max(component.row_range[0], border) - border
    r1 = min(component.row_range[1], height - border) - border
    return r0, max(r0, r1)


def orientation_bins(gray: np.ndarray, nbins: int = 4):
    """Gradient magnitude and unsigned orientation bin per pixel.

    Bins are centred on multiples of 180/nbins degrees, so with four bins a
    horizontal gradient (vertical edge) falls in bin 0 and a vertical
    gradient in bin 2.
    """
    gy, gx = np.gradient(gray)
    mag = np.hypot(gx, gy)
    angle = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    width = 180.0 / nbins
    bins = np.floor((angle + width / 2) / width).astype(np.int64) % nbins
    return mag, bins


def hog_cells(gray: np.ndarray, cell: int = 8, nbins: int = 4) -> np.ndarray:
    """Magnitude-weighted orientation histograms on a grid of square cells.

    Returns an array of shape (rows // cell, cols // cell, nbins); trailing
    pixels that do not fill a cell are ignored.
    """
    mag, bins = orientation_bins(gray, nbins)
    return _cell_histograms(mag, bins, cell, nbins)


def _cell_histograms(mag, bins, cell, nbins):
    ny, nx = mag.shape[0] // cell, mag.shape[1] // cell
    mag = mag[:ny * cell, :nx * cell]
    bins = bins[:ny * cell, :nx * cell]
    cy = (np.arange(ny * cell) // cell)[:, None]
    cx = (np.arange(nx * cell) // cell)[None, :]
    flat = ((cy * nx + cx) * nbins + bins).ravel()
    hist = np.bincount(flat, weights=mag.ravel(), minlength=ny * nx * nbins)
    return hist.reshape(ny, nx, nbins)


def _hog_blocks(cells: np.ndarray, block: int, eps: float) -> np.ndarray:
    ny, nx, nbins = cells.shape
    out = []
    for i in range(ny - block + 1):
        for j in range(nx - block + 1):
            v = cells[i:i + block, j:j + block].ravel()
            norm = math.sqrt(float(v @ v) + eps**2)
            out.append(v / norm if v.any() else np.zeros_like(v))
    return np.concatenate(out)


def extract_hog(img: PersonImage, component: ComponentSpec,
                cfg: DescriptorConfig = DescriptorConfig(), _grad=None) -> ChannelDescriptor:
    b = cfg.border
    if _grad is None:
        inner = _gray(img.pixels)[b:HEIGHT - b, b:WIDTH - b]
        _grad = orientation_bins(inner, cfg.hog_bins)
    mag, bins = _grad
    r0, r1 = _inner_rows(component, b)
    need = cfg.hog_cell * cfg.hog_block
    if r1 - r0 < need or mag.shape[1] < need:
        raise ComponentTooSmall(
            f"component {component.kind!r} has {r1 - r0} rows after border removal; "
            f"HOG needs at least {need}")
    cells = _cell_histograms(mag[r0:r1], bins[r0:r1], cfg.hog_cell, cfg.hog_bins)
    values = _hog_blocks(cells, cfg.hog_block, cfg.hog_eps)
    return ChannelDescriptor(ChannelId("HOG", component.kind), values,
                             cfg.hog_block**2 * cfg.hog_bins, "l2")


def _transitions(code: int) -> int:
    bits = [(code >> k) & 1 for k in range(8)]
    return sum(bits[k] != bits[(k + 1) % 8] for k in range(8))


UNIFORM_CODES = tuple(c for c in range(256) if _transitions(c) <= 2)
_UNIFORM_LUT = np.full(256, -1, dtype=np.int64)
_UNIFORM_LUT[list(UNIFORM_CODES)] = np.arange(len(UNIFORM_CODES))


def _snap(v: float) -> float:
    r = round(v)
    return float(r) if abs(v - r) < 1e-9 else v


def lbp_codes(gray: np.ndarray) -> np.ndarray:
    """8-neighbour radius-1 LBP codes for every pixel with a full neighbourhood.

    Bit k is set when the neighbour at angle 2*pi*k/8 is >= the centre.
    Off-grid neighbours are bilinearly interpolated. The output is two
    pixels smaller than the input in each dimension.
    """
    h, w = gray.shape
    centre = gray[1:h - 1, 1:w - 1]

    def shifted(dy, dx):
        return gray[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx]

    codes = np.zeros(centre.shape, dtype=np.int64)
    for k in range(8):
        theta = 2 * math.pi * k / 8
        dy, dx = _snap(-math.sin(theta)), _snap(math.cos(theta))
        y0, x0 = math.floor(dy), math.floor(dx)
        fy, fx = dy - y0, dx - x0
        p00 = shifted(y0, x0)
        value = p00
        if fx:
            value = value + fx * (shifted(y0, x0 + 1) - p00)
        if fy:
            value = value + fy * (shifted(y0 + 1, x0) - p00)
        if fx and fy:
            value = value + fx * fy * (shifted(y0 + 1, x0 + 1) - shifted(y0 + 1, x0)
                                       - shifted(y0, x0 + 1) + p00)
        codes |= (value >= centre).astype(np.int64) << k
    return codes


def extract_lbp(img: PersonImage, component: ComponentSpec,
                cfg: DescriptorConfig = DescriptorConfig(), _codes=None) -> ChannelDescriptor:
    b = cfg.border
    if _codes is None:
        _codes = lbp_codes(_gray(img.pixels)[b:HEIGHT - b, b:WIDTH - b])
    r0, r1 = _inner_rows(component, b)
    # codes exist for cropped rows 1..n-2
    r0, r1 = max(r0 - 1, 0), min(r1 - 1, _codes.shape[0])
    if r1 - r0 < 1:
        raise ComponentTooSmall(f"component {component.kind!r} is empty after border removal")
    labels = _UNIFORM_LUT[_codes[r0:r1].ravel()]
    hist = np.bincount(labels[labels >= 0], minlength=len(UNIFORM_CODES)).astype(np.float64)
    return ChannelDescriptor(ChannelId("LBP", component.kind), _l1(hist), len(UNIFORM_CODES))


def extract_all(img: PersonImage, cfg: DescriptorConfig = DescriptorConfig(),
                w: GaussianWeightMap | None = None) -> list[ChannelDescriptor]:
    """All 20 channel descriptors, ordered by (family, component)."""
    if w is None:
        w = gaussian_weight_map(cfg.sigma_x, cfg.sigma_y)
    b = cfg.border
    inner = _gray(img.pixels)[b:HEIGHT - b, b:WIDTH - b]
    grad = orientation_bins(inner, cfg.hog_bins)
    codes = lbp_codes(inner)
    out = []
    for family in FAMILIES:
        indices = _color_indices(img.pixels, family, cfg) if family in COLOR_FAMILIES else None
        for name in COMPONENTS:
            comp = cfg.components[name]
            if family in COLOR_FAMILIES:
                out.append(extract_color(img, family, comp, w, cfg, _indices=indices))
            elif family == "HOG":
                out.append(extract_hog(img, comp, cfg, _grad=grad))
            else:
                out.append(extract_lbp(img, comp, cfg, _codes=codes))
    return out


def descriptor_dims(cfg: DescriptorConfig = DescriptorConfig()) -> dict[ChannelId, int]:
    """Vector length of every channel; identical for all images."""
    blank = normalize_image(np.zeros((HEIGHT, WIDTH, 3), dtype=np.uint8))
    return {d.channel: d.values.size for d in extract_all(blank, cfg)}


def stack_descriptors(per_image: list[list[ChannelDescriptor]]) -> dict[ChannelId, np.ndarray]:
    """Turn per-image descriptor lists into one (n, d) matrix per channel."""
    if not per_image:
        return {}
    channels = [d.channel for d in per_image[0]]
    return {ch: np.vstack([descs[k].values for descs in per_image])
            for k, ch in enumerate(channels)}
