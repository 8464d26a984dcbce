import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mckcca.descriptor import (ALL_CHANNELS, COMPONENT_SPECS, COMPONENTS, HEIGHT, UNIFORM_CODES, WIDTH,
                               ChannelId, DescriptorConfig, PersonImage, descriptor_dims,
                               extract_all, extract_color, extract_hog, extract_lbp,
                               gaussian_weight_map, hog_cells, lbp_codes, normalize_image,
                               stripe_ranges)
from mckcca.errors import ComponentTooSmall, EmptyImage


def constant(rgb, shape=(HEIGHT, WIDTH)):
    return np.broadcast_to(np.array(rgb, dtype=np.uint8), shape + (3,)).copy()


def bilinear_reference(img, out_h, out_w):
    """Half-pixel-centre bilinear resampling written out pixel by pixel."""
    h, w = img.shape[:2]
    src = img.astype(np.float64)
    out = np.empty((out_h, out_w) + img.shape[2:])
    for i in range(out_h):
        y = min(max((i + 0.5) * h / out_h - 0.5, 0), h - 1)
        y0 = int(np.floor(y))
        y1 = min(y0 + 1, h - 1)
        fy = y - y0
        for j in range(out_w):
            x = min(max((j + 0.5) * w / out_w - 0.5, 0), w - 1)
            x0 = int(np.floor(x))
            x1 = min(x0 + 1, w - 1)
            fx = x - x0
            out[i, j] = ((1 - fy) * ((1 - fx) * src[y0, x0] + fx * src[y0, x1])
                         + fy * ((1 - fx) * src[y1, x0] + fx * src[y1, x1]))
    return out


# normalisation

def test_normalize_identity_size():
    raw = np.random.default_rng(0).integers(0, 256, (HEIGHT, WIDTH, 3), dtype=np.uint8)
    img = normalize_image(raw)
    assert img.pixels.shape == (HEIGHT, WIDTH, 3)
    np.testing.assert_array_equal(img.pixels, raw)


def test_normalize_constant_colour():
    img = normalize_image(constant((10, 20, 30), (252, 128)))
    assert img.pixels.shape == (HEIGHT, WIDTH, 3)
    assert np.all(img.pixels == np.array([10, 20, 30], dtype=np.uint8))


def test_normalize_checkerboard_matches_reference():
    yy, xx = np.mgrid[:63, :32]
    board = np.where((yy + xx) % 2 == 0, 255, 0).astype(np.uint8)
    raw = np.repeat(board[..., None], 3, axis=2)
    out = normalize_image(raw).pixels.astype(np.float64)
    ref = bilinear_reference(raw, HEIGHT, WIDTH)
    assert np.max(np.abs(out - ref)) <= 1.0  # uint8 rounding
    assert abs(out.mean() - raw.mean()) <= 1.0


def test_normalize_rejects_empty():
    with pytest.raises(EmptyImage):
        normalize_image(np.zeros((0, 10, 3), dtype=np.uint8))


# geometry

def test_components_partition_full_band():
    assert COMPONENT_SPECS["full"].row_range == (0, HEIGHT)
    covered = np.zeros(HEIGHT, dtype=int)
    for name in ("upper", "middle", "lower"):
        r0, r1 = COMPONENT_SPECS[name].row_range
        assert r1 - r0 == 42
        covered[r0:r1] += 1
    # region additivity: each row counted once, so pixel counts add up
    assert np.all(covered == 1)
    assert covered.sum() * WIDTH == HEIGHT * WIDTH


@pytest.mark.parametrize("name", COMPONENTS)
def test_stripes_cover_band(name):
    comp = COMPONENT_SPECS[name]
    stripes = stripe_ranges(comp)
    rows = set()
    for s0, s1 in stripes:
        assert s1 - s0 == 16
        rows.update(range(s0, s1))
    assert rows == set(range(*comp.row_range))


def test_twenty_channels():
    assert len(set(ALL_CHANNELS)) == 20
    assert len(ALL_CHANNELS) * 4 == 80


def test_weight_map_peaks_at_centre():
    w = gaussian_weight_map().weights
    assert w.shape == (HEIGHT, WIDTH)
    assert np.all((w >= 0) & (w <= 1))
    row = w[0]
    left = row[:WIDTH // 2]
    assert np.all(np.diff(left) > 0)
    np.testing.assert_allclose(row, row[::-1])
    assert np.argmax(row) in (WIDTH // 2 - 1, WIDTH // 2)


# colour

@pytest.mark.parametrize("family", ["HS", "RGB", "Lab"])
def test_constant_colour_is_one_hot(family):
    img = normalize_image(constant((200, 40, 90)))
    w = gaussian_weight_map()
    d = extract_color(img, family, COMPONENT_SPECS["full"], w)
    for block in d.blocks():
        assert np.isclose(block.max(), 1.0)
        assert np.count_nonzero(block) == 1


def test_red_blue_halves_have_equal_mass():
    raw = np.zeros((HEIGHT, WIDTH, 3), dtype=np.uint8)
    raw[:, :WIDTH // 2, 0] = 255
    raw[:, WIDTH // 2:, 2] = 255
    img = normalize_image(raw)
    w = gaussian_weight_map()
    d = extract_color(img, "RGB", COMPONENT_SPECS["full"], w)
    blocks = d.blocks()
    r, b = blocks[0::3], blocks[2::3]
    # brute-force weighted count of the red-side pixels in one stripe
    red_mass = w.weights[0:16, :WIDTH // 2].sum() / w.weights[0:16].sum()
    for rb, bb in zip(r, b):
        assert np.count_nonzero(rb) == 2 and np.count_nonzero(bb) == 2
        np.testing.assert_allclose([rb[-1], rb[0]], [red_mass, 1 - red_mass], atol=1e-12)
        np.testing.assert_allclose(rb[-1], bb[-1], atol=1e-6)


def test_zero_weight_map_gives_zero_descriptor():
    img = normalize_image(constant((1, 2, 3)))
    w = gaussian_weight_map()
    zero = type(w)(np.zeros_like(w.weights), w.sigma_x, w.sigma_y)
    for family in ("HS", "RGB", "Lab"):
        d = extract_color(img, family, COMPONENT_SPECS["upper"], zero)
        assert not d.values.any()


# HOG

def test_hog_constant_is_zero():
    d = extract_hog(normalize_image(constant((90, 90, 90))), COMPONENT_SPECS["full"])
    assert not d.values.any()


def step_edge(n=48, vertical=True):
    g = np.zeros((n, n))
    if vertical:
        g[:, n // 2 + 4:] = 255.0
    else:
        g[n // 2 + 4:, :] = 255.0
    return g


def test_hog_vertical_edge_uses_horizontal_gradient_bin():
    cells = hog_cells(step_edge(vertical=True))
    mass = cells.sum(axis=(0, 1))
    assert mass[0] > 0
    np.testing.assert_allclose(mass[1:], 0)
    # only the cells straddling the edge column see any gradient
    col_mass = cells.sum(axis=(0, 2))
    assert np.count_nonzero(col_mass) == 1


def test_hog_rotation_moves_mass_to_orthogonal_bin():
    v = hog_cells(step_edge(vertical=True))
    h = hog_cells(step_edge(vertical=False))
    np.testing.assert_allclose(h[..., 2], np.transpose(v[..., 0]), atol=1e-12)
    np.testing.assert_allclose(h.sum(axis=(0, 1))[[0, 1, 3]], 0)


def test_hog_full_image_edge():
    raw = np.zeros((HEIGHT, WIDTH, 3), dtype=np.uint8)
    raw[:, 35:] = 255
    d = extract_hog(normalize_image(raw), COMPONENT_SPECS["full"])
    blocks = d.blocks().reshape(-1, 4, 4)  # (block, cell, bin)
    assert blocks[..., 0].sum() > 0
    np.testing.assert_allclose(blocks[..., 1:], 0)


def test_hog_rejects_tiny_band():
    from mckcca.descriptor import ComponentSpec
    with pytest.raises(ComponentTooSmall):
        extract_hog(normalize_image(constant((0, 0, 0))), ComponentSpec("upper", (0, 10)))


# LBP

def test_uniform_pattern_count():
    assert len(UNIFORM_CODES) == 58 == 2 + 7 * 8


def test_lbp_constant_is_all_ones_pattern():
    d = extract_lbp(normalize_image(constant((77, 77, 77))), COMPONENT_SPECS["full"])
    assert d.values.size == 58
    assert np.count_nonzero(d.values) == 1
    assert d.values[UNIFORM_CODES.index(255)] == 1.0


def brute_lbp(gray):
    """Per-pixel LBP with explicit bilinear lookups."""
    h, w = gray.shape
    out = np.zeros((h - 2, w - 2), dtype=int)
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            code = 0
            for k in range(8):
                t = 2 * np.pi * k / 8
                py, px = y - np.sin(t), x + np.cos(t)
                py, px = np.round(py, 9), np.round(px, 9)
                y0, x0 = int(np.floor(py)), int(np.floor(px))
                fy, fx = py - y0, px - x0
                y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
                v = ((1 - fy) * ((1 - fx) * gray[y0, x0] + fx * gray[y0, x1])
                     + fy * ((1 - fx) * gray[y1, x0] + fx * gray[y1, x1]))
                if v >= gray[y, x] - 1e-9:  # interpolation round-off
                    code |= 1 << k
            out[y - 1, x - 1] = code
    return out


def test_lbp_codes_match_brute_force():
    gray = np.random.default_rng(3).integers(0, 256, (14, 17)).astype(np.float64)
    np.testing.assert_array_equal(lbp_codes(gray), brute_lbp(gray))


def test_lbp_noise_histogram():
    raw = np.random.default_rng(4).integers(0, 256, (HEIGHT, WIDTH, 3), dtype=np.uint8)
    img = normalize_image(raw)
    d = extract_lbp(img, COMPONENT_SPECS["full"])
    # brute-force count of uniform codes over the interior of the cropped image
    g = img.pixels.astype(np.float64) @ np.array([0.299, 0.587, 0.114])
    codes = lbp_codes(g[6:-6, 6:-6]).ravel()
    uniform = np.isin(codes, UNIFORM_CODES)
    assert 0 < uniform.mean() < 1  # some mass is discarded
    expected = np.array([np.sum(codes == c) for c in UNIFORM_CODES], dtype=float)
    np.testing.assert_allclose(d.values, expected / expected.sum(), atol=1e-12)
    assert abs(d.values.sum() - 1) < 1e-9


# full extraction

def test_extract_all_order_and_dims():
    raw = np.random.default_rng(5).integers(0, 256, (160, 60, 3), dtype=np.uint8)
    descs = extract_all(normalize_image(raw))
    assert [d.channel for d in descs] == list(ALL_CHANNELS)
    dims = descriptor_dims()
    assert {str(k): v for k, v in dims.items()} == {
        "HS_full": 3840, "HS_upper": 1280, "HS_middle": 1280, "HS_lower": 1280,
        "RGB_full": 1440, "RGB_upper": 480, "RGB_middle": 480, "RGB_lower": 480,
        "Lab_full": 1440, "Lab_upper": 480, "Lab_middle": 480, "Lab_lower": 480,
        "HOG_full": 1040, "HOG_upper": 240, "HOG_middle": 320, "HOG_lower": 240,
        "LBP_full": 58, "LBP_upper": 58, "LBP_middle": 58, "LBP_lower": 58,
    }
    for d in descs:
        assert d.values.size == dims[d.channel]


images = arrays(np.uint8, st.tuples(st.integers(20, 140), st.integers(12, 80), st.just(3)),
                elements=st.integers(0, 255))


@given(images)
def test_descriptor_invariants(raw):
    img = normalize_image(raw)
    descs = extract_all(img)
    again = extract_all(normalize_image(raw.copy()))
    dims = descriptor_dims()
    for d, e in zip(descs, again):
        np.testing.assert_array_equal(d.values, e.values)
        assert d.values.size == dims[d.channel]
        assert np.all(d.values >= 0)
        if d.block_norm == "l1":
            sums = d.blocks().sum(axis=1)
            assert np.all((np.abs(sums - 1) <= 1e-9) | (sums == 0))
        else:
            norms = np.linalg.norm(d.blocks(), axis=1)
            assert np.all(norms <= 1 + 1e-12)


def test_channel_id_round_trip():
    for ch in ALL_CHANNELS:
        assert ChannelId.parse(str(ch)) == ch


def test_person_image_fields():
    img = normalize_image(constant((0, 0, 0), (10, 10)), "p1", "b", 1)
    assert isinstance(img, PersonImage)
    assert (img.source_id, img.camera_id, img.sample_index) == ("p1", "b", 1)
    assert not img.pixels.flags.writeable


def test_config_changes_dims():
    cfg = DescriptorConfig(hs_bins=8)
    dims = descriptor_dims(cfg)
    assert dims[ChannelId("HS", "full")] == 15 * 64
