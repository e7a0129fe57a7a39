import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from omnidensity.augment import (
    ALIGN_TURNS,
    Tile,
    align_point,
    augment_image,
    augment_set,
    divide_and_align,
    downscale_and_tile,
    draw_angles,
    flip_horizontal,
    flip_point,
    image_rng,
    plan_variants,
    quadrant_of,
    replay_tile,
    rotate_about_center,
    rotate_point,
)
from omnidensity.density import Annotation, DistortionAdaptiveKernel, FixedKernel, render_density
from omnidensity.errors import NonSquareImage, OddDimensions
from omnidensity.geom import ProjectionParams
from omnidensity.resample import StereoImage


def stereo(size, channels=1, seed=0):
    data = np.random.default_rng(seed).random((size, size, channels)).astype(np.float32)
    return StereoImage(data, ProjectionParams.for_size(size))


def boxes(points, half=1.5):
    return [Annotation((u - half, v - half, u + half, v + half), (u, v)) for u, v in points]


def random_anns(rng, size, n, margin=2.0):
    pts = rng.uniform(margin, size - 1 - margin, (n, 2))
    return boxes(pts, half=min(1.5, margin))


def dist(p, c):
    return math.hypot(p[0] - c[0], p[1] - c[1])


# --- rotation --------------------------------------------------------------------

def test_rotation_examples():
    img = stereo(40)
    c = img.params.center
    a = 7.0
    anns = boxes([(c[0] + a, c[1])])
    out, got = rotate_about_center(img, anns, 0.0)
    assert np.array_equal(out.data, img.data) and got == anns
    _, got = rotate_about_center(img, anns, math.pi / 2)
    assert got[0].center == pytest.approx((c[0], c[1] + a), abs=1e-12)


@given(st.floats(0, 2 * math.pi))
def test_rotation_preserves_distance_to_centre(theta):
    rng = np.random.default_rng(5)
    img = stereo(64)
    anns = random_anns(rng, 64, 30)
    c = img.params.center
    out, got = rotate_about_center(img, anns, theta)
    kept = {a.center for a in got}
    assert len(got) <= len(anns)
    for a in anns:
        b = rotate_point(a.center, c, theta)
        if b in kept:
            assert abs(dist(b, c) - dist(a.center, c)) < 1e-9


def test_rotation_raster_masks_corners():
    img = stereo(64)
    out, _ = rotate_about_center(img, [], math.pi / 4)
    m = out.valid_mask()
    assert not m[0, 0] and not m[63, 63] and m[32, 32]
    assert np.all(out.data[~m] == 0)


def test_rotation_requires_square():
    img = StereoImage(np.zeros((10, 12)), ProjectionParams.for_size(12, 10))
    with pytest.raises(NonSquareImage):
        rotate_about_center(img, [], 0.3)


def test_flip_preserves_distance():
    img = stereo(32)
    anns = random_anns(np.random.default_rng(1), 32, 10)
    out, got = flip_horizontal(img, anns)
    assert np.array_equal(out.data, img.data[:, ::-1])
    for a, b in zip(anns, got):
        assert b.center == flip_point(a.center, 32)
        assert dist(b.center, out.params.center) == pytest.approx(dist(a.center, img.params.center), abs=1e-12)


# --- divide and align --------------------------------------------------------------

def test_alignment_puts_centre_pixel_at_origin():
    img = stereo(16, channels=3)
    tiles = {t.provenance["quadrant"]: t for t in divide_and_align(img, [])}
    src = img.data
    assert np.array_equal(tiles["NW"].raster[0, 0], src[7, 7])
    assert np.array_equal(tiles["NE"].raster[0, 0], src[7, 8])
    assert np.array_equal(tiles["SW"].raster[0, 0], src[8, 7])
    assert np.array_equal(tiles["SE"].raster[0, 0], src[8, 8])
    for t in tiles.values():
        assert t.center == (-0.5, -0.5)
        assert t.provenance["align_turns"] == ALIGN_TURNS[t.provenance["quadrant"]]


def test_alignment_point_map_matches_rot90():
    rng = np.random.default_rng(2)
    a = rng.random((5, 7))
    for k in range(4):
        r = np.rot90(a, k)
        for i in range(5):
            for j in range(7):
                u, v = align_point((j, i), k, 7, 5)
                assert r[int(v), int(u)] == a[i, j]


def test_object_near_centre_lands_at_upper_left():
    img = stereo(64)
    c = img.params.center
    tiles = divide_and_align(img, boxes([(c[0] + 0.6, c[1] + 0.6)], half=0.4))
    se = [t for t in tiles if t.provenance["quadrant"] == "SE"][0]
    assert se.count == 1
    assert se.annotations[0].center == pytest.approx((0.1, 0.1), abs=1e-12)


def test_count_preserved_across_quadrants():
    rng = np.random.default_rng(46)
    anns = random_anns(rng, 128, 46)
    tiles = divide_and_align(stereo(128), anns)
    assert sum(t.count for t in tiles) == 46


def test_symmetric_objects_align_identically():
    img = stereo(64)
    c = img.params.center
    p = (c[0] - 10.3, c[1] - 4.2)
    q = (2 * c[0] - p[0], 2 * c[1] - p[1])
    tiles = {t.provenance["quadrant"]: t for t in divide_and_align(img, boxes([p, q]))}
    a, b = tiles["NW"].annotations[0], tiles["SE"].annotations[0]
    assert a.center == pytest.approx(b.center, abs=1e-9)
    assert a.bbox == pytest.approx(b.bbox, abs=1e-9)


def test_quadrant_boundaries_half_open():
    assert quadrant_of((7.5, 7.5), 16, 16) == "SE"
    assert quadrant_of((7.4999, 7.5), 16, 16) == "SW"
    assert quadrant_of((7.5, 7.4999), 16, 16) == "NE"
    assert quadrant_of((0, 0), 16, 16) == "NW"


def test_odd_dimensions_rejected():
    with pytest.raises(OddDimensions):
        divide_and_align(stereo(15), [])


def test_density_commutes_with_quarter_turns():
    size = 64
    rng = np.random.default_rng(3)
    anns = random_anns(rng, size, 25)
    c = ((size - 1) / 2, (size - 1) / 2)
    for spec in (FixedKernel(sigma=3), DistortionAdaptiveKernel(sigma_alpha=12)):
        base = render_density(anns, (size, size), spec=spec).values
        for k in range(1, 4):
            moved = [align_point(a.center, k, size, size) for a in anns]
            turned = render_density(moved, (size, size), center=c, spec=spec).values
            assert np.max(np.abs(turned - np.rot90(base, k))) < 1e-9


def test_density_commutes_with_alignment_inside_quadrants():
    size = 128
    rng = np.random.default_rng(4)
    spec = DistortionAdaptiveKernel(sigma_alpha=12, d_norm=64, sigma_max=5)
    # keep kernels (<= 4 * 5 px) away from the quadrant edges
    pts = [p for p in rng.uniform(0, size - 1, (200, 2))
           if all(21 < x < 42 or 85 < x < 106 for x in p)]
    anns = boxes(pts)
    full = render_density(anns, (size, size), spec=spec).values
    for t in divide_and_align(stereo(size), anns, d_norm=64):
        ox, oy = t.provenance["quadrant_offset"]
        k = t.provenance["align_turns"]
        cut = np.rot90(full[oy:oy + 64, ox:ox + 64], k)
        tile_spec = DistortionAdaptiveKernel(sigma_alpha=12, d_norm=t.provenance["d_norm"], sigma_max=5)
        local = render_density(t.annotations, (64, 64), center=t.center, spec=tile_spec).values
        assert np.max(np.abs(local - cut)) < 1e-9


# --- batch augmentation -----------------------------------------------------------------

def test_angles_in_open_interval():
    rng = image_rng(0, "x")
    thetas = draw_angles(rng, 1000)
    assert all(0 < t < math.pi / 2 for t in thetas)
    plan = plan_variants("img", 2, True, 7)
    assert [f for f, _ in plan] == [False] * 3 + [True] * 3
    assert plan[0][1] == 0.0 and plan[3][1] == 0.0


@pytest.mark.parametrize("n_rot, flip, expected", [(0, False, 4), (2, True, 24), (1, False, 8), (3, True, 32)])
def test_augment_cardinality(n_rot, flip, expected):
    tiles = augment_set([("a", stereo(16), [])], n_rotations=n_rot, flip=flip, rng_seed=1)
    assert len(tiles) == expected


def test_augment_counts_and_distance_preserved():
    rng = np.random.default_rng(8)
    size = 64
    img = stereo(size)
    anns = random_anns(rng, size, 40)
    c0 = img.params.center
    exact = [dist(a.center, c0) for a in anns]
    radii = sorted(round(r, 6) for r in exact)
    tiles = augment_image("img", img, anns, n_rotations=3, flip=True, seed=11)
    by_variant = {}
    for t in tiles:
        key = (t.provenance["flip"], t.provenance["theta"])
        by_variant.setdefault(key, []).append(t)
    assert len(by_variant) == 8
    for group in by_variant.values():
        dropped = group[0].provenance["dropped"]
        assert sum(t.count for t in group) + dropped == len(anns)
        got = []
        for t in group:
            for a in t.annotations:
                got.append(dist(a.center, t.center))
        if dropped == 0:
            assert sorted(round(g, 6) for g in got) == radii
        for g in got:
            assert min(abs(g - r) for r in exact) < 1e-9


def test_augment_is_deterministic_and_worker_independent():
    rng = np.random.default_rng(9)
    items = [(f"im{i}", stereo(32, seed=i), random_anns(rng, 32, 8)) for i in range(3)]
    a = augment_set(items, n_rotations=2, flip=True, rng_seed=5)
    b = augment_set(items, n_rotations=2, flip=True, rng_seed=5, workers=3)
    c = augment_set(items[::-1], n_rotations=2, flip=True, rng_seed=5)
    assert len(a) == len(b) == 72
    for x, y in zip(a, b):
        assert x.raster.tobytes() == y.raster.tobytes()
        assert x.annotations == y.annotations and x.provenance == y.provenance
    # per-image streams do not depend on processing order
    thetas = lambda ts, name: [t.provenance["theta"] for t in ts if t.provenance["source_id"] == name]
    assert thetas(a, "im0") == thetas(c, "im0")
    d = augment_set(items, n_rotations=2, flip=True, rng_seed=6)
    assert thetas(a, "im0") != thetas(d, "im0")


def test_replay_reproduces_tiles():
    rng = np.random.default_rng(10)
    img = stereo(32, channels=3)
    anns = random_anns(rng, 32, 12)
    for t in augment_image("r", img, anns, n_rotations=2, flip=True, seed=3):
        r = replay_tile(img, anns, t.provenance)
        assert r.raster.tobytes() == t.raster.tobytes()
        assert r.mask.tobytes() == t.mask.tobytes()
        assert r.annotations == t.annotations and r.provenance == t.provenance
        for s in downscale_and_tile(t, 8, 4):
            rs = replay_tile(img, anns, s.provenance)
            assert rs.raster.tobytes() == s.raster.tobytes() and rs.annotations == s.annotations


# --- downscale and tile ------------------------------------------------------------------

def _tile_from(size, anns):
    return divide_and_align(stereo(2 * size), anns)[3]


def test_downscale_2048_to_four_512_tiles():
    tile = Tile(np.zeros((2048, 2048, 3), np.float32), np.ones((2048, 2048), bool),
                tuple(boxes([(1500, 1500), (100, 1900), (30, 30)])), {"center": [-0.5, -0.5], "d_norm": 2048.0})
    out = downscale_and_tile(tile, target=1024, tile_size=512)
    assert len(out) == 4
    assert all(t.raster.shape[:2] == (512, 512) for t in out)
    assert sum(t.count for t in out) == tile.count == 3
    assert out[0].provenance["scale"] == 0.5


def test_downscale_centre_annotation_goes_to_exactly_one_tile():
    tile = Tile(np.zeros((64, 64, 1), np.float32), np.ones((64, 64), bool),
                tuple(boxes([(31.5, 31.5)], half=1)), {"center": [31.5, 31.5], "d_norm": 32.0})
    out = downscale_and_tile(tile, target=32, tile_size=16)
    hits = [t for t in out if t.count]
    assert len(hits) == 1 and hits[0].provenance["tile_offset"] == [16, 16]
    assert hits[0].annotations[0].center == pytest.approx((-0.5, -0.5))
    assert hits[0].provenance["center"] == pytest.approx([-0.5, -0.5])


def test_downscale_empty_and_mapping():
    tile = _tile_from(64, [])
    out = downscale_and_tile(tile, target=32, tile_size=16)
    assert len(out) == 4 and all(t.count == 0 for t in out)
    assert out[0].provenance["d_norm"] == pytest.approx(tile.provenance["d_norm"] / 2)
    assert out[0].provenance["center"] == pytest.approx([-0.5, -0.5])
    with pytest.raises(ValueError):
        downscale_and_tile(tile, target=30, tile_size=16)


def test_downscale_keeps_distance_ratio():
    rng = np.random.default_rng(12)
    anns = random_anns(rng, 256, 40)
    tile = _tile_from(128, anns)
    before = sorted(dist(a.center, tile.center) for a in tile.annotations)
    out = downscale_and_tile(tile, target=64, tile_size=32)
    after = []
    for t in out:
        ox, oy = t.provenance["tile_offset"]
        for a in t.annotations:
            after.append(dist((a.center[0] + ox, a.center[1] + oy),
                              (t.center[0] + ox, t.center[1] + oy)))
    scale = out[0].provenance["scale"]
    for x, y in zip(before, sorted(after)):
        assert abs(x * scale - y) < 0.5 * scale + 1e-9
