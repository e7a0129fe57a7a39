"""Rotate-divide-align augmentation for stereographic images.

A stereographic image is (optionally) flipped, rotated by a random angle
about its centre, cut into four quadrants, and each quadrant is turned by a
multiple of 90 degrees so that the original image centre sits at its
upper-left corner.  Every step is an isometry that fixes the image centre,
so each object's distance to the centre (and with it the local
stereographic distortion) is the same in every sample.

Conventions: pixel centres at integer (u, v), v pointing down.  A rotation
by ``theta`` maps ``(c + a, c)`` to ``(c, c + a)`` for ``theta = pi/2``.
Quadrant alignment counts quarter turns like :func:`numpy.rot90`
(counter-clockwise as displayed): NW 2, NE 3, SW 1, SE 0.
"""
from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .density import Annotation
from .errors import NonSquareImage, OddDimensions
from .resample import StereoImage, warp_affine

QUADRANTS = ("NW", "NE", "SW", "SE")
ALIGN_TURNS = {"NW": 2, "NE": 3, "SW": 1, "SE": 0}


@dataclass(eq=False)
class Tile:
    """A training sample: raster, validity mask, annotations and provenance.

    ``provenance["center"]`` is the original stereographic centre in this
    tile's pixel coordinates and ``provenance["d_norm"]`` the distance
    normalisation in this tile's pixel units; the distortion-adaptive kernel
    must be rendered with both.
    """

    raster: np.ndarray
    mask: np.ndarray
    annotations: tuple[Annotation, ...]
    provenance: dict = field(default_factory=dict)

    @property
    def center(self) -> tuple[float, float]:
        c = self.provenance["center"]
        return (float(c[0]), float(c[1]))

    @property
    def count(self) -> int:
        return len(self.annotations)

    def to_json(self) -> dict:
        return {"annotations": [a.to_dict() for a in self.annotations],
                "size": [self.raster.shape[1], self.raster.shape[0]],
                "provenance": self.provenance}


@dataclass(eq=False)
class _Frame:
    raster: np.ndarray
    mask: np.ndarray
    anns: list
    center: tuple[float, float]


# --- point transforms -------------------------------------------------------

def rotate_point(p, center, theta: float) -> tuple[float, float]:
    c, s = math.cos(theta), math.sin(theta)
    du, dv = p[0] - center[0], p[1] - center[1]
    return (center[0] + c * du - s * dv, center[1] + s * du + c * dv)


def align_point(p, turns: int, width: int, height: int) -> tuple[float, float]:
    """Where ``np.rot90(raster, turns)`` moves continuous position ``p``;
    ``width``/``height`` are the raster's before turning."""
    u, v = p
    turns %= 4
    if turns == 0:
        return (u, v)
    if turns == 1:
        return (v, width - 1 - u)
    if turns == 2:
        return (width - 1 - u, height - 1 - v)
    return (height - 1 - v, u)


def flip_point(p, width: int) -> tuple[float, float]:
    return (width - 1 - p[0], p[1])


def _map_annotation(a: Annotation, fn) -> Annotation:
    pts = [fn(c) for c in a.corners()]
    us = [q[0] for q in pts]
    vs = [q[1] for q in pts]
    return Annotation((min(us), min(vs), max(us), max(vs)), fn(a.center))


def _clip_annotation(a: Annotation, width: int, height: int) -> Annotation:
    u0, v0, u1, v1 = a.bbox
    lo_u, hi_u, lo_v, hi_v = -0.5, width - 0.5, -0.5, height - 0.5
    cu, cv = a.center
    nu0, nu1 = max(u0, lo_u), min(u1, hi_u)
    nv0, nv1 = max(v0, lo_v), min(v1, hi_v)
    if not nu0 < nu1:
        nu0, nu1 = max(cu - 0.5, lo_u), min(cu + 0.5, hi_u)
    if not nv0 < nv1:
        nv0, nv1 = max(cv - 0.5, lo_v), min(cv + 0.5, hi_v)
    return Annotation((nu0, nv0, nu1, nv1), (cu, cv))


def _inside(p, width: int, height: int) -> bool:
    return -0.5 <= p[0] < width - 0.5 and -0.5 <= p[1] < height - 0.5


# --- frame operations -------------------------------------------------------

def _frame_of(img: StereoImage, anns) -> _Frame:
    return _Frame(img.data, img.valid_mask(), list(anns), img.params.center)


def _rotate_frame(fr: _Frame, theta: float, threads=None) -> tuple[_Frame, int]:
    h, w = fr.raster.shape[:2]
    if h != w:
        raise NonSquareImage(f"rotation needs a square image, got {w}x{h}")
    if theta == 0.0:
        return _Frame(fr.raster.copy(), fr.mask.copy(), list(fr.anns), fr.center), 0
    cu, cv = fr.center
    c, s = math.cos(theta), math.sin(theta)
    inverse = np.array([[c, s, cu - c * cu - s * cv],
                        [-s, c, cv + s * cu - c * cv]])
    stacked = np.concatenate([fr.raster, fr.mask[:, :, None].astype(np.float32)], axis=2)
    out, ok = warp_affine(stacked, inverse, (h, w), threads=threads)
    mask = ok & (out[:, :, -1] > 0.5)
    raster = np.ascontiguousarray(out[:, :, :-1])
    raster[~mask] = 0.0
    anns, dropped = [], 0
    for a in fr.anns:
        b = _map_annotation(a, lambda p: rotate_point(p, fr.center, theta))
        if _inside(b.center, w, h):
            anns.append(_clip_annotation(b, w, h))
        else:
            dropped += 1
    return _Frame(raster, mask, anns, fr.center), dropped


def _flip_frame(fr: _Frame) -> _Frame:
    w = fr.raster.shape[1]
    anns = [_map_annotation(a, lambda p: flip_point(p, w)) for a in fr.anns]
    return _Frame(np.ascontiguousarray(fr.raster[:, ::-1]), np.ascontiguousarray(fr.mask[:, ::-1]),
                  anns, flip_point(fr.center, w))


def rotate_about_center(img: StereoImage, anns, theta: float, threads=None):
    """Rotate raster (bilinear) and annotations (exactly) about the projection
    centre.  Annotations whose centre leaves the raster are dropped."""
    fr, _ = _rotate_frame(_frame_of(img, anns), theta, threads)
    return StereoImage(fr.raster, img.params, mask=fr.mask, meta=dict(img.meta)), fr.anns


def flip_horizontal(img: StereoImage, anns):
    """Mirror about the vertical line through the raster centre."""
    fr = _flip_frame(_frame_of(img, anns))
    params = replace(img.params, center_u=fr.center[0])
    return StereoImage(fr.raster, params, mask=fr.mask, meta=dict(img.meta)), fr.anns


def quadrant_of(p, width: int, height: int) -> str:
    """Half-open split at the raster mid-lines (u decided first, then v)."""
    east = p[0] >= width / 2.0 - 0.5
    south = p[1] >= height / 2.0 - 0.5
    return ("S" if south else "N") + ("E" if east else "W")


def _divide(fr: _Frame, base: dict, d_norm: float) -> list[Tile]:
    h, w = fr.raster.shape[:2]
    if h % 2 or w % 2:
        raise OddDimensions(f"cannot split a {w}x{h} raster into equal quadrants")
    hq, wq = h // 2, w // 2
    buckets: dict[str, list] = {q: [] for q in QUADRANTS}
    for a in fr.anns:
        buckets[quadrant_of(a.center, w, h)].append(a)
    tiles = []
    for q in QUADRANTS:
        oy = hq if q[0] == "S" else 0
        ox = wq if q[1] == "E" else 0
        k = ALIGN_TURNS[q]
        raster = np.ascontiguousarray(np.rot90(fr.raster[oy:oy + hq, ox:ox + wq], k))
        mask = np.ascontiguousarray(np.rot90(fr.mask[oy:oy + hq, ox:ox + wq], k))

        def to_local(p, ox=ox, oy=oy, k=k):
            return align_point((p[0] - ox, p[1] - oy), k, wq, hq)

        out_w, out_h = (hq, wq) if k % 2 else (wq, hq)
        anns = tuple(_clip_annotation(_map_annotation(a, to_local), out_w, out_h) for a in buckets[q])
        center = to_local(fr.center)
        prov = {**base, "quadrant": q, "align_turns": k, "quadrant_offset": [ox, oy],
                "center": [center[0], center[1]], "d_norm": d_norm}
        tiles.append(Tile(raster, mask, anns, prov))
    return tiles


def divide_and_align(img: StereoImage, anns, d_norm: float | None = None) -> list[Tile]:
    """Four quadrant tiles (NW, NE, SW, SE), each turned so that the original
    image centre lies at its upper-left corner."""
    d_norm = img.width / 2.0 if d_norm is None else d_norm
    return _divide(_frame_of(img, anns), {}, d_norm)


# --- batch augmentation -----------------------------------------------------

def image_rng(seed: int, image_id: str) -> np.random.Generator:
    """Per-image stream, independent of processing order and thread count."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(image_id.encode())]))


def draw_angles(rng: np.random.Generator, n: int) -> list[float]:
    """``n`` angles uniform on the open interval (0, pi/2)."""
    out = []
    while len(out) < n:
        theta = float(rng.uniform(0.0, math.pi / 2.0))
        if 0.0 < theta < math.pi / 2.0:
            out.append(theta)
    return out


def plan_variants(image_id: str, n_rotations: int, flip: bool, seed: int) -> list[tuple[bool, float]]:
    """(flip, theta) pairs for one image: the unrotated original plus
    ``n_rotations`` random angles, for each flip state."""
    rng = image_rng(seed, image_id)
    plan = []
    for flipped in ((False, True) if flip else (False,)):
        plan.extend((flipped, t) for t in [0.0, *draw_angles(rng, n_rotations)])
    return plan


def _variant(fr: _Frame, flipped: bool, theta: float, flip_first: bool, threads):
    dropped = 0
    if flipped and flip_first:
        fr = _flip_frame(fr)
    fr, dropped = _rotate_frame(fr, theta, threads)
    if flipped and not flip_first:
        fr = _flip_frame(fr)
    return fr, dropped


def augment_image(image_id: str, img: StereoImage, anns, n_rotations: int = 2, flip: bool = True,
                  seed: int = 0, flip_first: bool = True, d_norm: float | None = None,
                  threads=None) -> list[Tile]:
    if n_rotations < 0:
        raise ValueError("n_rotations must be >= 0")
    d_norm = img.width / 2.0 if d_norm is None else float(d_norm)
    src = _frame_of(img, anns)
    tiles = []
    for flipped, theta in plan_variants(image_id, n_rotations, flip, seed):
        fr, dropped = _variant(src, flipped, theta, flip_first, threads)
        base = {"source_id": image_id, "flip": flipped, "flip_first": flip_first, "theta": theta,
                "seed": int(seed), "dropped": dropped}
        tiles.extend(_divide(fr, base, d_norm))
    return tiles


def augment_set(images, n_rotations: int = 2, flip: bool = True, rng_seed: int = 0,
                flip_first: bool = True, workers: int = 1, threads=None) -> list[Tile]:
    """Augment ``images``, an iterable of ``(image_id, StereoImage, annotations)``.

    Yields ``len(images) * (1 + n_rotations) * 4 * (2 if flip else 1)``
    quadrant tiles in input order.
    """
    items = list(images)

    def run(item):
        image_id, img, anns = item
        return augment_image(image_id, img, anns, n_rotations, flip, rng_seed, flip_first,
                             threads=threads)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, items))
    else:
        results = [run(it) for it in items]
    return [t for batch in results for t in batch]


def downscale_and_tile(tile: Tile, target: int = 1024, tile_size: int = 512, threads=None) -> list[Tile]:
    """Bilinear downscale of a square tile to ``target`` pixels, then cut into
    ``(target / tile_size)**2`` tiles, row-major from the upper-left."""
    h, w = tile.raster.shape[:2]
    if h != w:
        raise NonSquareImage(f"downscale needs a square tile, got {w}x{h}")
    if target % tile_size:
        raise ValueError("target must be a multiple of tile_size")
    f = target / w

    def scale(p):
        return ((p[0] + 0.5) * f - 0.5, (p[1] + 0.5) * f - 0.5)

    if target == w:
        raster, mask = tile.raster.copy(), tile.mask.copy()
    else:
        inverse = np.array([[1.0 / f, 0.0, 0.5 / f - 0.5], [0.0, 1.0 / f, 0.5 / f - 0.5]])
        stacked = np.concatenate([tile.raster, tile.mask[:, :, None].astype(np.float32)], axis=2)
        out, ok = warp_affine(stacked, inverse, (target, target), threads=threads)
        mask = ok & (out[:, :, -1] >= 0.5)
        raster = np.ascontiguousarray(out[:, :, :-1])
        raster[~mask] = 0.0
    anns = [_map_annotation(a, scale) for a in tile.annotations]
    center = scale(tile.center)
    d_norm = tile.provenance.get("d_norm", w / 2.0) * f
    n = target // tile_size
    out_tiles = []
    for r in range(n):
        for c in range(n):
            ox, oy = c * tile_size, r * tile_size
            sel = [a for a in anns
                   if min(int(math.floor((a.center[0] + 0.5) / tile_size)), n - 1) == c
                   and min(int(math.floor((a.center[1] + 0.5) / tile_size)), n - 1) == r]
            local = tuple(_clip_annotation(
                _map_annotation(a, lambda p, ox=ox, oy=oy: (p[0] - ox, p[1] - oy)), tile_size, tile_size)
                for a in sel)
            prov = {**tile.provenance, "scale": f, "target": target, "tile_size": tile_size,
                    "tile_offset": [ox, oy], "quadrant_d_norm": tile.provenance.get("d_norm"),
                    "center": [center[0] - ox, center[1] - oy], "d_norm": d_norm}
            out_tiles.append(Tile(np.ascontiguousarray(raster[oy:oy + tile_size, ox:ox + tile_size]),
                                  np.ascontiguousarray(mask[oy:oy + tile_size, ox:ox + tile_size]),
                                  local, prov))
    return out_tiles


def replay_tile(img: StereoImage, anns, provenance: dict, threads=None) -> Tile:
    """Rebuild one tile from its source image and provenance."""
    fr, dropped = _variant(_frame_of(img, anns), bool(provenance["flip"]), float(provenance["theta"]),
                           bool(provenance.get("flip_first", True)), threads)
    base = {k: provenance[k] for k in ("source_id", "flip", "flip_first", "theta", "seed")
            if k in provenance}
    base["dropped"] = dropped
    d_norm = provenance.get("quadrant_d_norm", provenance["d_norm"])
    quads = {t.provenance["quadrant"]: t for t in _divide(fr, base, d_norm)}
    tile = quads[provenance["quadrant"]]
    if "tile_offset" not in provenance:
        return tile
    for t in downscale_and_tile(tile, int(provenance["target"]), int(provenance["tile_size"]), threads):
        if t.provenance["tile_offset"] == provenance["tile_offset"]:
            return t
    raise KeyError("tile offset not produced by replay")
