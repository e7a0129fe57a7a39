"""Whole-image reprojection from equirectangular to stereographic rasters."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import DimensionMismatch, PointAtProjectionCenter
from .geom import (
    POLE_EPS,
    ProjectionParams,
    SphereRotation,
    equirect_to_sphere,
    plane_to_pixel,
    rotate_sphere,
    stereographic_project,
)

INTERP = {"nearest": 0, "bilinear": 1}


def _as_hwc(data, any_channels: bool = False) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or not (any_channels or arr.shape[2] in (1, 3)):
        raise DimensionMismatch(f"expected HxW, HxWx1 or HxWx3 raster, got {arr.shape}")
    return np.ascontiguousarray(arr)


@dataclass(eq=False)
class EquirectImage:
    """Full-sphere equirectangular raster, samples in [0, 1], shape (H, W, C)."""

    data: np.ndarray

    def __post_init__(self):
        self.data = _as_hwc(self.data)
        h, w, _ = self.data.shape
        if w != 2 * h:
            raise DimensionMismatch(f"equirectangular raster must be 2:1, got {w}x{h}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(eq=False)
class StereoImage:
    """Stereographic raster tied to plane coordinates by ``params``.

    ``mask`` is True where the pixel holds sampled data; None means all valid.
    """

    data: np.ndarray
    params: ProjectionParams
    mask: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = _as_hwc(self.data)
        h, w, _ = self.data.shape
        if (w, h) != (self.params.width, self.params.height):
            raise DimensionMismatch(
                f"raster is {w}x{h} but params describe {self.params.width}x{self.params.height}")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != (h, w):
                raise DimensionMismatch("mask shape does not match raster")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def valid_mask(self) -> np.ndarray:
        if self.mask is None:
            return np.ones((self.height, self.width), dtype=bool)
        return self.mask


def _matrix(rot) -> np.ndarray:
    if rot is None:
        return np.eye(3)
    if isinstance(rot, SphereRotation):
        return rot.matrix
    return SphereRotation(rot).matrix


def reproject(src: EquirectImage, rot: SphereRotation | None, params: ProjectionParams,
              interp: str = "bilinear", threads: int | None = None,
              backend_name: str | None = None) -> StereoImage:
    """Resample an equirectangular image into a stereographic one.

    ``rot`` maps source-camera directions into the output frame (the same
    direction :func:`annotate_reproject` applies to points); each output
    pixel therefore samples the source along ``rot^-1`` of its direction.
    """
    if not isinstance(src, EquirectImage):
        src = EquirectImage(src)
    if interp not in INTERP:
        raise ValueError(f"interp must be one of {sorted(INTERP)}")
    threads = backend.default_threads() if threads is None else max(1, int(threads))
    kern = backend.get(backend_name)
    inv = np.ascontiguousarray(_matrix(rot).T)
    out = kern.reproject_stereo(src.data, inv, params.d, params.scale, params.center_u,
                                params.center_v, params.height, params.width,
                                INTERP[interp], threads)
    return StereoImage(np.asarray(out), params, mask=np.ones((params.height, params.width), bool),
                       meta={"interp": interp})


def rotate_equirect(src: EquirectImage, rot: SphereRotation, interp: str = "bilinear",
                    threads: int | None = None, backend_name: str | None = None) -> EquirectImage:
    """Rotate a full-sphere image so that direction ``s`` moves to ``rot @ s``."""
    if not isinstance(src, EquirectImage):
        src = EquirectImage(src)
    threads = backend.default_threads() if threads is None else max(1, int(threads))
    kern = backend.get(backend_name)
    inv = np.ascontiguousarray(_matrix(rot).T)
    return EquirectImage(np.asarray(kern.rotate_equirect(src.data, inv, INTERP[interp], threads)))


def annotate_reproject(points, rot: SphereRotation | None, params: ProjectionParams) -> list[tuple[float, float]]:
    """Exact forward transform of equirectangular coordinates to output pixels."""
    lonlat = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    s = equirect_to_sphere(lonlat)
    if rot is not None:
        s = rotate_sphere(s, rot)
    bad = np.nonzero(1.0 - s[:, 2] < POLE_EPS)[0]
    if bad.size:
        raise PointAtProjectionCenter(f"points {bad.tolist()} map to the projection centre")
    uv = plane_to_pixel(stereographic_project(s, params), params)
    return [(float(u), float(v)) for u, v in uv]


def equirect_pixel_to_coord(u, v, width: int, height: int):
    """Continuous equirectangular pixel position -> (lon, lat) radians."""
    lon = (np.asarray(u, dtype=np.float64) + 0.5) / width * 2.0 * np.pi - np.pi
    lat = np.pi / 2.0 - (np.asarray(v, dtype=np.float64) + 0.5) / height * np.pi
    return lon, lat


def equirect_coord_to_pixel(lon, lat, width: int, height: int):
    u = (np.asarray(lon, dtype=np.float64) + np.pi) / (2.0 * np.pi) * width - 0.5
    v = (np.pi / 2.0 - np.asarray(lat, dtype=np.float64)) / np.pi * height - 0.5
    return u, v


def warp_affine(data: np.ndarray, inverse_affine, out_shape, threads: int | None = None,
                backend_name: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear affine warp; ``inverse_affine`` (2x3) maps output (u, v) to
    input (u, v).  Returns (raster HxWxC float32, validity mask bool)."""
    threads = backend.default_threads() if threads is None else max(1, int(threads))
    kern = backend.get(backend_name)
    out, mask = kern.warp_affine(_as_hwc(data, any_channels=True), np.ascontiguousarray(inverse_affine, dtype=np.float64),
                                 int(out_shape[0]), int(out_shape[1]), threads)
    return np.asarray(out), np.asarray(mask).astype(bool)
