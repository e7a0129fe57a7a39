"""Point-level projection maths: 3D -> unit sphere -> stereographic plane.

Frames and conventions
----------------------
* Camera frame is centred on the camera, z is the polar axis.  The north
  pole ``N = (0, 0, 1)`` is the projection centre, the south pole
  ``S = (0, 0, -1)`` maps to the plane centre ``O_c``.
* The image plane is ``z = -d`` (``d >= 1``).  Plane coordinates are the
  ``(x, y)`` of the intersection point; the implicit third coordinate is
  ``-d``.
* Pixels are addressed by their centres: pixel ``(i, j)`` (row, column)
  sits at continuous coordinate ``(u, v) = (j, i)``.  ``u`` grows to the
  right, ``v`` grows downwards.
* Equirectangular: ``lat = +pi/2`` is +z, ``lon = 0`` is +x, longitude
  grows towards +y.

Every function accepts either a single point (the NamedTuple types below,
or any plain tuple) or an array whose last axis holds the coordinates; the
return type follows the input.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import AtProjectionCenter, InvalidRotation, ZeroVector

ZERO_NORM = 1e-15
POLE_EPS = 1e-12
ROTATION_TOL = 1e-9


class Point3(NamedTuple):
    x: float
    y: float
    z: float


class SpherePoint(NamedTuple):
    x: float
    y: float
    z: float


class PlanePoint(NamedTuple):
    px: float
    py: float


class EquirectCoord(NamedTuple):
    lon: float
    lat: float


NORTH = SpherePoint(0.0, 0.0, 1.0)
SOUTH = SpherePoint(0.0, 0.0, -1.0)


@dataclass(frozen=True)
class ProjectionParams:
    """Plane offset plus the affine map between plane units and pixels."""

    width: int
    height: int
    scale: float
    center_u: float
    center_v: float
    d: float = 1.0

    def __post_init__(self):
        if not self.d >= 1.0:
            raise ValueError(f"plane offset d must be >= 1, got {self.d}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("width and height must be positive")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if not (0 <= self.center_u < self.width and 0 <= self.center_v < self.height):
            raise ValueError("projection centre must lie inside the raster")

    @classmethod
    def for_size(cls, width: int, height: int | None = None, d: float = 1.0,
                 span: float = 4.0) -> "ProjectionParams":
        """Centre the plane on the raster so that ``span`` plane units reach the
        nearest image edge."""
        height = width if height is None else height
        scale = (min(width, height) / 2.0) / span
        return cls(width=int(width), height=int(height), scale=scale,
                   center_u=(width - 1) / 2.0, center_v=(height - 1) / 2.0, d=float(d))

    @property
    def center(self) -> tuple[float, float]:
        return (self.center_u, self.center_v)

    def to_dict(self) -> dict:
        return {"width": self.width, "height": self.height, "scale": self.scale,
                "center_u": self.center_u, "center_v": self.center_v, "d": self.d}

    @classmethod
    def from_dict(cls, data: dict) -> "ProjectionParams":
        return cls(width=int(data["width"]), height=int(data["height"]),
                   scale=float(data["scale"]), center_u=float(data["center_u"]),
                   center_v=float(data["center_v"]), d=float(data.get("d", 1.0)))


def _check_rotation(m: np.ndarray) -> None:
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        raise InvalidRotation("rotation must be a finite 3x3 matrix")
    if np.max(np.abs(m @ m.T - np.eye(3))) > ROTATION_TOL:
        raise InvalidRotation("rotation matrix is not orthonormal")
    if abs(np.linalg.det(m) - 1.0) > ROTATION_TOL:
        raise InvalidRotation("rotation matrix has determinant != +1")


@dataclass(frozen=True, eq=False)
class SphereRotation:
    """Proper rotation of the viewing sphere, stored as a 3x3 matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        _check_rotation(m)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "SphereRotation":
        return cls(np.eye(3))

    @classmethod
    def about_axis(cls, axis, angle: float) -> "SphereRotation":
        """Right-handed rotation by ``angle`` radians about ``axis``."""
        a = np.asarray(axis, dtype=np.float64)
        n = np.linalg.norm(a)
        if n < ZERO_NORM:
            raise ZeroVector("rotation axis has zero length")
        x, y, z = a / n
        c, s = math.cos(angle), math.sin(angle)
        t = 1.0 - c
        m = np.array([
            [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
            [y * x * t + z * s, c + y * y * t, y * z * t - x * s],
            [z * x * t - y * s, z * y * t + x * s, c + z * z * t],
        ])
        return cls(m)

    @classmethod
    def from_euler(cls, roll: float = 0.0, pitch: float = 0.0, yaw: float = 0.0) -> "SphereRotation":
        """``Rz(yaw) @ Ry(pitch) @ Rx(roll)``."""
        rx = cls.about_axis((1, 0, 0), roll).matrix
        ry = cls.about_axis((0, 1, 0), pitch).matrix
        rz = cls.about_axis((0, 0, 1), yaw).matrix
        return cls(rz @ ry @ rx)

    def inverse(self) -> "SphereRotation":
        return SphereRotation(self.matrix.T)

    def __matmul__(self, other: "SphereRotation") -> "SphereRotation":
        return SphereRotation(self.matrix @ other.matrix)

    def to_list(self) -> list:
        return self.matrix.tolist()


def _split(value, n):
    """Return (array with last axis n, scalar flag)."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape[-1:] != (n,):
        raise ValueError(f"expected last axis of length {n}, got shape {arr.shape}")
    return arr, arr.ndim == 1


def project_to_sphere(p):
    """Radially project 3D points onto the unit sphere."""
    arr, scalar = _split(p, 3)
    r = np.sqrt(np.sum(arr * arr, axis=-1, keepdims=True))
    if np.any(r < ZERO_NORM):
        raise ZeroVector("cannot project the camera centre onto the sphere")
    out = arr / r
    return SpherePoint(*out.tolist()) if scalar else out


def stereographic_project(s, params: ProjectionParams | float = 1.0):
    """Project unit-sphere points from N onto the plane ``z = -d``.

    ``params`` may be a ProjectionParams or the bare plane offset ``d``.
    """
    d = params.d if isinstance(params, ProjectionParams) else float(params)
    arr, scalar = _split(s, 3)
    denom = 1.0 - arr[..., 2]
    if np.any(denom < POLE_EPS):
        raise AtProjectionCenter("north pole has no stereographic image")
    coef = (1.0 + d) / denom
    out = np.stack([coef * arr[..., 0], coef * arr[..., 1]], axis=-1)
    return PlanePoint(*out.tolist()) if scalar else out


def stereographic_unproject(q, params: ProjectionParams | float = 1.0):
    """Inverse of :func:`stereographic_project`."""
    d = params.d if isinstance(params, ProjectionParams) else float(params)
    arr, scalar = _split(q, 2)
    dp1 = 1.0 + d
    # ray N + t*(px, py, -d-1) hits the sphere again at this t
    t = 2.0 * dp1 / (arr[..., 0] ** 2 + arr[..., 1] ** 2 + dp1 * dp1)
    out = np.stack([t * arr[..., 0], t * arr[..., 1], 1.0 - t * dp1], axis=-1)
    return SpherePoint(*out.tolist()) if scalar else out


def plane_to_pixel(q, params: ProjectionParams):
    arr, scalar = _split(q, 2)
    out = np.stack([params.center_u + params.scale * arr[..., 0],
                    params.center_v + params.scale * arr[..., 1]], axis=-1)
    return tuple(out.tolist()) if scalar else out


def pixel_to_plane(uv, params: ProjectionParams):
    arr, scalar = _split(uv, 2)
    out = np.stack([(arr[..., 0] - params.center_u) / params.scale,
                    (arr[..., 1] - params.center_v) / params.scale], axis=-1)
    return PlanePoint(*out.tolist()) if scalar else out


def rotate_sphere(s, rot: SphereRotation | np.ndarray):
    m = rot.matrix if isinstance(rot, SphereRotation) else np.asarray(rot, dtype=np.float64)
    if not isinstance(rot, SphereRotation):
        _check_rotation(m)
    arr, scalar = _split(s, 3)
    out = arr @ m.T
    return SpherePoint(*out.tolist()) if scalar else out


def equirect_to_sphere(c):
    arr, scalar = _split(c, 2)
    lon, lat = arr[..., 0], arr[..., 1]
    cl = np.cos(lat)
    out = np.stack([cl * np.cos(lon), cl * np.sin(lon), np.sin(lat)], axis=-1)
    return SpherePoint(*out.tolist()) if scalar else out


def sphere_to_equirect(s):
    arr, scalar = _split(s, 3)
    lon = np.arctan2(arr[..., 1], arr[..., 0])
    lon = np.where(lon >= math.pi, lon - 2.0 * math.pi, lon)
    lat = np.arcsin(np.clip(arr[..., 2], -1.0, 1.0))
    out = np.stack([lon, lat], axis=-1)
    return EquirectCoord(*out.tolist()) if scalar else out


def sphere_to_pixel(s, params: ProjectionParams, rot: SphereRotation | None = None):
    """Forward chain used for annotations: rotate, project, map to pixels."""
    if rot is not None:
        s = rotate_sphere(s, rot)
    return plane_to_pixel(stereographic_project(s, params), params)


def pixel_to_sphere(uv, params: ProjectionParams, rot: SphereRotation | None = None):
    """Inverse chain: pixels -> plane -> sphere, optionally undoing ``rot``."""
    s = stereographic_unproject(pixel_to_plane(uv, params), params)
    if rot is not None:
        s = rotate_sphere(s, rot.inverse())
    return s
