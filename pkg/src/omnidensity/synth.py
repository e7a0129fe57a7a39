"""Synthetic-scene oracle for the stereographic distortion model.

A horizontal plane ``z = k`` carrying disks of one world radius is pushed
through the exact chain plane -> sphere -> (rotation) -> stereographic plane
-> pixels.  Measuring the rendered disks gives ground truth for how object
scale falls off with distance from the image centre, which is what the
distortion-adaptive kernel approximates with ``sigma_alpha / D``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DiskBehindCamera, NearProjectionCenter, NearSingularity
from .geom import (
    ProjectionParams,
    SphereRotation,
    pixel_to_plane,
    plane_to_pixel,
    project_to_sphere,
    rotate_sphere,
    sphere_to_equirect,
    stereographic_project,
    stereographic_unproject,
)
from .resample import StereoImage

SUPERSAMPLE = 4
_OUTLINE_POINTS = 256


@dataclass(frozen=True, eq=False)
class SceneSpec:
    plane_z: float
    disk_radius: float
    disk_centers: tuple[tuple[float, float], ...]
    params: ProjectionParams
    rotation: SphereRotation | None = None

    def __post_init__(self):
        if self.plane_z == 0:
            raise ValueError("scene plane must not pass through the camera (k != 0)")
        if not self.disk_radius > 0:
            raise ValueError("disk radius must be positive")
        object.__setattr__(self, "disk_centers",
                           tuple((float(x), float(y)) for x, y in self.disk_centers))


@dataclass
class DiskMeasurement:
    plane_center: tuple[float, float]
    centroid: tuple[float, float]
    area_px: int
    radius_px: float
    distance_px: float
    pixels: np.ndarray = field(repr=False, default=None)


def default_scene(size: int = 1024, plane_z: float = -2.0, disk_radius: float = 0.3,
                  ring_step: float = 0.8, azimuths: int = 6, span: float = 4.0,
                  d: float = 1.0) -> SceneSpec:
    """One disk under the camera plus rings out to planar radius ``4 |k|``."""
    centers = [(0.0, 0.0)]
    n_rings = int(round(4.0 * abs(plane_z) / ring_step))
    for m in range(1, n_rings + 1):
        rho = m * ring_step
        offset = 0.5 * (m % 2) * 2.0 * math.pi / azimuths
        for a in range(azimuths):
            phi = offset + 2.0 * math.pi * a / azimuths
            centers.append((rho * math.cos(phi), rho * math.sin(phi)))
    return SceneSpec(plane_z, disk_radius, tuple(centers), ProjectionParams.for_size(size, d=d, span=span))


def _rot(spec: SceneSpec) -> np.ndarray:
    return np.eye(3) if spec.rotation is None else spec.rotation.matrix


def plane_to_image(xy, spec: SceneSpec) -> np.ndarray:
    """Scene-plane points (N, 2) -> pixel positions (N, 2)."""
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    pts = np.column_stack([xy, np.full(len(xy), spec.plane_z)])
    s = rotate_sphere(project_to_sphere(pts), _rot(spec))
    return plane_to_pixel(stereographic_project(s, spec.params), spec.params)


def image_to_plane(uv, spec: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    """Pixel positions -> scene-plane points and a mask of rays that hit it."""
    uv = np.asarray(uv, dtype=np.float64)
    s = stereographic_unproject(pixel_to_plane(uv, spec.params), spec.params)
    s = rotate_sphere(s, _rot(spec).T)
    sz = s[..., 2]
    hit = sz * spec.plane_z > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(hit, spec.plane_z / sz, 0.0)
    return np.stack([t * s[..., 0], t * s[..., 1]], axis=-1), hit


def _check_disk(center, spec: SceneSpec):
    # direction of the projection centre N in the scene frame
    n_dir = _rot(spec).T @ np.array([0.0, 0.0, 1.0])
    if n_dir[2] * spec.plane_z > 0:
        foot = n_dir[:2] * (spec.plane_z / n_dir[2])
        if math.hypot(foot[0] - center[0], foot[1] - center[1]) <= spec.disk_radius * 1.05:
            raise DiskBehindCamera(f"disk at {center} surrounds the projection centre")


def render_scene(spec: SceneSpec) -> tuple[StereoImage, list[DiskMeasurement]]:
    """Binary raster of the projected disks plus per-disk measurements.

    Coverage is estimated with 4x4 sub-samples per pixel and thresholded at
    one half; ``radius_px = sqrt(area / pi)`` over the thresholded pixels.
    """
    p = spec.params
    raster = np.zeros((p.height, p.width), dtype=np.float32)
    offs = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE - 0.5
    t = np.linspace(0.0, 2.0 * math.pi, _OUTLINE_POINTS, endpoint=False)
    out = []
    for cx, cy in spec.disk_centers:
        _check_disk((cx, cy), spec)
        outline = np.column_stack([cx + spec.disk_radius * np.cos(t), cy + spec.disk_radius * np.sin(t)])
        uv = plane_to_image(outline, spec)
        j0 = max(0, int(math.floor(uv[:, 0].min())) - 2)
        j1 = min(p.width - 1, int(math.ceil(uv[:, 0].max())) + 2)
        i0 = max(0, int(math.floor(uv[:, 1].min())) - 2)
        i1 = min(p.height - 1, int(math.ceil(uv[:, 1].max())) + 2)
        measurement = DiskMeasurement((cx, cy), (math.nan, math.nan), 0, 0.0, math.nan)
        if j0 <= j1 and i0 <= i1:
            jj = np.arange(j0, j1 + 1, dtype=np.float64)
            ii = np.arange(i0, i1 + 1, dtype=np.float64)
            su = (jj[None, :, None, None] + offs[None, None, None, :])
            sv = (ii[:, None, None, None] + offs[None, None, :, None])
            su, sv = np.broadcast_arrays(su, sv)
            xy, hit = image_to_plane(np.stack([su, sv], axis=-1), spec)
            inside = hit & ((xy[..., 0] - cx) ** 2 + (xy[..., 1] - cy) ** 2 <= spec.disk_radius ** 2)
            coverage = inside.mean(axis=(2, 3))
            on = coverage >= 0.5
            area = int(on.sum())
            raster[i0:i1 + 1, j0:j1 + 1][on] = 1.0
            if coverage.sum() > 0:
                gu = (coverage * jj[None, :]).sum() / coverage.sum()
                gv = (coverage * ii[:, None]).sum() / coverage.sum()
                dist = math.hypot(gu - p.center_u, gv - p.center_v)
                idx = np.argwhere(on) + [i0, j0]
                measurement = DiskMeasurement((cx, cy), (gu, gv), area, math.sqrt(area / math.pi),
                                              dist, idx)
        out.append(measurement)
    img = StereoImage(raster, p, meta={"scene": "disks", "plane_z": spec.plane_z})
    return img, out


def exact_scale_factor(p, spec: SceneSpec) -> float:
    """Local magnification (px per world unit) of the plane -> pixel map at
    scene-plane point ``p``: geometric mean of the Jacobian's principal
    stretches, by central differences with ``h = 1e-5 |k|``."""
    x, y = float(p[0]), float(p[1])
    pts = np.array([[x, y, spec.plane_z]])
    s = rotate_sphere(project_to_sphere(pts), _rot(spec))
    if 1.0 - s[0, 2] < 1e-9:
        raise NearSingularity(f"plane point {p} maps to the projection centre")
    h = 1e-5 * abs(spec.plane_z)
    probe = np.array([[x + h, y], [x - h, y], [x, y + h], [x, y - h]])
    uv = plane_to_image(probe, spec)
    jac = np.column_stack([(uv[0] - uv[1]) / (2 * h), (uv[2] - uv[3]) / (2 * h)])
    stretches = np.linalg.svd(jac, compute_uv=False)
    return float(math.sqrt(stretches[0] * stretches[1]))


@dataclass
class SynthReport:
    rows: list[dict]
    pearson_radius: float
    pearson_scale: float
    max_relative_deviation: float
    d_norm: float
    sigma_alpha: float

    def to_csv(self) -> str:
        cols = ["plane_x", "plane_y", "distance_px", "measured_radius_px", "exact_scale",
                "sigma_alpha_over_D"]
        lines = [",".join(cols)]
        for r in self.rows:
            lines.append(",".join(repr(float(r[c])) for c in cols))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {"pearson_radius_vs_sigma": self.pearson_radius,
                "pearson_scale_vs_sigma": self.pearson_scale,
                "max_relative_deviation": self.max_relative_deviation,
                "d_norm": self.d_norm, "sigma_alpha": self.sigma_alpha,
                "n_disks": len(self.rows)}


def synth_report(spec: SceneSpec, sigma_alpha: float = 12.0, d_norm: float | None = None,
                 band=(0.1, 1.0)) -> tuple[SynthReport, StereoImage]:
    """Render, measure and compare against ``sigma_alpha * d_norm / D``.

    Correlations and the deviation use the disks with ``D`` inside
    ``band * d_norm``; the deviation is taken after a least-squares
    proportional fit of ``1 / D`` to the exact scale.
    """
    d_norm = spec.params.width / 2.0 if d_norm is None else float(d_norm)
    img, disks = render_scene(spec)
    rows = []
    for m in disks:
        if m.area_px == 0:
            continue
        dist = m.distance_px
        rows.append({
            "plane_x": m.plane_center[0], "plane_y": m.plane_center[1],
            "centroid_u": m.centroid[0], "centroid_v": m.centroid[1],
            "distance_px": dist, "measured_radius_px": m.radius_px,
            "exact_scale": exact_scale_factor(m.plane_center, spec),
            "sigma_alpha_over_D": sigma_alpha * d_norm / dist if dist > 0 else math.inf,
        })
    lo, hi = band[0] * d_norm, band[1] * d_norm
    sel = [r for r in rows if lo <= r["distance_px"] <= hi]
    if len(sel) >= 3:
        radius = np.array([r["measured_radius_px"] for r in sel])
        scale = np.array([r["exact_scale"] for r in sel])
        inv = np.array([r["sigma_alpha_over_D"] for r in sel])
        pr = float(np.corrcoef(radius, inv)[0, 1])
        ps = float(np.corrcoef(scale, inv)[0, 1])
        c = float(np.dot(scale, inv) / np.dot(inv, inv))
        dev = float(np.max(np.abs(scale - c * inv) / scale))
    else:
        pr = ps = dev = math.nan
    return SynthReport(rows, pr, ps, dev, d_norm, sigma_alpha), img


# --- Tissot indicatrix ------------------------------------------------------

@dataclass
class TissotSample:
    direction: tuple[float, float, float]
    epsilon: float
    outline: np.ndarray
    a: float
    b: float
    center: tuple[float, float]
    angle: float

    @property
    def eccentricity(self) -> float:
        return math.sqrt(max(0.0, 1.0 - (self.b / self.a) ** 2))

    @property
    def axis_ratio(self) -> float:
        return self.a / self.b


def fit_ellipse(points) -> tuple[float, float, tuple[float, float], float]:
    """Algebraic least-squares conic fit.  Returns (a, b, centre, angle) with
    ``a >= b`` and ``angle`` the direction of the major axis."""
    pts = np.asarray(points, dtype=np.float64)
    mean = pts.mean(axis=0)
    spread = np.sqrt(((pts - mean) ** 2).sum(axis=1).mean())
    x, y = ((pts - mean) / spread).T
    design = np.column_stack([x * x, x * y, y * y, x, y, np.ones_like(x)])
    _, _, vt = np.linalg.svd(design, full_matrices=False)
    A, B, C, D, E, F = vt[-1]
    x0, y0 = np.linalg.solve([[2 * A, B], [B, 2 * C]], [-D, -E])
    f0 = A * x0 * x0 + B * x0 * y0 + C * y0 * y0 + D * x0 + E * y0 + F
    evals, evecs = np.linalg.eigh([[A, B / 2], [B / 2, C]])
    axes = np.sqrt(-f0 / evals)
    order = np.argsort(axes)[::-1]
    a, b = axes[order] * spread
    major = evecs[:, order[0]]
    return float(a), float(b), (float(x0 * spread + mean[0]), float(y0 * spread + mean[1])), \
        float(math.atan2(major[1], major[0]))


def small_circle(direction, epsilon: float, n: int = 128) -> np.ndarray:
    """``n`` points at angular distance ``epsilon`` around a unit direction."""
    c = np.asarray(direction, dtype=np.float64)
    c = c / np.linalg.norm(c)
    helper = np.array([1.0, 0.0, 0.0]) if abs(c[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(c, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(c, e1)
    t = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    return (math.cos(epsilon) * c[None, :]
            + math.sin(epsilon) * (np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2))


def tissot(directions, epsilon: float, params: ProjectionParams, mode: str = "stereographic",
           n: int = 128) -> list[TissotSample]:
    """Project small circles and fit ellipses to their images.

    ``mode="equirectangular"`` measures in (longitude, -latitude) radians
    instead, for comparison.
    """
    if not 0 < epsilon <= 0.05:
        raise ValueError("epsilon must be in (0, 0.05] radians")
    if mode not in ("stereographic", "equirectangular"):
        raise ValueError(f"unknown mode {mode!r}")
    out = []
    for dvec in np.asarray(directions, dtype=np.float64).reshape(-1, 3):
        dvec = dvec / np.linalg.norm(dvec)
        if mode == "stereographic" and math.acos(min(1.0, dvec[2])) <= 2 * epsilon:
            raise NearProjectionCenter(f"direction {dvec.tolist()} is within 2*epsilon of N")
        ring = small_circle(dvec, epsilon, n)
        if mode == "stereographic":
            outline = plane_to_pixel(stereographic_project(ring, params), params)
        else:
            ll = sphere_to_equirect(ring)
            lon0 = math.atan2(dvec[1], dvec[0])
            lon = (ll[:, 0] - lon0 + math.pi) % (2 * math.pi) - math.pi + lon0
            outline = np.column_stack([lon, -ll[:, 1]])
        a, b, center, angle = fit_ellipse(outline)
        out.append(TissotSample(tuple(dvec.tolist()), epsilon, outline, a, b, center, angle))
    return out


def random_directions(n: int, rng: np.random.Generator, min_angle_from_north: float = 0.1) -> np.ndarray:
    """Uniform directions on the sphere, excluding a cap around N."""
    out = []
    while len(out) < n:
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        if math.acos(min(1.0, v[2])) > min_angle_from_north:
            out.append(v)
    return np.array(out)
