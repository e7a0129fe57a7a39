"""Density-map ground truth and count discretization.

Each annotation contributes one Gaussian blob centred on its point.  Blobs
are truncated at ``truncation * sigma`` (circular support, evaluated at
pixel centres), clipped to the raster and then renormalised to sum to one,
so the map integrates to the annotation count exactly.

Three sigma policies are supported:

* :class:`FixedKernel` -- one sigma for every annotation;
* :class:`GeometryAdaptiveKernel` -- ``beta`` times the mean distance to the
  ``k`` nearest other annotations;
* :class:`DistortionAdaptiveKernel` -- sigma inversely proportional to the
  distance from the stereographic image centre,
  ``sigma = sigma_alpha * d_norm / D``, clamped to ``[sigma_min, sigma_max]``.
"""
from __future__ import annotations

import math
from bisect import bisect_left
from functools import cached_property
from dataclasses import asdict, dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.spatial import cKDTree

from .errors import NegativeCount, TooFewPoints


@dataclass(frozen=True)
class Annotation:
    """Bounding box ``(u_min, v_min, u_max, v_max)`` plus the object's point."""

    bbox: tuple[float, float, float, float]
    center: tuple[float, float]

    def __post_init__(self):
        u0, v0, u1, v1 = (float(x) for x in self.bbox)
        if not (u0 < u1 and v0 < v1):
            raise ValueError(f"degenerate bounding box {self.bbox}")
        object.__setattr__(self, "bbox", (u0, v0, u1, v1))
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @classmethod
    def from_bbox(cls, bbox) -> "Annotation":
        u0, v0, u1, v1 = (float(x) for x in bbox)
        return cls((u0, v0, u1, v1), ((u0 + u1) / 2.0, (v0 + v1) / 2.0))

    def corners(self) -> list[tuple[float, float]]:
        u0, v0, u1, v1 = self.bbox
        return [(u0, v0), (u1, v0), (u1, v1), (u0, v1)]

    def to_dict(self) -> dict:
        return {"bbox": list(self.bbox), "center": list(self.center)}

    @classmethod
    def from_dict(cls, data) -> "Annotation":
        if "center" in data:
            return cls(tuple(data["bbox"]), tuple(data["center"]))
        return cls.from_bbox(data["bbox"])


@dataclass(frozen=True)
class FixedKernel:
    sigma: float = 8.0
    truncation: float = 4.0

    def __post_init__(self):
        _check_common(self.truncation, self.sigma)


@dataclass(frozen=True)
class GeometryAdaptiveKernel:
    k: int = 3
    beta: float = 0.3
    fallback_sigma: float = 8.0
    truncation: float = 4.0

    def __post_init__(self):
        _check_common(self.truncation, self.beta, self.fallback_sigma)
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class DistortionAdaptiveKernel:
    """``d_norm`` None means half the width of the rendered map;
    ``sigma_max`` None means ``4 * sigma_alpha``."""

    sigma_alpha: float = 12.0
    d_norm: float | None = None
    sigma_min: float = 2.0
    sigma_max: float | None = None
    truncation: float = 4.0

    def __post_init__(self):
        _check_common(self.truncation, self.sigma_alpha, self.sigma_min)
        if self.d_norm is not None and not self.d_norm > 0:
            raise ValueError("d_norm must be positive")
        if self.sigma_max is not None and not self.sigma_max >= self.sigma_min:
            raise ValueError("sigma_max must be >= sigma_min")

    @property
    def upper(self) -> float:
        return 4.0 * self.sigma_alpha if self.sigma_max is None else self.sigma_max

    def resolved(self, width: int) -> "DistortionAdaptiveKernel":
        if self.d_norm is not None:
            return self
        return DistortionAdaptiveKernel(self.sigma_alpha, width / 2.0, self.sigma_min,
                                        self.sigma_max, self.truncation)


KernelSpec = Union[FixedKernel, GeometryAdaptiveKernel, DistortionAdaptiveKernel]

_POLICY_NAMES = {
    FixedKernel: "fixed",
    GeometryAdaptiveKernel: "geometry-adaptive",
    DistortionAdaptiveKernel: "distortion-adaptive",
}


def _check_common(truncation, *positive):
    if truncation < 3:
        raise ValueError("truncation radius must be at least 3 sigma")
    if any(not p > 0 for p in positive):
        raise ValueError("sigma parameters must be positive")


def kernel_to_dict(spec: KernelSpec) -> dict:
    return {"policy": _POLICY_NAMES[type(spec)], **asdict(spec)}


def kernel_from_dict(data: dict) -> KernelSpec:
    data = dict(data)
    policy = data.pop("policy")
    cls = {v: k for k, v in _POLICY_NAMES.items()}[policy]
    return cls(**data)


@dataclass(eq=False)
class DensityMap:
    values: np.ndarray
    kernel_spec: KernelSpec | None = None
    meta: dict = field(default_factory=dict)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def count(self) -> float:
        return float(self.values.sum())


def _points(annotations) -> np.ndarray:
    pts = [a.center if isinstance(a, Annotation) else a for a in annotations]
    return np.asarray(pts, dtype=np.float64).reshape(-1, 2)


def distance_from_center(p, image_center) -> float:
    return math.hypot(p[0] - image_center[0], p[1] - image_center[1])


def adaptive_sigma(p, center, spec: DistortionAdaptiveKernel) -> float:
    if spec.d_norm is None:
        raise ValueError("d_norm must be resolved before computing sigma")
    dist = distance_from_center(p, center)
    if dist == 0.0:
        return spec.upper
    sigma = spec.sigma_alpha * spec.d_norm / dist
    return min(max(sigma, spec.sigma_min), spec.upper)


def geometry_adaptive_sigma(p, all_points, k: int = 3, beta: float = 0.3) -> float:
    """``beta`` times the mean distance from ``p`` to its ``k`` nearest other
    points.  ``p`` itself is excluded once if it occurs in ``all_points``."""
    pts = _points(all_points)
    if len(pts) < k + 1:
        raise TooFewPoints(f"need at least {k + 1} annotations, got {len(pts)}")
    dist = np.hypot(pts[:, 0] - p[0], pts[:, 1] - p[1])
    order = np.sort(dist)
    self_hit = np.nonzero((pts[:, 0] == p[0]) & (pts[:, 1] == p[1]))[0]
    nearest = order[1:k + 1] if self_hit.size else order[:k]
    return float(beta * nearest.mean())


def sigmas_for(points: np.ndarray, width: int, center, spec: KernelSpec) -> tuple[np.ndarray, dict]:
    """Per-annotation sigma under ``spec`` plus metadata about how it was chosen."""
    n = len(points)
    meta: dict = {}
    if isinstance(spec, FixedKernel):
        return np.full(n, spec.sigma), meta
    if isinstance(spec, DistortionAdaptiveKernel):
        spec = spec.resolved(width)
        meta["d_norm"] = spec.d_norm
        return np.array([adaptive_sigma(p, center, spec) for p in points]), meta
    if n < spec.k + 1:
        meta["fallback"] = f"fixed sigma {spec.fallback_sigma}: {n} annotations < k+1"
        return np.full(n, spec.fallback_sigma), meta
    dist, _ = cKDTree(points).query(points, k=spec.k + 1)
    return spec.beta * dist[:, 1:].mean(axis=1), meta


def gaussian_patch(point, sigma: float, truncation: float, shape) -> tuple[slice, slice, np.ndarray]:
    """Normalised truncated Gaussian for one point, clipped to ``shape``.

    Returns (row slice, column slice, weights summing to 1).
    """
    h, w = shape
    u, v = float(point[0]), float(point[1])
    radius = truncation * sigma
    j0 = max(0, math.ceil(u - radius))
    j1 = min(w - 1, math.floor(u + radius))
    i0 = max(0, math.ceil(v - radius))
    i1 = min(h - 1, math.floor(v + radius))
    if sigma > 0 and j0 <= j1 and i0 <= i1:
        du = np.arange(j0, j1 + 1, dtype=np.float64) - u
        dv = np.arange(i0, i1 + 1, dtype=np.float64) - v
        r2 = dv[:, None] ** 2 + du[None, :] ** 2
        g = np.exp(-r2 / (2.0 * sigma * sigma))
        g[r2 > radius * radius] = 0.0
        total = g.sum()
        if total > 0.0:
            return slice(i0, i1 + 1), slice(j0, j1 + 1), g / total
    # support holds no pixel centre: put the unit mass on the nearest pixel
    i = min(max(int(math.floor(v + 0.5)), 0), h - 1)
    j = min(max(int(math.floor(u + 0.5)), 0), w - 1)
    return slice(i, i + 1), slice(j, j + 1), np.ones((1, 1))


def render_density(annotations, size, center=None, spec: KernelSpec | None = None) -> DensityMap:
    """Render a density map of ``size = (width, height)``.

    ``center`` is the stereographic image centre used by the
    distortion-adaptive policy; it defaults to the raster centre.
    """
    width, height = int(size[0]), int(size[1])
    spec = FixedKernel() if spec is None else spec
    if center is None:
        center = ((width - 1) / 2.0, (height - 1) / 2.0)
    pts = _points(annotations)
    values = np.zeros((height, width), dtype=np.float64)
    sigmas, meta = sigmas_for(pts, width, center, spec)
    for p, s in zip(pts, sigmas):
        rows, cols, g = gaussian_patch(p, float(s), spec.truncation, (height, width))
        values[rows, cols] += g
    meta.update({"count": len(pts), "center": [float(center[0]), float(center[1])],
                 "sigmas": [float(s) for s in sigmas]})
    return DensityMap(values, spec, meta)


def integrate_count(dmap: DensityMap | np.ndarray, region=None) -> float:
    """Sum of the map, optionally restricted to pixel centres inside ``region``
    (a closed polygon of (u, v) vertices)."""
    values = dmap.values if isinstance(dmap, DensityMap) else np.asarray(dmap)
    if region is None:
        return float(values.sum())
    from .dataset.polygon import polygon_mask
    return float(values[polygon_mask(region, values.shape)].sum())


@dataclass(frozen=True)
class CountBins:
    """Ordinal count classes: ``{0}``, fine steps up to ``fine_limit``,
    coarse steps up to ``c_max``, then ``(c_max, inf)``.  Intervals are
    ``(lo, hi]``."""

    c_max: float
    fine_step: float = 0.05
    coarse_step: float = 0.5
    fine_limit: float = 0.5

    def __post_init__(self):
        n_fine = self.fine_limit / self.fine_step
        if abs(n_fine - round(n_fine)) > 1e-9 or round(n_fine) < 1:
            raise ValueError("fine_step must divide fine_limit evenly")
        n_coarse = (self.c_max - self.fine_limit) / self.coarse_step
        if n_coarse < -1e-9 or abs(n_coarse - round(n_coarse)) > 1e-9:
            raise ValueError("c_max must be fine_limit plus a whole number of coarse steps")

    @classmethod
    def from_counts(cls, counts: Sequence[float], **kwargs) -> "CountBins":
        """``c_max`` is the largest count, rounded up to the coarse grid."""
        step = kwargs.get("coarse_step", 0.5)
        limit = kwargs.get("fine_limit", 0.5)
        top = max([0.0, *counts])
        n = max(0, math.ceil(round((top - limit) / step, 9)))
        return cls(c_max=round(limit + n * step, 12), **kwargs)

    @cached_property
    def edges(self) -> tuple[float, ...]:
        n_fine = round(self.fine_limit / self.fine_step)
        n_coarse = round((self.c_max - self.fine_limit) / self.coarse_step)
        fine = [round(i * self.fine_step, 12) for i in range(1, n_fine + 1)]
        coarse = [round(self.fine_limit + i * self.coarse_step, 12) for i in range(1, n_coarse + 1)]
        return tuple(fine + coarse)

    @property
    def n_classes(self) -> int:
        return len(self.edges) + 2


def discretize_count(value: float, bins: CountBins) -> int:
    if value < 0 or math.isnan(value):
        raise NegativeCount(f"count must be non-negative, got {value}")
    if value == 0:
        return 0
    return 1 + bisect_left(bins.edges, value)


def discretize_counts(values, bins: CountBins) -> np.ndarray:
    """Vectorised :func:`discretize_count`."""
    arr = np.asarray(values, dtype=np.float64)
    if np.any(~(arr >= 0)):
        raise NegativeCount("counts must be non-negative")
    idx = 1 + np.searchsorted(np.asarray(bins.edges), arr, side="left")
    return np.where(arr == 0, 0, idx)


def bin_bounds(index: int, bins: CountBins) -> tuple[float, float]:
    """``(lo, hi)`` of class ``index``; class 0 is the singleton ``(0, 0)``."""
    edges = bins.edges
    if index == 0:
        return (0.0, 0.0)
    if index == len(edges) + 1:
        return (edges[-1], math.inf)
    if not 1 <= index <= len(edges):
        raise IndexError(f"class index {index} out of range")
    lo = 0.0 if index == 1 else edges[index - 2]
    return (lo, edges[index - 1])
