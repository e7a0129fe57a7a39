"""Unit-area cropping.

The crop region is the convex hull of the unit-area polygon together with
every corner of the bounding boxes whose centre lies inside that polygon,
so objects straddling the marker contour are never cut.  The output raster
is the hull's bounding rectangle; pixels whose centre is outside the hull
are black and flagged invalid.
"""
from __future__ import annotations

import math
from dataclasses import replace

from ..density import Annotation
from ..geom import ProjectionParams
from ..resample import StereoImage
from .manifest import UnitArea
from .polygon import convex_hull, point_in_polygon, polygon_mask


def annotations_in_area(area: UnitArea, anns) -> list[Annotation]:
    return [a for a in anns if point_in_polygon(a.center, area.corners)]


def crop_region(area: UnitArea, anns) -> tuple[list[tuple[float, float]], list[Annotation]]:
    """Hull polygon and the annotations kept for ``area``."""
    kept = annotations_in_area(area, anns)
    pts = list(area.corners)
    for a in kept:
        pts.extend(a.corners())
    return convex_hull(pts), kept


def crop_unit_area(img: StereoImage, area: UnitArea, anns, keep_frame: bool = False):
    """Returns ``(cropped StereoImage, shifted annotations, provenance)``.

    With ``keep_frame`` the raster keeps its full size (and its centred,
    square geometry) and only the outside of the hull is masked.  Otherwise
    the raster is cut to the hull's bounding rectangle, widened if needed so
    that the projection centre stays inside it.
    """
    hull, kept = crop_region(area, anns)
    p = img.params
    if keep_frame:
        j0, j1, i0, i1 = 0, img.width - 1, 0, img.height - 1
    else:
        us = [q[0] for q in hull]
        vs = [q[1] for q in hull]
        # pixel j spans [j-0.5, j+0.5]; smallest pixel range covering the hull,
        # widened so that the projection centre stays inside the raster
        cu, cv = math.floor(p.center_u), math.floor(p.center_v)
        j0 = max(0, min(math.floor(min(us) + 0.5), cu))
        j1 = min(img.width - 1, max(math.ceil(max(us) - 0.5), cu))
        i0 = max(0, min(math.floor(min(vs) + 0.5), cv))
        i1 = min(img.height - 1, max(math.ceil(max(vs) - 0.5), cv))
    data = img.data[i0:i1 + 1, j0:j1 + 1].copy()
    local_hull = [(u - j0, v - i0) for u, v in hull]
    inside = polygon_mask(local_hull, data.shape[:2])
    if img.mask is not None:
        inside &= img.mask[i0:i1 + 1, j0:j1 + 1]
    data[~inside] = 0.0
    params = ProjectionParams(width=data.shape[1], height=data.shape[0], scale=p.scale,
                              center_u=p.center_u - j0, center_v=p.center_v - i0, d=p.d)
    shifted = [Annotation((a.bbox[0] - j0, a.bbox[1] - i0, a.bbox[2] - j0, a.bbox[3] - i0),
                          (a.center[0] - j0, a.center[1] - i0)) for a in kept]
    provenance = {
        "unit_area": area.area_id,
        "hull": [list(q) for q in hull],
        "offset": [j0, i0],
        "keep_frame": keep_frame,
    }
    out = StereoImage(data, params, mask=inside, meta={**img.meta, "crop": provenance})
    return out, shifted, provenance


def crop_record(record, img: StereoImage, keep_frame: bool = False):
    """Crop a manifest record; returns (image, updated record)."""
    out, anns, prov = crop_unit_area(img, record.unit_area, record.annotations, keep_frame)
    rec = replace(record, annotations=tuple(anns), size=(out.width, out.height),
                  projection=out.params, provenance={**record.provenance, "crop": prov})
    return out, rec


def hull_contains_bbox(hull, bbox) -> bool:
    u0, v0, u1, v1 = bbox
    return all(point_in_polygon(c, hull) for c in ((u0, v0), (u1, v0), (u1, v1), (u0, v1)))


def raster_contains_bbox(shape, bbox) -> bool:
    h, w = shape[:2]
    u0, v0, u1, v1 = bbox
    return u0 >= -0.5 and v0 >= -0.5 and u1 <= w - 0.5 and v1 <= h - 0.5

