"""Dataset construction: manifests, unit-area cropping and file formats."""
from .crop import crop_record, crop_region, crop_unit_area
from .imageio import read_fimg, read_image, write_fimg, write_png
from .manifest import (
    ImageRecord,
    Manifest,
    UnitArea,
    ValidationReport,
    load_manifest,
    load_rotation_sidecar,
    rotation_from_sidecar,
    save_manifest,
    split_by_group,
    validate_manifest,
)
from .polygon import convex_hull, point_in_polygon, polygon_mask

__all__ = [
    "ImageRecord", "Manifest", "UnitArea", "ValidationReport",
    "convex_hull", "crop_record", "crop_region", "crop_unit_area",
    "load_manifest", "load_rotation_sidecar", "point_in_polygon", "polygon_mask",
    "read_fimg", "read_image", "rotation_from_sidecar", "save_manifest",
    "split_by_group", "validate_manifest", "write_fimg", "write_png",
]
