"""Dataset manifest: image records, unit areas, JSON round-trip and splits.

Schema (``schema_version`` 1)::

    {
      "schema_version": 1,
      "records": [
        {"id": "t1_a01_0", "source": "raw/R001.JPG", "split": "train",
         "size": [2688, 2688],
         "rotation": {"roll": 0.0, "pitch": 0.0, "yaw": 0.0},
         "projection": {"width": 2688, ..., "d": 1.0},
         "unit_area": {"id": "a01", "corners": [[u, v], x4]},
         "annotations": [{"bbox": [u_min, v_min, u_max, v_max]}],
         "capture": {"date": "2019-05-13", "trellis": "1"},
         "provenance": {}}
      ],
      "stats": {"counts": {"t1_a01_0": 41}, "mean_count": 41.0, "n_records": 1}
    }

Coordinates are pixels, origin at the top-left pixel centre, u right, v down.
Files are written with sorted keys and fixed indentation so that
save -> load -> save is byte-stable.
"""
from __future__ import annotations

import json
import math
import os
import warnings
from dataclasses import dataclass, field, replace
from typing import Any

from ..density import Annotation
from ..errors import MalformedRecord, MissingGroupKey, SchemaVersionMismatch, UnknownGroup
from ..geom import ProjectionParams, SphereRotation
from .imageio import atomic_write_bytes
from .polygon import is_simple

SCHEMA_VERSION = 1
SPLITS = ("train", "test")


@dataclass(frozen=True)
class UnitArea:
    """Counting cell delimited by hand-located corner markers."""

    area_id: str
    corners: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "corners", tuple((float(u), float(v)) for u, v in self.corners))

    def to_dict(self) -> dict:
        return {"id": self.area_id, "corners": [list(c) for c in self.corners]}

    @classmethod
    def from_dict(cls, data: dict) -> "UnitArea":
        return cls(str(data["id"]), tuple(tuple(c) for c in data["corners"]))


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    source: str
    split: str
    annotations: tuple[Annotation, ...] = ()
    size: tuple[int, int] | None = None
    rotation: dict | None = None
    projection: ProjectionParams | None = None
    unit_area: UnitArea | None = None
    capture: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.annotations)

    @property
    def image_size(self) -> tuple[int, int] | None:
        if self.size is not None:
            return self.size
        if self.projection is not None:
            return (self.projection.width, self.projection.height)
        return None

    def sphere_rotation(self) -> SphereRotation | None:
        return None if self.rotation is None else rotation_from_sidecar(self.rotation)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "id": self.image_id,
            "source": self.source,
            "split": self.split,
            "annotations": [_ann_to_dict(a) for a in self.annotations],
            "capture": dict(self.capture),
        }
        if self.size is not None:
            out["size"] = list(self.size)
        if self.rotation is not None:
            out["rotation"] = self.rotation
        if self.projection is not None:
            out["projection"] = self.projection.to_dict()
        if self.unit_area is not None:
            out["unit_area"] = self.unit_area.to_dict()
        if self.provenance:
            out["provenance"] = self.provenance
        return out


def _ann_to_dict(a: Annotation) -> dict:
    u0, v0, u1, v1 = a.bbox
    out: dict = {"bbox": [u0, v0, u1, v1]}
    if a.center != ((u0 + u1) / 2.0, (v0 + v1) / 2.0):
        out["center"] = list(a.center)
    return out


def record_from_dict(data: dict) -> ImageRecord:
    rid = data.get("id", "<missing id>")
    try:
        anns = []
        for k, ad in enumerate(data.get("annotations", [])):
            try:
                anns.append(Annotation.from_dict(ad))
            except (ValueError, TypeError, KeyError) as exc:
                raise MalformedRecord(rid, f"annotation {k}: {exc}") from None
        rec = ImageRecord(
            image_id=str(data["id"]),
            source=str(data.get("source", "")),
            split=str(data["split"]),
            annotations=tuple(anns),
            size=tuple(int(x) for x in data["size"]) if data.get("size") else None,
            rotation=data.get("rotation"),
            projection=ProjectionParams.from_dict(data["projection"]) if data.get("projection") else None,
            unit_area=UnitArea.from_dict(data["unit_area"]) if data.get("unit_area") else None,
            capture=dict(data.get("capture", {})),
            provenance=dict(data.get("provenance", {})),
        )
    except MalformedRecord:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise MalformedRecord(rid, f"{type(exc).__name__}: {exc}") from None
    problem = _bounds_problem(rec)
    if problem:
        raise MalformedRecord(rec.image_id, problem)
    return rec


def _bounds_problem(rec: ImageRecord) -> str | None:
    size = rec.image_size
    if size is None:
        return None
    w, h = size
    for k, a in enumerate(rec.annotations):
        u0, v0, u1, v1 = a.bbox
        if u0 < -0.5 or v0 < -0.5 or u1 > w - 0.5 or v1 > h - 0.5:
            return f"annotation {k} bbox {list(a.bbox)} outside {w}x{h} image"
    return None


@dataclass(frozen=True)
class Manifest:
    records: tuple[ImageRecord, ...] = ()
    schema_version: int = SCHEMA_VERSION
    stats: dict | None = None

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def by_id(self) -> dict[str, ImageRecord]:
        return {r.image_id: r for r in self.records}

    def computed_stats(self) -> dict:
        counts = {r.image_id: r.count for r in self.records}
        mean = sum(counts.values()) / len(counts) if counts else 0.0
        return {"counts": counts, "mean_count": mean, "n_records": len(counts)}

    def with_stats(self) -> "Manifest":
        return replace(self, stats=self.computed_stats())

    def to_dict(self) -> dict:
        stats = self.stats if self.stats is not None else self.computed_stats()
        return {"schema_version": self.schema_version,
                "records": [r.to_dict() for r in self.records],
                "stats": stats}


def manifest_from_dict(data: dict) -> Manifest:
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"expected schema_version {SCHEMA_VERSION}, got {version!r}")
    records = tuple(record_from_dict(r) for r in data.get("records", []))
    return Manifest(records=records, schema_version=version, stats=data.get("stats"))


def dumps_manifest(manifest: Manifest) -> str:
    return json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n"


def load_manifest(path) -> Manifest:
    with open(path, encoding="utf-8") as fh:
        return manifest_from_dict(json.load(fh))


def save_manifest(manifest: Manifest, path) -> None:
    atomic_write_bytes(path, dumps_manifest(manifest).encode("utf-8"))


@dataclass
class ValidationReport:
    issues: list[tuple[str | None, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def add(self, record_id, message):
        self.issues.append((record_id, message))

    def __str__(self):
        if self.ok:
            return "manifest valid"
        return "\n".join(f"{rid or '<manifest>'}: {msg}" for rid, msg in self.issues)


def validate_manifest(manifest) -> ValidationReport:
    """Report invariant violations.  Accepts a Manifest or its raw JSON dict;
    nothing is mutated and nothing is raised for bad content."""
    report = ValidationReport()
    if isinstance(manifest, dict):
        if manifest.get("schema_version") != SCHEMA_VERSION:
            report.add(None, f"schema_version {manifest.get('schema_version')!r} != {SCHEMA_VERSION}")
        records = []
        for raw in manifest.get("records", []):
            try:
                records.append(record_from_dict(raw))
            except MalformedRecord as exc:
                report.add(exc.record_id, str(exc))
        stats = manifest.get("stats")
        if report.issues:
            return report
        manifest = Manifest(tuple(records), SCHEMA_VERSION, stats)

    seen: set[str] = set()
    for rec in manifest.records:
        if rec.image_id in seen:
            report.add(rec.image_id, "duplicate id")
        seen.add(rec.image_id)
        if rec.split not in SPLITS:
            report.add(rec.image_id, f"split tag {rec.split!r} not in {SPLITS}")
        problem = _bounds_problem(rec)
        if problem:
            report.add(rec.image_id, problem)
        if rec.unit_area is not None:
            if len(rec.unit_area.corners) != 4:
                report.add(rec.image_id, "unit area must have 4 corners")
            elif not is_simple(rec.unit_area.corners):
                report.add(rec.image_id, "unit area polygon self-intersects")
        if rec.rotation is not None:
            try:
                rotation_from_sidecar(rec.rotation)
            except (ValueError, KeyError, TypeError) as exc:
                report.add(rec.image_id, f"bad rotation: {exc}")

    if manifest.stats is not None:
        expected = manifest.computed_stats()
        got = manifest.stats
        if got.get("n_records") != expected["n_records"]:
            report.add(None, f"stats n_records {got.get('n_records')} != {expected['n_records']}")
        if dict(got.get("counts", {})) != expected["counts"]:
            report.add(None, "stats counts disagree with records")
        mean = got.get("mean_count")
        if mean is None or not math.isclose(mean, expected["mean_count"], rel_tol=1e-9, abs_tol=1e-9):
            report.add(None, f"stats mean_count {mean} != {expected['mean_count']}")
    return report


def split_by_group(manifest: Manifest, key: str = "trellis", train_groups=None) -> tuple[Manifest, Manifest]:
    """Partition records by ``capture[key]``.

    ``train_groups`` lists the group values used for training; by default
    the first group value in record order.  Records keep their order and get
    their ``split`` tag rewritten.
    """
    missing = [r.image_id for r in manifest.records if key not in r.capture]
    if missing:
        raise MissingGroupKey(missing)
    groups = list(dict.fromkeys(str(r.capture[key]) for r in manifest.records))
    if train_groups is None:
        train = set(groups[:1])
    else:
        train = {str(g) for g in ([train_groups] if isinstance(train_groups, (str, int)) else train_groups)}
        unknown = sorted(train - set(groups))
        if unknown:
            raise UnknownGroup(f"unknown {key} values: {unknown}")
    tr = tuple(replace(r, split="train") for r in manifest.records if str(r.capture[key]) in train)
    te = tuple(replace(r, split="test") for r in manifest.records if str(r.capture[key]) not in train)
    if not tr or not te:
        warnings.warn(f"split by {key!r} leaves one side empty ({len(tr)} train / {len(te)} test)",
                      stacklevel=2)
    return (Manifest(tr).with_stats(), Manifest(te).with_stats())


# --- rotation sidecar -------------------------------------------------------

# Raw equirectangular frames have +z up.  The working frame has +z along
# gravity so the overhead trellis falls in the -z hemisphere near O_c.
_UP_TO_DOWN = SphereRotation.about_axis((1, 0, 0), math.pi)


def rotation_from_sidecar(data: dict) -> SphereRotation:
    """Alignment rotation from a sidecar dict.

    ``{"matrix": [[...]x3]}`` is used verbatim.  Otherwise ``roll``,
    ``pitch``, ``yaw`` (radians) give the camera attitude
    ``Rz(yaw) Ry(pitch) Rx(roll)`` w.r.t. a levelled z-up frame; the result
    undoes it and turns +z to point down.
    """
    if "matrix" in data:
        return SphereRotation(data["matrix"])
    att = SphereRotation.from_euler(float(data.get("roll", 0.0)), float(data.get("pitch", 0.0)),
                                    float(data.get("yaw", 0.0)))
    return _UP_TO_DOWN @ att.inverse()


def load_rotation_sidecar(path) -> SphereRotation:
    with open(path, encoding="utf-8") as fh:
        return rotation_from_sidecar(json.load(fh))


def sidecar_from_exif(jpeg_path) -> dict | None:
    """Best-effort import of GPano pose tags (degrees) from a JPEG's XMP.

    Returns a sidecar dict in radians, or None when no pose is recorded.
    """
    import re

    with open(jpeg_path, "rb") as fh:
        raw = fh.read()
    start = raw.find(b"<x:xmpmeta")
    if start < 0:
        return None
    xmp = raw[start:raw.find(b"</x:xmpmeta>", start) + 12].decode("utf-8", "replace")
    found = {}
    for tag, name in (("PoseRollDegrees", "roll"), ("PosePitchDegrees", "pitch"),
                      ("PoseHeadingDegrees", "yaw")):
        m = (re.search(rf'GPano:{tag}="([-+0-9.eE]+)"', xmp)
             or re.search(rf"<GPano:{tag}>([-+0-9.eE]+)</GPano:{tag}>", xmp))
        if m:
            found[name] = math.radians(float(m.group(1)))
    return found or None


def write_json(path, obj) -> None:
    atomic_write_bytes(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def ensure_dir(path) -> None:
    os.makedirs(path, exist_ok=True)
