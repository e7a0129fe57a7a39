"""``omnidensity`` command line.

Every subcommand writes into ``--out`` atomically and leaves a ``run.json``
there recording the effective configuration, its SHA-256, the hashes of
all inputs read and the tool version.  ``--config run.json`` replays a run;
flags given on the command line override values from the file.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .backend import default_threads
from .errors import OmniDensityError

_NOT_RECORDED = {"config", "threads", "command", "func"}


class _Run:
    """Collects input hashes and writes the run manifest."""

    def __init__(self, args):
        self.args = args
        self.inputs: dict[str, str] = {}

    def read(self, path) -> str:
        path = os.fspath(path)
        h = hashlib.sha256()
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
        self.inputs[os.path.relpath(path, self.args.out) if self.args.out else path] = h.hexdigest()
        return path

    def config(self) -> dict:
        return {k: v for k, v in sorted(vars(self.args).items()) if k not in _NOT_RECORDED}

    def finish(self, extra: dict | None = None) -> dict:
        from .dataset.manifest import write_json

        cfg = self.config()
        # the output location does not change what is produced
        hashed = {k: v for k, v in cfg.items() if k != "out"}
        blob = json.dumps(hashed, sort_keys=True, separators=(",", ":")).encode()
        manifest = {"tool": "omnidensity", "version": __version__, "command": self.args.command,
                    "config": cfg, "config_sha256": hashlib.sha256(blob).hexdigest(),
                    "inputs": dict(sorted(self.inputs.items()))}
        if extra:
            manifest["result"] = extra
        if self.args.out:
            write_json(os.path.join(self.args.out, "run.json"), manifest)
        return manifest


# --- helpers ----------------------------------------------------------------

def _load_stereo(run: _Run, record, base_dir):
    from .dataset.imageio import read_image
    from .geom import ProjectionParams
    from .resample import StereoImage

    data = read_image(run.read(os.path.join(base_dir, record.source)))
    h, w = data.shape[:2]
    if record.size is not None and tuple(record.size) != (w, h):
        raise ValueError(f"{record.image_id}: image is {w}x{h}, manifest says {record.size}")
    params = record.projection or ProjectionParams.for_size(w, h)
    return StereoImage(data, params)


def _load_manifest(run: _Run, path):
    from .dataset.manifest import load_manifest

    return load_manifest(run.read(path)), os.path.dirname(os.path.abspath(path))


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


# --- subcommands ------------------------------------------------------------

def cmd_reproject(args) -> dict:
    from .dataset.imageio import read_image, write_png
    from .dataset.manifest import load_rotation_sidecar, write_json
    from .geom import ProjectionParams
    from .resample import EquirectImage, annotate_reproject, equirect_pixel_to_coord, reproject

    run = _Run(args)
    src = EquirectImage(read_image(run.read(args.input)))
    rot = load_rotation_sidecar(run.read(args.rotation)) if args.rotation else None
    size = args.size or src.height
    params = ProjectionParams.for_size(size, d=args.d, span=args.span)
    out = reproject(src, rot, params, interp=args.interp, threads=args.threads)
    stem = os.path.splitext(os.path.basename(args.input))[0]
    write_png(os.path.join(args.out, f"{stem}.png"), out.data)
    sidecar = {"projection": params.to_dict()}
    if args.points:
        with open(run.read(args.points), encoding="utf-8") as fh:
            pts = json.load(fh)
        uv = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        lon, lat = equirect_pixel_to_coord(uv[:, 0], uv[:, 1], src.width, src.height)
        sidecar["points"] = [list(p) for p in annotate_reproject(np.column_stack([lon, lat]), rot, params)]
    write_json(os.path.join(args.out, f"{stem}.json"), sidecar)
    return run.finish({"output": f"{stem}.png"})


def cmd_crop(args) -> dict:
    from dataclasses import replace

    from .dataset.crop import crop_record
    from .dataset.imageio import write_mask_png, write_png
    from .dataset.manifest import Manifest, save_manifest

    run = _Run(args)
    manifest, base = _load_manifest(run, args.manifest)
    records = []
    for rec in manifest:
        if rec.unit_area is None:
            raise ValueError(f"{rec.image_id}: record has no unit area")
        img = _load_stereo(run, rec, base)
        out, new = crop_record(rec, img, keep_frame=args.keep_frame)
        write_png(os.path.join(args.out, "images", f"{rec.image_id}.png"), out.data)
        write_mask_png(os.path.join(args.out, "masks", f"{rec.image_id}.png"), out.valid_mask())
        records.append(replace(new, source=f"images/{rec.image_id}.png"))
    save_manifest(Manifest(tuple(records)).with_stats(), os.path.join(args.out, "manifest.json"))
    return run.finish({"records": len(records)})


def cmd_augment(args) -> dict:
    from .augment import augment_image, downscale_and_tile
    from .dataset.imageio import write_mask_png, write_png
    from .dataset.manifest import ImageRecord, Manifest, save_manifest, write_json

    run = _Run(args)
    manifest, base = _load_manifest(run, args.manifest)
    records = []
    n_quadrants = 0
    for rec in manifest:
        img = _load_stereo(run, rec, base)
        tiles = augment_image(rec.image_id, img, rec.annotations, n_rotations=args.rotations,
                              flip=args.flip, seed=args.seed, threads=args.threads)
        n_quadrants += len(tiles)
        per_variant = 4
        for k, tile in enumerate(tiles):
            vid = f"{rec.image_id}_v{k // per_variant:02d}_{tile.provenance['quadrant']}"
            parts = ([(vid, tile)] if not args.downscale else
                     [(f"{vid}_t{j}", t) for j, t in
                      enumerate(downscale_and_tile(tile, args.downscale, args.tile_size, args.threads))])
            for tid, t in parts:
                write_png(os.path.join(args.out, "tiles", f"{tid}.png"), t.raster)
                write_mask_png(os.path.join(args.out, "tiles", f"{tid}_mask.png"), t.mask)
                write_json(os.path.join(args.out, "tiles", f"{tid}.json"), t.to_json())
                records.append(ImageRecord(
                    image_id=tid, source=f"tiles/{tid}.png", split=rec.split,
                    annotations=t.annotations, size=(t.raster.shape[1], t.raster.shape[0]),
                    capture=dict(rec.capture), provenance=t.provenance))
    save_manifest(Manifest(tuple(records)).with_stats(), os.path.join(args.out, "manifest.json"))
    return run.finish({"quadrant_images": n_quadrants, "tiles": len(records)})


def _kernel_from_args(args):
    from .density import DistortionAdaptiveKernel, FixedKernel, GeometryAdaptiveKernel

    if args.kernel == "fixed":
        return FixedKernel(sigma=args.sigma, truncation=args.truncation)
    if args.kernel == "geometry-adaptive":
        return GeometryAdaptiveKernel(k=args.k, beta=args.beta, fallback_sigma=args.sigma,
                                      truncation=args.truncation)
    return DistortionAdaptiveKernel(sigma_alpha=args.sigma_alpha, d_norm=args.d_norm,
                                    sigma_min=args.sigma_min, sigma_max=args.sigma_max,
                                    truncation=args.truncation)


def cmd_densify(args) -> dict:
    from dataclasses import replace

    from .dataset.imageio import density_preview, write_fimg, write_png
    from .dataset.manifest import write_json
    from .density import DistortionAdaptiveKernel, kernel_to_dict, render_density

    run = _Run(args)
    manifest, _ = _load_manifest(run, args.manifest)
    spec = _kernel_from_args(args)
    counts = {}
    for rec in manifest:
        size = rec.image_size
        if size is None:
            raise ValueError(f"{rec.image_id}: record has no size")
        w, h = size
        prov = rec.provenance or {}
        if "center" in prov:
            center = tuple(prov["center"])
        elif rec.projection is not None:
            center = rec.projection.center
        else:
            center = ((w - 1) / 2.0, (h - 1) / 2.0)
        rec_spec = spec
        if isinstance(spec, DistortionAdaptiveKernel) and spec.d_norm is None and "d_norm" in prov:
            rec_spec = replace(spec, d_norm=float(prov["d_norm"]))
        dmap = render_density(rec.annotations, (w, h), center=center, spec=rec_spec)
        write_fimg(os.path.join(args.out, f"{rec.image_id}.fimg"), dmap.values)
        write_png(os.path.join(args.out, f"{rec.image_id}.png"), density_preview(dmap.values))
        counts[rec.image_id] = dmap.count()
    write_json(os.path.join(args.out, "counts.json"), counts)
    return run.finish({"maps": len(counts), "kernel": kernel_to_dict(spec)})


def _disk_overlay(img, rows) -> np.ndarray:
    rgb = np.repeat(img.data.astype(np.float32), 3, axis=2) * 0.6
    h, w = rgb.shape[:2]
    for r in rows:
        u, v = int(round(r["centroid_u"])), int(round(r["centroid_v"]))
        rgb[max(0, v - 1):min(h, v + 2), max(0, u - 1):min(w, u + 2)] = (1.0, 0.0, 0.0)
    return rgb


def cmd_synth(args) -> dict:
    from .dataset.imageio import atomic_write_bytes, write_png
    from .dataset.manifest import write_json
    from .synth import default_scene, synth_report

    run = _Run(args)
    spec = default_scene(size=args.size, plane_z=args.plane_z, disk_radius=args.disk_radius,
                         ring_step=args.ring_step, azimuths=args.azimuths, span=args.span, d=args.d)
    report, img = synth_report(spec, sigma_alpha=args.sigma_alpha)
    atomic_write_bytes(os.path.join(args.out, "report.csv"), report.to_csv().encode())
    write_json(os.path.join(args.out, "summary.json"), report.summary())
    write_png(os.path.join(args.out, "scene.png"), img.data)
    write_png(os.path.join(args.out, "centroids.png"), _disk_overlay(img, report.rows))
    _emit(report.summary())
    return run.finish(report.summary())


def cmd_tissot(args) -> dict:
    from .dataset.imageio import atomic_write_bytes, write_png
    from .geom import ProjectionParams
    from .synth import random_directions, tissot

    run = _Run(args)
    rng = np.random.default_rng(args.seed)
    dirs = random_directions(args.count, rng, min_angle_from_north=max(0.1, 3 * args.epsilon))
    params = ProjectionParams.for_size(args.size, d=args.d, span=args.span)
    lines = ["mode,x,y,z,lat_deg,a,b,eccentricity"]
    worst = {}
    samples = {}
    for mode in ("stereographic", "equirectangular"):
        samples[mode] = tissot(dirs, args.epsilon, params, mode=mode)
        for s in samples[mode]:
            lat = math.degrees(math.asin(max(-1.0, min(1.0, s.direction[2]))))
            lines.append(f"{mode},{s.direction[0]!r},{s.direction[1]!r},{s.direction[2]!r},"
                         f"{lat!r},{s.a!r},{s.b!r},{s.eccentricity!r}")
        worst[mode] = max(s.eccentricity for s in samples[mode])
    atomic_write_bytes(os.path.join(args.out, "tissot.csv"), ("\n".join(lines) + "\n").encode())
    canvas = np.zeros((params.height, params.width), dtype=np.float32)
    for s in samples["stereographic"]:
        uv = np.rint(s.outline).astype(int)
        ok = (uv[:, 0] >= 0) & (uv[:, 0] < params.width) & (uv[:, 1] >= 0) & (uv[:, 1] < params.height)
        canvas[uv[ok, 1], uv[ok, 0]] = 1.0
    write_png(os.path.join(args.out, "tissot.png"), canvas)
    result = {"max_eccentricity": worst, "n": len(dirs)}
    _emit(result)
    return run.finish(result)


def _pred_sources(values):
    out = []
    for v in values:
        label, sep, path = v.partition("=")
        out.append((label, path) if sep else (os.path.basename(os.path.normpath(v)) or v, v))
    return out


def cmd_eval(args) -> dict:
    from .dataset.imageio import atomic_write_bytes
    from .evalkit import ablation_table, evaluate_dir, map_path

    run = _Run(args)
    manifest, _ = _load_manifest(run, args.gt)
    rows = []
    for label, directory in _pred_sources(args.pred):
        result = evaluate_dir(directory, manifest)
        for rec in manifest:
            run.read(map_path(directory, rec.image_id))
        rows.append((label, result))
    table = ablation_table(rows, fmt=args.format, mse_label=args.mse_label)
    sys.stdout.write(table)
    if args.out:
        atomic_write_bytes(os.path.join(args.out, f"table.{'csv' if args.format == 'csv' else 'md'}"),
                           table.encode())
    return run.finish({label: {"mae": r.mae, "mse": r.mse, "n": r.n} for label, r in rows})


def cmd_discretize(args) -> dict:
    from .dataset.manifest import write_json
    from .density import CountBins, discretize_count

    run = _Run(args)
    if args.manifest:
        manifest, _ = _load_manifest(run, args.manifest)
        values = {r.image_id: float(r.count) for r in manifest}
    else:
        with open(run.read(args.counts), encoding="utf-8") as fh:
            raw = json.load(fh)
        values = ({str(k): float(v) for k, v in raw.items()} if isinstance(raw, dict)
                  else {str(i): float(v) for i, v in enumerate(raw)})
    bins = (CountBins(c_max=args.c_max) if args.c_max is not None
            else CountBins.from_counts(list(values.values())))
    classes = {k: discretize_count(v, bins) for k, v in values.items()}
    result = {"c_max": bins.c_max, "edges": list(bins.edges), "n_classes": bins.n_classes,
              "classes": classes}
    if args.out:
        write_json(os.path.join(args.out, "classes.json"), result)
    else:
        _emit(result)
    return run.finish({"n_classes": bins.n_classes})


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $OMNIDENSITY_THREADS or 1)")
    common.add_argument("--config", default=None, help="JSON config or run.json to replay")

    p = argparse.ArgumentParser(prog="omnidensity", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("reproject", parents=[common], help="equirectangular -> stereographic")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--rotation", default=None, help="rotation sidecar JSON")
    s.add_argument("--size", type=int, default=None, help="output side (default: input height)")
    s.add_argument("--span", type=float, default=4.0)
    s.add_argument("--d", type=float, default=1.0)
    s.add_argument("--interp", choices=("bilinear", "nearest"), default="bilinear")
    s.add_argument("--points", default=None, help="JSON list of equirect [u, v] points to carry")
    s.set_defaults(func=cmd_reproject)

    s = sub.add_parser("crop", parents=[common], help="crop unit areas")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--keep-frame", action="store_true")
    s.set_defaults(func=cmd_crop)

    s = sub.add_parser("augment", parents=[common], help="rotate-divide-align")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--rotations", type=int, default=2)
    s.add_argument("--flip", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--downscale", type=int, default=0, help="quadrant side after downscaling (0: off)")
    s.add_argument("--tile-size", type=int, default=512)
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("densify", parents=[common], help="render density maps")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--kernel", choices=("fixed", "geometry-adaptive", "distortion-adaptive"),
                   default="distortion-adaptive")
    s.add_argument("--sigma", type=float, default=8.0)
    s.add_argument("--sigma-alpha", type=float, default=12.0)
    s.add_argument("--sigma-min", type=float, default=2.0)
    s.add_argument("--sigma-max", type=float, default=None)
    s.add_argument("--d-norm", type=float, default=None)
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--beta", type=float, default=0.3)
    s.add_argument("--truncation", type=float, default=4.0)
    s.set_defaults(func=cmd_densify)

    s = sub.add_parser("synth", parents=[common], help="synthetic disk scene report")
    s.add_argument("--out", required=True)
    s.add_argument("--size", type=int, default=1024)
    s.add_argument("--plane-z", type=float, default=-2.0)
    s.add_argument("--disk-radius", type=float, default=0.3)
    s.add_argument("--ring-step", type=float, default=0.8)
    s.add_argument("--azimuths", type=int, default=6)
    s.add_argument("--span", type=float, default=4.0)
    s.add_argument("--d", type=float, default=1.0)
    s.add_argument("--sigma-alpha", type=float, default=12.0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("tissot", parents=[common], help="small-circle distortion check")
    s.add_argument("--out", required=True)
    s.add_argument("--epsilon", type=float, default=0.01)
    s.add_argument("--count", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--size", type=int, default=1024)
    s.add_argument("--span", type=float, default=4.0)
    s.add_argument("--d", type=float, default=1.0)
    s.set_defaults(func=cmd_tissot)

    s = sub.add_parser("eval", parents=[common], help="MAE / MSE against a manifest")
    s.add_argument("--gt", required=True, help="ground-truth manifest")
    s.add_argument("--pred", action="append", required=True, help="map dir, or label=dir (repeatable)")
    s.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    s.add_argument("--mse-label", default="MSE")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("discretize", parents=[common], help="count classes")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--manifest", default=None)
    g.add_argument("--counts", default=None, help="JSON list or {id: count}")
    s.add_argument("--c-max", type=float, default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_discretize)
    return p


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config and argv and not argv[0].startswith("-"):
        with open(known.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
        cfg = cfg.get("config", cfg)
        sub = parser._subparsers._group_actions[0].choices.get(argv[0])
        if sub is not None:
            known_dests = {a.dest for a in sub._actions}
            unknown = sorted(set(cfg) - known_dests)
            if unknown:
                parser.error(f"unknown config keys for {argv[0]}: {unknown}")
            sub.set_defaults(**cfg)
            # required flags may now come from the file
            for action in sub._actions:
                if action.dest in cfg:
                    action.required = False
    args = parser.parse_args(argv)
    if args.command == "discretize" and not (args.manifest or args.counts):
        parser.error("discretize needs --manifest or --counts")
    if args.threads is None:
        args.threads = default_threads()
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except (OmniDensityError, OSError, ValueError, KeyError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("ids", "record_id"):
            if hasattr(exc, attr):
                err[attr] = getattr(exc, attr)
        sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
