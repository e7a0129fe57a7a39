"""Time equirectangular -> stereographic reprojection per backend and thread count.

    python benchmarks/bench_reproject.py --height 2688 --threads 1 2 4
"""
import argparse
import json
import os
import time

import numpy as np

from omnidensity import backend
from omnidensity.geom import ProjectionParams, SphereRotation
from omnidensity.resample import EquirectImage, reproject


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--height", type=int, default=2688, help="source height; width is twice this")
    ap.add_argument("--size", type=int, default=None, help="output side (default: height)")
    ap.add_argument("--threads", type=int, nargs="+", default=[1, 2, 4])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--interp", choices=("bilinear", "nearest"), default="bilinear")
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args(argv)

    rot = SphereRotation.from_euler(0.1, -0.2, 0.3)
    rng = np.random.default_rng(0)
    rows = []
    names = ["compiled", "python"] if backend.compiled is not None else ["python"]
    h = args.height
    size = args.size or h
    src = EquirectImage(rng.random((h, 2 * h, 3), dtype=np.float32))
    params = ProjectionParams.for_size(size)
    for name in names:
        ref = None
        for t in args.threads:
            secs, out = best_of(lambda: reproject(src, rot, params, interp=args.interp,
                                                  threads=t, backend_name=name), args.repeat)
            blob = out.data.tobytes()
            ref = blob if ref is None else ref
            rows.append({"backend": name, "source": f"{2 * h}x{h}", "output": f"{size}x{size}",
                         "threads": t, "seconds": secs, "mpix_per_s": size * size / secs / 1e6,
                         "identical": blob == ref})
    for name in names:
        base = next(r["seconds"] for r in rows if r["backend"] == name)
        for r in rows:
            if r["backend"] == name:
                r["speedup"] = base / r["seconds"]

    if args.json:
        print(json.dumps({"cpus": os.cpu_count(), "rows": rows}, indent=2))
        return
    print(f"cpus: {os.cpu_count()}")
    print(f"{'backend':9} {'source':>11} {'output':>11} {'thr':>3} {'sec':>8} {'Mpx/s':>7} {'speedup':>7} same")
    for r in rows:
        print(f"{r['backend']:9} {r['source']:>11} {r['output']:>11} {r['threads']:>3} "
              f"{r['seconds']:8.3f} {r['mpix_per_s']:7.2f} {r['speedup']:7.2f} {r['identical']}")


if __name__ == "__main__":
    main()
