import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=300,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def random_unit(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def kasa_circle(points):
    """Least-squares circle through 2D points: (centre, radius, max relative
    radial residual)."""
    x, y = np.asarray(points, dtype=np.float64).T
    a = np.column_stack([x, y, np.ones_like(x)])
    b = x * x + y * y
    (p, q, r), *_ = np.linalg.lstsq(a, b, rcond=None)
    cx, cy = p / 2, q / 2
    radius = np.sqrt(r + cx * cx + cy * cy)
    resid = np.abs(np.hypot(x - cx, y - cy) - radius) / radius
    return (cx, cy), radius, float(resid.max())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_dataset(root, n_records=3, size=64, n_anns=10, seed=0, with_area=True, groups=2):
    """Write a small synthetic stereographic dataset and return the manifest path."""
    from omnidensity.dataset.imageio import write_png
    from omnidensity.dataset.manifest import ImageRecord, Manifest, UnitArea, save_manifest
    from omnidensity.density import Annotation

    gen = np.random.default_rng(seed)
    recs = []
    for i in range(n_records):
        name = f"img{i:04d}.png"
        write_png(os.path.join(root, name), gen.random((size, size, 3)))
        anns = []
        for _ in range(n_anns):
            u, v = gen.uniform(3, size - 4, 2)
            anns.append(Annotation.from_bbox((u - 2, v - 2, u + 2, v + 2)))
        m = size / 8
        area = UnitArea(f"a{i}", ((m, m), (size - m, m + 1), (size - m, size - m), (m + 1, size - m)))
        recs.append(ImageRecord(f"r{i:04d}", name, "train", tuple(anns), (size, size),
                                unit_area=area if with_area else None,
                                capture={"trellis": str(i % groups)}))
    path = os.path.join(root, "manifest.json")
    save_manifest(Manifest(tuple(recs)).with_stats(), path)
    return path
