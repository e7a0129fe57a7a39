"""Stereographic density-map ground truth for omnidirectional counting.

Modules
-------
geom       point projections between 3D, the unit sphere and the image plane
resample   equirectangular -> stereographic image reprojection
density    Gaussian density maps and count discretization
augment    rotate-divide-align augmentation
dataset    manifests, unit-area cropping, file formats
synth      synthetic-scene and Tissot oracles for the distortion model
evalkit    MAE / MSE and comparison tables
"""
__version__ = "0.1.0"

from .backend import NAME as BACKEND
from .errors import OmniDensityError
from .geom import ProjectionParams, SphereRotation

__all__ = ["BACKEND", "OmniDensityError", "ProjectionParams", "SphereRotation", "__version__"]
