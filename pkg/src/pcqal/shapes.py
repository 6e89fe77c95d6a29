"""Synthetic ground-truth shapes for the fitting experiments.

Each generator is a deterministic function of (kind, scale, n_points, seed)
and keeps every point inside the sphere of radius ``scale`` around the
origin. RingWithSpur and Cross3D carry a thin substructure holding 10 to
25 percent of the points; its membership flags come from the generator
itself, which is what makes "did the fit recover the thin part" a number
instead of a picture.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .errors import InvalidParamsError

__all__ = ["ShapeSpec", "SHAPE_KINDS", "generate_shape", "generate_shape_labeled"]

SHAPE_KINDS = ("RingWithSpur", "Cross3D", "ThinPlate", "UniformSphere")

# shapes whose contract includes the labeled thin substructure; these need
# enough points for the 10-25% band to contain an integer count
_SUBSTRUCTURE_KINDS = ("RingWithSpur", "Cross3D")

_SUB_FRACTION = 0.15


@dataclass(frozen=True)
class ShapeSpec:
    kind: str
    scale: float = 1.0
    n_points: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise InvalidParamsError(
                f"kind must be one of {SHAPE_KINDS}, got {self.kind!r}")
        if not (self.scale > 0):
            raise InvalidParamsError(f"scale must be > 0, got {self.scale}")
        min_n = 16 if self.kind in _SUBSTRUCTURE_KINDS else 1
        if self.n_points < min_n:
            raise InvalidParamsError(
                f"{self.kind} needs n_points >= {min_n}, got {self.n_points}")


def _sub_count(n: int) -> int:
    lo = int(np.ceil(0.10 * n))
    hi = int(np.floor(0.25 * n))
    return int(np.clip(round(_SUB_FRACTION * n), lo, hi))


def _ring_with_spur(spec: ShapeSpec, rng) -> tuple[np.ndarray, np.ndarray]:
    # planar ring of radius 0.8*scale plus a vertical spur segment rising
    # 0.5*scale from the ring at angle 0; the spur is the thin substructure
    n_spur = _sub_count(spec.n_points)
    n_ring = spec.n_points - n_spur
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n_ring)
    r = 0.8 * spec.scale
    ring = np.stack([r * np.cos(theta), r * np.sin(theta),
                     np.zeros(n_ring)], axis=1)
    t = rng.uniform(0.0, 1.0, size=n_spur)
    spur = np.stack([np.full(n_spur, r), np.zeros(n_spur),
                     0.5 * spec.scale * t], axis=1)
    pts = np.vstack([ring, spur])
    flags = np.zeros(spec.n_points, dtype=bool)
    flags[n_ring:] = True
    return pts, flags


def _cross3d(spec: ShapeSpec, rng) -> tuple[np.ndarray, np.ndarray]:
    # two in-plane arms along x and y, plus a thinner out-of-plane strut
    # along z (the substructure); every arm spans [-0.9, 0.9]*scale
    n_strut = _sub_count(spec.n_points)
    n_plane = spec.n_points - n_strut
    n_x = n_plane // 2
    n_y = n_plane - n_x
    half = 0.9 * spec.scale
    tx = rng.uniform(-half, half, size=n_x)
    ty = rng.uniform(-half, half, size=n_y)
    tz = rng.uniform(-half, half, size=n_strut)
    zeros = np.zeros
    arm_x = np.stack([tx, zeros(n_x), zeros(n_x)], axis=1)
    arm_y = np.stack([zeros(n_y), ty, zeros(n_y)], axis=1)
    strut = np.stack([zeros(n_strut), zeros(n_strut), tz], axis=1)
    pts = np.vstack([arm_x, arm_y, strut])
    flags = np.zeros(spec.n_points, dtype=bool)
    flags[n_plane:] = True
    return pts, flags


def _thin_plate(spec: ShapeSpec, rng) -> tuple[np.ndarray, np.ndarray]:
    half = 0.7 * spec.scale
    xy = rng.uniform(-half, half, size=(spec.n_points, 2))
    z = rng.uniform(-0.01 * spec.scale, 0.01 * spec.scale, size=(spec.n_points, 1))
    pts = np.hstack([xy, z])
    return pts, np.zeros(spec.n_points, dtype=bool)


def _uniform_sphere(spec: ShapeSpec, rng) -> tuple[np.ndarray, np.ndarray]:
    v = rng.normal(size=(spec.n_points, 3))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    # a zero draw is essentially impossible but would poison the whole cloud
    norms[norms == 0] = 1.0
    pts = spec.scale * v / norms
    return pts, np.zeros(spec.n_points, dtype=bool)


_GENERATORS = {
    "RingWithSpur": _ring_with_spur,
    "Cross3D": _cross3d,
    "ThinPlate": _thin_plate,
    "UniformSphere": _uniform_sphere,
}


def generate_shape_labeled(spec: ShapeSpec) -> tuple[PointCloud, np.ndarray]:
    """Generate a shape and its substructure membership flags.

    Returns (cloud, flags) where flags[i] is True iff point i belongs to
    the thin substructure (always all-False for ThinPlate and
    UniformSphere).
    """
    rng = np.random.default_rng(spec.seed)
    pts, flags = _GENERATORS[spec.kind](spec, rng)
    flags.setflags(write=False)
    return PointCloud(pts, label=spec.kind), flags


def generate_shape(spec: ShapeSpec) -> PointCloud:
    """Deterministic synthetic cloud for a ShapeSpec."""
    cloud, _ = generate_shape_labeled(spec)
    return cloud
