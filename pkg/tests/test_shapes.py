import numpy as np
import pytest

from pcqal.errors import InvalidParamsError
from pcqal.shapes import SHAPE_KINDS, ShapeSpec, generate_shape, generate_shape_labeled


@pytest.mark.parametrize("kind", SHAPE_KINDS)
def test_deterministic(kind):
    spec = ShapeSpec(kind, 1.0, 200, seed=7)
    a = generate_shape(spec)
    b = generate_shape(spec)
    assert np.array_equal(a.points, b.points)


@pytest.mark.parametrize("kind", SHAPE_KINDS)
def test_within_bounding_sphere(kind):
    for scale in (0.5, 1.0, 3.0):
        cloud = generate_shape(ShapeSpec(kind, scale, 300, seed=1))
        r = np.linalg.norm(cloud.points, axis=1).max()
        assert r <= scale * (1 + 1e-12)


def test_seeds_differ():
    a = generate_shape(ShapeSpec("RingWithSpur", 1.0, 100, seed=0))
    b = generate_shape(ShapeSpec("RingWithSpur", 1.0, 100, seed=1))
    assert not np.array_equal(a.points, b.points)


@pytest.mark.parametrize("kind", ("RingWithSpur", "Cross3D"))
@pytest.mark.parametrize("n", (16, 100, 512, 1000))
def test_substructure_fraction_band(kind, n):
    _, flags = generate_shape_labeled(ShapeSpec(kind, 1.0, n, seed=3))
    frac = flags.mean()
    assert 0.10 <= frac <= 0.25
    assert flags.dtype == bool and flags.shape == (n,)


def test_no_substructure_for_plain_shapes():
    for kind in ("ThinPlate", "UniformSphere"):
        _, flags = generate_shape_labeled(ShapeSpec(kind, 1.0, 64, seed=0))
        assert not flags.any()


def test_single_point_sphere():
    cloud = generate_shape(ShapeSpec("UniformSphere", 2.0, 1, seed=5))
    assert len(cloud) == 1
    assert np.linalg.norm(cloud.points[0]) == pytest.approx(2.0, rel=1e-12)


def test_validation():
    with pytest.raises(InvalidParamsError):
        ShapeSpec("Torus", 1.0, 100, 0)
    with pytest.raises(InvalidParamsError):
        ShapeSpec("RingWithSpur", 0.0, 100, 0)
    with pytest.raises(InvalidParamsError):
        ShapeSpec("RingWithSpur", 1.0, 15, 0)  # substructure band needs room
    with pytest.raises(InvalidParamsError):
        ShapeSpec("UniformSphere", 1.0, 0, 0)


def test_cloud_label_is_kind():
    assert generate_shape(ShapeSpec("ThinPlate", 1.0, 20, 0)).label == "ThinPlate"


def test_flags_are_readonly():
    _, flags = generate_shape_labeled(ShapeSpec("Cross3D", 1.0, 64, 0))
    with pytest.raises(ValueError):
        flags[0] = True
