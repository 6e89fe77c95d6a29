import numpy as np
import pytest

from pcqal.cloud import PointCloud, as_cloud, build_spatial_index, nn_one_way
from pcqal.errors import EmptyCloudError, NonFiniteCoordinateError


def test_construction_coerces_to_float64():
    c = PointCloud([[0, 0, 0], [1, 2, 3]])
    assert c.points.dtype == np.float64
    assert c.points.shape == (2, 3)
    assert len(c) == 2


def test_points_are_immutable():
    c = PointCloud([[0.0, 0.0, 0.0]])
    with pytest.raises(ValueError):
        c.points[0, 0] = 5.0


def test_empty_cloud_construction_ok_but_rejected_at_use():
    # The container itself may be empty (e.g. as a parse intermediate);
    # anything that consumes it as a query or target must refuse.
    c = PointCloud(np.zeros((0, 3)))
    assert len(c) == 0
    other = PointCloud([[0.0, 0.0, 0.0]])
    with pytest.raises(EmptyCloudError):
        nn_one_way(c, other)
    with pytest.raises(EmptyCloudError):
        nn_one_way(other, c)


def test_nonfinite_rejected():
    with pytest.raises(NonFiniteCoordinateError):
        PointCloud([[0.0, np.nan, 0.0]])
    with pytest.raises(NonFiniteCoordinateError):
        PointCloud([[np.inf, 0.0, 0.0]])


def test_bad_shape_rejected():
    with pytest.raises(ValueError):
        PointCloud([[1.0, 2.0]])
    with pytest.raises(ValueError):
        PointCloud([1.0, 2.0, 3.0])


def test_translate_scale():
    c = PointCloud([[1.0, 0.0, 0.0]])
    assert np.allclose(c.translated([0, 0, 2]).points, [[1, 0, 2]])
    assert np.allclose(c.scaled(3.0).points, [[3, 0, 0]])


def test_as_cloud_passthrough():
    c = PointCloud([[0.0, 0.0, 0.0]], label="x")
    assert as_cloud(c) is c
    assert as_cloud([[1.0, 1.0, 1.0]], label="y").label == "y"


def test_nn_matches_manual_loop():
    rng = np.random.default_rng(4)
    for _ in range(20):
        q = rng.normal(size=(rng.integers(1, 40), 3))
        t = rng.normal(size=(rng.integers(1, 40), 3))
        got = nn_one_way(q, t)
        for i, p in enumerate(q):
            d = np.sqrt(((p - t) ** 2).sum(axis=1))
            j = int(np.argmin(d))
            assert got.indices[i] == j
            assert got.distances[i] == d.min()


def test_backends_bit_identical():
    rng = np.random.default_rng(11)
    for _ in range(25):
        n = int(rng.integers(1, 600))
        m = int(rng.integers(1, 600))
        q = rng.normal(size=(n, 3))
        t = rng.normal(size=(m, 3))
        a = nn_one_way(q, t, "brute")
        b = nn_one_way(q, t, "kdtree")
        assert np.array_equal(a.distances, b.distances)
        assert np.array_equal(a.indices, b.indices)


def test_ties_pick_lowest_index():
    # duplicate targets
    t = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    q = np.array([[0.0, 0.0, 0.0]])
    for backend in ("brute", "kdtree"):
        assert nn_one_way(q, t, backend).indices[0] == 0
    # distinct equidistant targets
    t = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    for backend in ("brute", "kdtree"):
        assert nn_one_way(q, t, backend).indices[0] == 0


def test_backends_identical_with_duplicates():
    rng = np.random.default_rng(7)
    base = rng.integers(0, 4, size=(200, 3)).astype(float)  # heavy duplication
    q = rng.integers(0, 4, size=(50, 3)).astype(float)
    a = nn_one_way(q, base, "brute")
    b = nn_one_way(q, base, "kdtree")
    assert np.array_equal(a.indices, b.indices)
    assert np.array_equal(a.distances, b.distances)


def test_spatial_index_reusable():
    rng = np.random.default_rng(2)
    t = rng.normal(size=(300, 3))
    idx = build_spatial_index(t)
    q1 = rng.normal(size=(20, 3))
    q2 = rng.normal(size=(35, 3))
    r1 = idx.query(q1)
    r2 = idx.query(q2)
    assert np.array_equal(r1.indices, nn_one_way(q1, t).indices)
    assert np.array_equal(r2.indices, nn_one_way(q2, t).indices)


def test_nn_empty_inputs_rejected():
    with pytest.raises(EmptyCloudError):
        nn_one_way(np.zeros((0, 3)), [[0.0, 0.0, 0.0]])
    with pytest.raises(EmptyCloudError):
        nn_one_way([[0.0, 0.0, 0.0]], np.zeros((0, 3)))
