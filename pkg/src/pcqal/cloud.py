"""Point-cloud container and exact nearest-neighbor search.

Two interchangeable backends are provided: a blocked brute-force scan and a
static kd-tree. Both compute Euclidean distances through the same elementwise
kernel, so for identical inputs they return bit-identical distance arrays and
identical indices (ties always resolve to the lowest target index).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyCloudError, NonFiniteCoordinateError

__all__ = [
    "PointCloud",
    "NNAssignment",
    "SpatialIndex",
    "as_cloud",
    "build_spatial_index",
    "nn_one_way",
]

_LEAF_SIZE = 16

# Largest number of (query x target) distance entries materialized at once
# by the brute-force scan; keeps peak memory near 16 MB of doubles.
_BLOCK_ENTRIES = 2_000_000


def _as_points(obj, *, allow_empty: bool = False) -> np.ndarray:
    """Coerce a PointCloud or array-like to a validated (N, 3) float64 array."""
    pts = obj.points if isinstance(obj, PointCloud) else obj
    arr = np.asarray(pts, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (N, 3) point array, got shape {arr.shape}")
    if arr.shape[0] == 0 and not allow_empty:
        raise EmptyCloudError("point cloud has zero points")
    if not np.isfinite(arr).all():
        raise NonFiniteCoordinateError("point cloud contains NaN or infinite coordinates")
    return np.ascontiguousarray(arr)


class PointCloud:
    """Ordered set of 3D points with an optional free-form label.

    Points are stored as an immutable (N, 3) float64 array; input order is
    preserved and every per-point result elsewhere in the package indexes
    into that order.
    """

    __slots__ = ("_points", "label")

    def __init__(self, points, label: str | None = None):
        arr = _as_points(points, allow_empty=True).copy()
        arr.setflags(write=False)
        self._points = arr
        self.label = label

    @property
    def points(self) -> np.ndarray:
        return self._points

    def __len__(self) -> int:
        return self._points.shape[0]

    def __repr__(self) -> str:
        tag = f", label={self.label!r}" if self.label is not None else ""
        return f"PointCloud({len(self)} points{tag})"

    def translated(self, offset) -> "PointCloud":
        return PointCloud(self._points + np.asarray(offset, dtype=np.float64), self.label)

    def scaled(self, factor: float) -> "PointCloud":
        return PointCloud(self._points * float(factor), self.label)


def as_cloud(obj, label: str | None = None) -> PointCloud:
    """Return ``obj`` if it already is a PointCloud, else wrap an array-like."""
    if isinstance(obj, PointCloud):
        return obj
    return PointCloud(obj, label)


@dataclass(frozen=True)
class NNAssignment:
    """Per-query nearest-neighbor result for one matching direction.

    ``distances[i]`` is the Euclidean distance from query point ``i`` to
    target point ``indices[i]``, the true minimum over the target cloud.
    """

    distances: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "distances", np.asarray(self.distances, dtype=np.float64))
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))


def _block_dists(query_block: np.ndarray, target_block: np.ndarray) -> np.ndarray:
    """Euclidean distances between two point blocks, shape (nq, nt).

    Every backend routes leaf-level distance evaluation through this one
    kernel; the fixed elementwise operation order is what makes brute-force
    and kd-tree outputs bit-identical.
    """
    diff = query_block[:, None, :] - target_block[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def _nn_brute(query: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = query.shape[0]
    distances = np.empty(n, dtype=np.float64)
    indices = np.empty(n, dtype=np.int64)
    block = max(1, _BLOCK_ENTRIES // target.shape[0])
    for start in range(0, n, block):
        rows = query[start : start + block]
        dmat = _block_dists(rows, target)
        # argmin returns the first occurrence, i.e. the lowest target index
        j = dmat.argmin(axis=1)
        indices[start : start + len(j)] = j
        distances[start : start + len(j)] = dmat[np.arange(len(j)), j]
    return distances, indices


class SpatialIndex:
    """Static kd-tree over an immutable cloud (median split, leaf size 16).

    Safe to share across threads after construction. Queries return exactly
    the brute-force result, including the lowest-index tie rule.
    """

    __slots__ = ("_points", "_leaf_idx", "_axis", "_split", "_left", "_right", "_root")

    def __init__(self, cloud):
        pts = _as_points(cloud)
        self._points = pts
        self._leaf_idx = np.empty(pts.shape[0], dtype=np.int64)
        self._axis: list[int] = []
        self._split: list[float] = []
        self._left: list[int] = []
        self._right: list[int] = []
        self._root = self._build(np.arange(pts.shape[0], dtype=np.int64), 0)

    def __len__(self) -> int:
        return self._points.shape[0]

    def _new_node(self, axis, split, left, right) -> int:
        self._axis.append(axis)
        self._split.append(split)
        self._left.append(left)
        self._right.append(right)
        return len(self._axis) - 1

    def _build(self, idx: np.ndarray, cursor: int) -> int:
        if idx.size <= _LEAF_SIZE:
            # ascending original order, so a leaf argmin tie lands on the
            # lowest original index
            idx = np.sort(idx)
            self._leaf_idx[cursor : cursor + idx.size] = idx
            return self._new_node(-1, 0.0, cursor, cursor + idx.size)
        coords = self._points[idx]
        spread = coords.max(axis=0) - coords.min(axis=0)
        axis = int(spread.argmax())
        mid = idx.size // 2
        order = idx[np.argpartition(coords[:, axis], mid)]
        # pivot sits in the right child: left coords <= split <= right coords
        split = float(self._points[order[mid], axis])
        left = self._build(order[:mid], cursor)
        right = self._build(order[mid:], cursor + mid)
        return self._new_node(axis, split, left, right)

    def query(self, points) -> NNAssignment:
        """Nearest neighbor in the indexed cloud for each query point."""
        q = _as_points(points)
        n = q.shape[0]
        best_d = np.full(n, np.inf)
        best_i = np.full(n, -1, dtype=np.int64)
        self._visit(self._root, np.arange(n, dtype=np.int64), q, best_d, best_i)
        return NNAssignment(best_d, best_i)

    def _visit(self, node, qsel, q, best_d, best_i):
        if qsel.size == 0:
            return
        axis = self._axis[node]
        if axis < 0:
            idx = self._leaf_idx[self._left[node] : self._right[node]]
            dmat = _block_dists(q[qsel], self._points[idx])
            j = dmat.argmin(axis=1)
            dmin = dmat[np.arange(len(j)), j]
            cand = idx[j]
            cur_d = best_d[qsel]
            better = (dmin < cur_d) | ((dmin == cur_d) & (cand < best_i[qsel]))
            hit = qsel[better]
            best_d[hit] = dmin[better]
            best_i[hit] = cand[better]
            return
        delta = q[qsel, axis] - self._split[node]
        go_left = delta < 0.0
        q_left = qsel[go_left]
        q_right = qsel[~go_left]
        self._visit(self._left[node], q_left, q, best_d, best_i)
        self._visit(self._right[node], q_right, q, best_d, best_i)
        # far side is still reachable when the splitting plane is not farther
        # than the current best; <= keeps exact ties visible to the tie rule
        if q_left.size:
            cross = -delta[go_left] <= best_d[q_left]
            self._visit(self._right[node], q_left[cross], q, best_d, best_i)
        if q_right.size:
            cross = delta[~go_left] <= best_d[q_right]
            self._visit(self._left[node], q_right[cross], q, best_d, best_i)


def build_spatial_index(cloud) -> SpatialIndex:
    """Build a kd-tree over ``cloud``; raises EmptyCloudError on zero points."""
    return SpatialIndex(cloud)


def nn_one_way(query, target, backend: str = "brute") -> NNAssignment:
    """True 1-NN assignment from each query point into the target cloud.

    Args:
        query: PointCloud or (N, 3) array of query points.
        target: PointCloud or (M, 3) array searched for neighbors.
        backend: "brute" or "kdtree"; both return identical results.

    Returns:
        NNAssignment with one distance and one target index per query point.
    """
    q = _as_points(query)
    t = _as_points(target)
    if backend == "brute":
        distances, indices = _nn_brute(q, t)
        return NNAssignment(distances, indices)
    if backend == "kdtree":
        return SpatialIndex(t).query(q)
    raise ValueError(f"unknown backend {backend!r}; expected 'brute' or 'kdtree'")
