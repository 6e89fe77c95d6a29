"""Thresholded evaluation metrics for point clouds.

Coverage at tau is the fraction of ground-truth points within tau of the
prediction (boundary counts as covered); spuriousness is the fraction of
prediction points strictly farther than tau from the ground truth. The
aggregate quality score averages coverage with the spuriousness complement.
All values are fractions in [0, 1]; multiply by 100 only when rendering.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cloud import _BLOCK_ENTRIES, _as_points, _block_dists, as_cloud, nn_one_way
from .errors import InvalidParamsError, SinglePointError

__all__ = [
    "QualityReport",
    "AggregateReport",
    "coverage_at",
    "spurious_at",
    "quality_report",
    "mean_nn_spacing",
    "evaluate_pairs",
    "aggregate",
    "DEFAULT_TAU",
]

DEFAULT_TAU = 0.03

_MEAN_FIELDS = ("coverage", "spurious", "sp_bar", "quality", "f1")


@dataclass(frozen=True)
class QualityReport:
    """Metrics for one prediction / ground-truth pair at one threshold.

    Identities kept exact (single float ops, no re-derivation):
    ``sp_bar == 1 - spurious``, ``quality == (coverage + sp_bar) / 2``.
    ``f1`` is the harmonic mean of coverage (recall) and sp_bar
    (precision-like), 0 when both are 0; this formula is a convention of
    this package, not a universal definition.
    """

    tau: float
    coverage: float
    spurious: float
    sp_bar: float
    quality: float
    f1: float
    n_pred: int
    n_gt: int
    label: str | None = None

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "coverage": self.coverage,
            "spurious": self.spurious,
            "sp_bar": self.sp_bar,
            "quality": self.quality,
            "f1": self.f1,
            "n_pred": self.n_pred,
            "n_gt": self.n_gt,
            "label": self.label,
        }


@dataclass(frozen=True)
class AggregateReport:
    """Batch of QualityReports with per-label and overall means.

    ``overall`` holds the unweighted arithmetic mean of each metric over
    all pairs; ``per_category`` the same grouped by label (unlabeled pairs
    contribute only to ``overall``).
    """

    per_pair: tuple[QualityReport, ...]
    per_category: dict[str, dict[str, float]]
    overall: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "per_pair": [r.to_dict() for r in self.per_pair],
            "per_category": self.per_category,
            "overall": self.overall,
        }


def _check_tau(tau) -> float:
    tau = float(tau)
    if not tau > 0:
        raise InvalidParamsError(f"tau must be > 0, got {tau}")
    return tau


def coverage_at(pred, gt, tau, backend: str = "brute") -> float:
    """Fraction of gt points whose distance to pred is <= tau."""
    tau = _check_tau(tau)
    d = nn_one_way(_as_points(gt), _as_points(pred), backend).distances
    return float(np.mean(d <= tau))


def spurious_at(pred, gt, tau, backend: str = "brute") -> float:
    """Fraction of pred points whose distance to gt is strictly > tau."""
    tau = _check_tau(tau)
    d = nn_one_way(_as_points(pred), _as_points(gt), backend).distances
    return float(np.mean(d > tau))


def quality_report(pred, gt, tau: float = DEFAULT_TAU,
                   label: str | None = None,
                   backend: str = "brute") -> QualityReport:
    """All metrics for one pair from one NN pass per direction."""
    tau = _check_tau(tau)
    pred_c = as_cloud(pred)
    gt_c = as_cloud(gt)
    pred_pts = pred_c.points
    gt_pts = gt_c.points
    d_gt = nn_one_way(gt_pts, pred_pts, backend).distances
    d_pred = nn_one_way(pred_pts, gt_pts, backend).distances
    coverage = float(np.mean(d_gt <= tau))
    spurious = float(np.mean(d_pred > tau))
    sp_bar = 1.0 - spurious
    quality = (coverage + sp_bar) / 2.0
    denom = coverage + sp_bar
    f1 = 0.0 if denom == 0.0 else 2.0 * coverage * sp_bar / denom
    if label is None:
        label = pred_c.label if pred_c.label is not None else gt_c.label
    return QualityReport(tau, coverage, spurious, sp_bar, quality, f1,
                         len(pred_pts), len(gt_pts), label)


def mean_nn_spacing(cloud) -> float:
    """Mean distance from each point to the nearest other point.

    Needs at least two points; exact duplicates yield zero contributions
    rather than being skipped.
    """
    pts = _as_points(cloud)
    n = pts.shape[0]
    if n < 2:
        raise SinglePointError("nearest-neighbor spacing needs at least 2 points")
    block = max(1, _BLOCK_ENTRIES // n)
    mins = np.empty(n)
    for start in range(0, n, block):
        stop = min(n, start + block)
        d = _block_dists(pts[start:stop], pts)
        d[np.arange(stop - start), np.arange(start, stop)] = np.inf
        mins[start:stop] = d.min(axis=1)
    return float(mins.mean())


def max_workers() -> int:
    """Worker cap from PCQAL_THREADS; 0, unset, or garbage means auto."""
    raw = os.environ.get("PCQAL_THREADS", "0")
    try:
        v = int(raw)
    except ValueError:
        v = 0
    if v <= 0:
        return min(32, os.cpu_count() or 1)
    return v


def evaluate_pairs(items, tau: float = DEFAULT_TAU,
                   backend: str = "brute") -> AggregateReport:
    """Quality reports for many (pred, gt, label) triples, then aggregate.

    Pairs are evaluated in parallel (bounded by PCQAL_THREADS) but
    collected in input order, so results are deterministic.
    """
    tau = _check_tau(tau)
    items = list(items)

    def one(item):
        pred, gt, label = item
        return quality_report(pred, gt, tau, label, backend)

    workers = min(max_workers(), max(1, len(items)))
    if workers == 1 or len(items) <= 1:
        reports = [one(it) for it in items]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(one, items))
    return aggregate(reports)


def _mean_block(reports) -> dict[str, float]:
    out = {f: float(np.mean([getattr(r, f) for r in reports])) for f in _MEAN_FIELDS}
    out["n_pairs"] = len(reports)
    return out


def aggregate(reports) -> AggregateReport:
    """Collect per-pair reports into category and overall means."""
    reports = tuple(reports)
    if not reports:
        raise InvalidParamsError("cannot aggregate zero reports")
    by_label: dict[str, list[QualityReport]] = {}
    for r in reports:
        if r.label is not None:
            by_label.setdefault(r.label, []).append(r)
    per_category = {lab: _mean_block(rs) for lab, rs in sorted(by_label.items())}
    return AggregateReport(reports, per_category, _mean_block(reports))
