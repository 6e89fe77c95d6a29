"""Quality-aware point-set loss with analytic gradients, plus Chamfer and
earth-mover baselines.

The quality-aware loss couples two pieces computed from a single pair of
nearest-neighbor passes:

* a coverage-weighted bidirectional term that scales each nearest-neighbor
  distance ``d`` by ``1.5 - sigmoid(omega * (eps - d))``, de-emphasizing
  matches already inside the ``eps`` tolerance and emphasizing residuals
  beyond it, and
* an attraction term over ground-truth points that received no
  nearest-neighbor assignment from any prediction, gated by
  ``sigmoid(omega * (eps - d))`` so nearby holes pull hardest.

Gradients treat nearest-neighbor indices and the uncovered mask as
piecewise-constant and differentiate every smooth factor, the same
convention autodiff applies to plain Chamfer losses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cloud import _BLOCK_ENTRIES, _as_points, _block_dists, _nn_brute, nn_one_way
from .errors import (
    AssignmentUnstableError,
    InvalidParamsError,
    SizeMismatchError,
    TooLargeError,
)

__all__ = [
    "QalParams",
    "LossValue",
    "UncoveredMask",
    "coverage_weight",
    "qal",
    "qal_cov_term",
    "qal_attr_term",
    "uncovered_mask",
    "chamfer",
    "emd",
    "loss_and_grad",
    "loss_grad_check",
    "EMD_EXACT_MAX_POINTS",
    "GRAD_LOSSES",
]

# sigmoid saturates to within 1e-17 of {0, 1} beyond +-40; clamping there
# avoids overflow in exp without observable error
_SIGMOID_CLAMP = 40.0

EMD_EXACT_MAX_POINTS = 512


def _sigmoid(z):
    z = np.clip(z, -_SIGMOID_CLAMP, _SIGMOID_CLAMP)
    return 1.0 / (1.0 + np.exp(-z))


@dataclass(frozen=True)
class QalParams:
    """Hyperparameters of the quality-aware loss.

    ``eps`` is the distance tolerance (same units as the coordinates),
    ``omega`` the sharpness of the sigmoid weighting (1/length), and
    ``lambda_attr`` the nonnegative weight of the attraction term.
    """

    eps: float = 0.001
    omega: float = 10.0
    lambda_attr: float = 1.0

    def __post_init__(self):
        if not (self.eps > 0):
            raise InvalidParamsError(f"eps must be > 0, got {self.eps}")
        if not (self.omega > 0):
            raise InvalidParamsError(f"omega must be > 0, got {self.omega}")
        if not (self.lambda_attr >= 0):
            raise InvalidParamsError(f"lambda_attr must be >= 0, got {self.lambda_attr}")


@dataclass(frozen=True)
class LossValue:
    """Scalar loss with its component breakdown.

    ``total == cov_term + lambda_attr * attr_term`` holds exactly (one
    floating-point addition). ``grad``, when requested, is the (N, 3) array
    of partial derivatives of ``total`` with respect to the prediction
    coordinates under the fixed-assignment convention.
    """

    total: float
    cov_term: float
    attr_term: float
    grad: np.ndarray | None = None


@dataclass(frozen=True)
class UncoveredMask:
    """Per-ground-truth-point flags; True marks a point no prediction chose
    as its nearest ground-truth neighbor."""

    flags: np.ndarray


def coverage_weight(d, eps: float, omega: float):
    """Sigmoid-based reweighting of a nearest-neighbor distance.

    Returns ``1.5 - sigmoid(omega * (eps - d))``, which lies strictly in
    (0.5, 1.5), equals 1 exactly at ``d == eps``, and is nondecreasing in
    ``d``. Accepts scalars or arrays.
    """
    _check_eps_omega(eps, omega)
    return 1.5 - _sigmoid(omega * (eps - np.asarray(d, dtype=np.float64)))


def _check_eps_omega(eps, omega):
    if not (eps > 0):
        raise InvalidParamsError(f"eps must be > 0, got {eps}")
    if not (omega > 0):
        raise InvalidParamsError(f"omega must be > 0, got {omega}")


def _nn_pair(pred_pts, gt_pts):
    """One nearest-neighbor pass per direction; shared by every loss.

    When the full distance matrix fits in one block, both directions come
    from a single kernel evaluation; D(a, b) transposes to D(b, a) exactly
    because the elementwise kernel squares each coordinate difference, so
    results are bit-identical to two independent passes.
    """
    n, m = pred_pts.shape[0], gt_pts.shape[0]
    if n * m <= _BLOCK_ENTRIES:
        dmat = _block_dists(pred_pts, gt_pts)
        return (dmat.min(axis=1), dmat.argmin(axis=1),
                dmat.min(axis=0), dmat.argmin(axis=0))
    d_a, i_a = _nn_brute(pred_pts, gt_pts)
    d_b, i_b = _nn_brute(gt_pts, pred_pts)
    return d_a, i_a, d_b, i_b


def _uncovered_flags(i_a: np.ndarray, n_gt: int) -> np.ndarray:
    flags = np.ones(n_gt, dtype=bool)
    flags[i_a] = False
    return flags


def _safe_unit(vec: np.ndarray, dist: np.ndarray) -> np.ndarray:
    """Rows of vec normalized by dist; zero rows where dist == 0 (the
    gradient of the Euclidean norm is defined as 0 at the origin here)."""
    unit = np.zeros_like(vec)
    nz = dist > 0
    unit[nz] = vec[nz] / dist[nz, None]
    return unit


def _qal_parts(pred_pts, gt_pts, params, want_grad, symmetric_attraction):
    """Compute (cov, attr, grad, signature) from one shared NN pair.

    The signature (both index arrays plus the mask) identifies the active
    piecewise-linear region; the gradient check uses it to detect
    assignment flips.
    """
    n, m = pred_pts.shape[0], gt_pts.shape[0]
    d_a, i_a, d_b, i_b = _nn_pair(pred_pts, gt_pts)
    mask = _uncovered_flags(i_a, m)

    z_a = params.omega * (params.eps - d_a)
    z_b = params.omega * (params.eps - d_b)
    s_a = _sigmoid(z_a)
    s_b = _sigmoid(z_b)
    w_a = 1.5 - s_a
    w_b = 1.5 - s_b

    cov = float(np.mean(w_a * d_a) + np.mean(w_b * d_b))
    attr_vals = mask * s_b * d_b
    attr = float(np.mean(attr_vals))
    if symmetric_attraction:
        mask_a = np.ones(n, dtype=bool)
        mask_a[i_b] = False
        attr += float(np.mean(mask_a * s_a * d_a))

    grad = None
    if want_grad:
        grad = np.zeros_like(pred_pts)
        # d/dd [w(d) d] = w(d) + d * omega * sigmoid'(omega (eps - d))
        g_cov_a = w_a + d_a * params.omega * s_a * (1.0 - s_a)
        g_cov_b = w_b + d_b * params.omega * s_b * (1.0 - s_b)
        unit_a = _safe_unit(pred_pts - gt_pts[i_a], d_a)
        vec_b = pred_pts[i_b] - gt_pts
        unit_b = _safe_unit(vec_b, d_b)
        grad += (g_cov_a / n)[:, None] * unit_a
        np.add.at(grad, i_b, (g_cov_b / m)[:, None] * unit_b)
        # d/dd [sigmoid(omega (eps - d)) d] = s - d * omega * s * (1 - s)
        g_attr_b = s_b - d_b * params.omega * s_b * (1.0 - s_b)
        coeff = params.lambda_attr / m
        np.add.at(grad, i_b[mask], coeff * g_attr_b[mask, None] * unit_b[mask])
        if symmetric_attraction:
            g_attr_a = s_a - d_a * params.omega * s_a * (1.0 - s_a)
            sel = mask_a
            grad[sel] += (params.lambda_attr / n) * g_attr_a[sel, None] * unit_a[sel]

    signature = (i_a, i_b, mask)
    return cov, attr, grad, signature


def qal(pred, gt, params: QalParams | None = None, want_grad: bool = False,
        symmetric_attraction: bool = False) -> LossValue:
    """Quality-aware loss between a prediction and a ground-truth cloud.

    Both nearest-neighbor directions are computed once and shared by the
    coverage and attraction terms.

    Args:
        pred: prediction cloud (PointCloud or (N, 3) array).
        gt: ground-truth cloud.
        params: loss hyperparameters; defaults to QalParams().
        want_grad: also return d total / d pred as an (N, 3) array.
        symmetric_attraction: experimental variant that additionally
            attracts unmatched prediction points toward the ground truth;
            off by default.

    Returns:
        LossValue with total, the two components, and optionally the gradient.
    """
    params = params or QalParams()
    pred_pts = _as_points(pred)
    gt_pts = _as_points(gt)
    cov, attr, grad, _ = _qal_parts(pred_pts, gt_pts, params, want_grad,
                                    symmetric_attraction)
    return LossValue(cov + params.lambda_attr * attr, cov, attr, grad)


def qal_cov_term(pred, gt, params: QalParams | None = None) -> float:
    """Coverage-weighted bidirectional term of the quality-aware loss."""
    params = params or QalParams()
    cov, _, _, _ = _qal_parts(_as_points(pred), _as_points(gt), params, False, False)
    return cov


def qal_attr_term(pred, gt, params: QalParams | None = None) -> float:
    """Attraction term over uncovered ground-truth points."""
    params = params or QalParams()
    _, attr, _, _ = _qal_parts(_as_points(pred), _as_points(gt), params, False, False)
    return attr


def uncovered_mask(pred, gt) -> UncoveredMask:
    """Flags of ground-truth points that no prediction's NN assignment hits."""
    pred_pts = _as_points(pred)
    gt_pts = _as_points(gt)
    assignment = nn_one_way(pred_pts, gt_pts)
    return UncoveredMask(_uncovered_flags(assignment.indices, gt_pts.shape[0]))


def chamfer(pred, gt, variant: str = "l1") -> float:
    """Chamfer distance, mean of both directions.

    The "l1" variant averages Euclidean nearest-neighbor distances, the
    "l2" variant their squares. Values are unscaled; any x1e3 presentation
    is a reporting concern.
    """
    value, _ = _chamfer_impl(_as_points(pred), _as_points(gt), variant, False)
    return value


def _chamfer_impl(pred_pts, gt_pts, variant, want_grad):
    if variant not in ("l1", "l2"):
        raise InvalidParamsError(f"unknown chamfer variant {variant!r}")
    n, m = pred_pts.shape[0], gt_pts.shape[0]
    d_a, i_a, d_b, i_b = _nn_pair(pred_pts, gt_pts)
    if variant == "l1":
        value = float(np.mean(d_a) + np.mean(d_b))
    else:
        value = float(np.mean(d_a * d_a) + np.mean(d_b * d_b))
    grad = None
    if want_grad:
        grad = np.zeros_like(pred_pts)
        vec_a = pred_pts - gt_pts[i_a]
        vec_b = pred_pts[i_b] - gt_pts
        if variant == "l1":
            grad += _safe_unit(vec_a, d_a) / n
            np.add.at(grad, i_b, _safe_unit(vec_b, d_b) / m)
        else:
            grad += 2.0 * vec_a / n
            np.add.at(grad, i_b, 2.0 * vec_b / m)
    return value, (grad, (i_a, i_b))


def _union_diameter(pred_pts, gt_pts) -> float:
    both = np.vstack([pred_pts, gt_pts])
    return float(np.linalg.norm(both.max(axis=0) - both.min(axis=0)))


def emd(pred, gt, mode: str = "exact", reg: float | None = None,
        iters: int = 200) -> float:
    """Earth mover's distance between two clouds.

    "exact" mode solves the optimal assignment between equal-size clouds
    and returns the mean matched Euclidean distance; it is limited to
    EMD_EXACT_MAX_POINTS points per cloud. "entropic" mode runs log-domain
    Sinkhorn iterations with uniform marginals and returns the transport
    cost of the regularized plan, which is biased upward by the entropy
    smoothing; ``reg`` defaults to 0.01 x the bounding-box diameter of the
    two clouds together.
    """
    pred_pts = _as_points(pred)
    gt_pts = _as_points(gt)
    if mode == "exact":
        n, m = pred_pts.shape[0], gt_pts.shape[0]
        if n != m:
            raise SizeMismatchError(f"exact transport needs |pred| == |gt|, got {n} vs {m}")
        if n > EMD_EXACT_MAX_POINTS:
            raise TooLargeError(
                f"exact transport supports up to {EMD_EXACT_MAX_POINTS} points, got {n}")
        from scipy.optimize import linear_sum_assignment

        cost = _block_dists(pred_pts, gt_pts)
        rows, cols = linear_sum_assignment(cost)
        return float(cost[rows, cols].mean())
    if mode == "entropic":
        if reg is None:
            reg = 0.01 * _union_diameter(pred_pts, gt_pts)
        if not (reg > 0):
            raise InvalidParamsError(f"entropic reg must be > 0, got {reg}")
        if iters < 1:
            raise InvalidParamsError(f"iters must be >= 1, got {iters}")
        return _sinkhorn(pred_pts, gt_pts, float(reg), int(iters))
    raise InvalidParamsError(f"unknown emd mode {mode!r}; expected 'exact' or 'entropic'")


def _sinkhorn(pred_pts, gt_pts, reg, iters):
    from scipy.special import logsumexp

    cost = _block_dists(pred_pts, gt_pts)
    n, m = cost.shape
    log_a = -math.log(n)
    log_b = -math.log(m)
    neg_c = -cost / reg
    f = np.zeros(n)
    g = np.zeros(m)
    for _ in range(iters):
        f = log_a - logsumexp(neg_c + g[None, :], axis=1)
        g = log_b - logsumexp(neg_c + f[:, None], axis=0)
    plan = np.exp(neg_c + f[:, None] + g[None, :])
    return float((plan * cost).sum())


GRAD_LOSSES = ("qal", "cd-l1", "cd-l2")


def _value_grad_signature(kind, pred_pts, gt_pts, params, want_grad):
    if kind == "qal":
        cov, attr, grad, sig = _qal_parts(pred_pts, gt_pts, params, want_grad, False)
        return cov + params.lambda_attr * attr, grad, sig
    variant = kind.removeprefix("cd-")
    value, (grad, sig) = _chamfer_impl(pred_pts, gt_pts, variant, want_grad)
    return value, grad, sig


def loss_and_grad(pred, gt, loss: str = "qal",
                  params: QalParams | None = None) -> tuple[float, np.ndarray]:
    """Loss value and d value / d pred for an optimization step.

    ``loss`` is one of GRAD_LOSSES; ``params`` only applies to "qal".
    """
    if loss not in GRAD_LOSSES:
        raise InvalidParamsError(f"loss must be one of {GRAD_LOSSES}, got {loss!r}")
    params = params or QalParams()
    value, grad, _ = _value_grad_signature(loss, _as_points(pred), _as_points(gt),
                                           params, True)
    return value, grad


def _same_signature(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def loss_grad_check(pred, gt, params: QalParams | None = None,
                    loss: str = "qal", h: float = 1e-5) -> float:
    """Compare the analytic gradient against central finite differences.

    Every +-h evaluation recomputes the nearest-neighbor assignment and the
    uncovered mask; if either differs from the unperturbed configuration the
    check raises AssignmentUnstableError instead of reporting a meaningless
    number.

    Returns:
        max over coordinates of |analytic - numeric| / (|numeric| + 1e-12).
    """
    if loss not in GRAD_LOSSES:
        raise InvalidParamsError(f"loss must be one of {GRAD_LOSSES}, got {loss!r}")
    params = params or QalParams()
    pred_pts = _as_points(pred).copy()
    gt_pts = _as_points(gt)
    _, grad, base_sig = _value_grad_signature(loss, pred_pts, gt_pts, params, True)

    worst = 0.0
    work = pred_pts.copy()
    for i in range(pred_pts.shape[0]):
        for c in range(3):
            saved = work[i, c]
            work[i, c] = saved + h
            f_plus, _, sig_p = _value_grad_signature(loss, work, gt_pts, params, False)
            work[i, c] = saved - h
            f_minus, _, sig_m = _value_grad_signature(loss, work, gt_pts, params, False)
            work[i, c] = saved
            if not (_same_signature(base_sig, sig_p) and _same_signature(base_sig, sig_m)):
                raise AssignmentUnstableError(
                    f"NN assignment or mask flips under +-{h} perturbation of "
                    f"pred[{i}][{'xyz'[c]}]", point_index=i, coord=c)
            numeric = (f_plus - f_minus) / (2.0 * h)
            rel = abs(grad[i, c] - numeric) / (abs(numeric) + 1e-12)
            worst = max(worst, rel)
    return worst
