import numpy as np
import pytest

from pcqal.errors import DivergedLossError, InvalidParamsError
from pcqal.fit import fit_points
from pcqal.losses import QalParams
from pcqal.shapes import ShapeSpec, generate_shape


def test_perfect_init_stays_put():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(25, 3))
    for loss in ("qal", "cd-l1", "cd-l2"):
        r = fit_points(pts, pts, loss=loss, iters=20, metric_every=5)
        assert np.array_equal(r.final_pred.points, pts)
        assert np.all(r.loss_curve == 0.0)
        assert r.metric_curve[-1][1].coverage == 1.0


def test_gd_descends_on_smooth_offset():
    rng = np.random.default_rng(1)
    gt = rng.normal(size=(40, 3))
    init = gt + np.array([0.1, 0.0, 0.0])
    # cd-l1 pulls with unit-magnitude vectors, so the gap shrinks by a fixed
    # (1/N + 1/M) * step per iteration: 150 steps close 0.075 of the 0.1 offset.
    r = fit_points(init, gt, loss="cd-l1", optimizer="gd", step=1e-2, iters=150,
                   metric_every=150)
    assert (np.diff(r.loss_curve) < 0).all()
    assert r.loss_curve[-1] < 0.3 * r.loss_curve[0]


def test_deterministic():
    gt = generate_shape(ShapeSpec("Cross3D", 1.0, 128, 3))
    init = generate_shape(ShapeSpec("UniformSphere", 1.0, 64, 4))
    r1 = fit_points(init, gt, iters=60, metric_every=30)
    r2 = fit_points(init, gt, iters=60, metric_every=30)
    assert np.array_equal(r1.final_pred.points, r2.final_pred.points)
    assert np.array_equal(r1.loss_curve, r2.loss_curve)


def test_qal_improves_coverage_on_ring():
    gt = generate_shape(ShapeSpec("RingWithSpur", 1.0, 256, 0))
    init = generate_shape(ShapeSpec("UniformSphere", 1.0, 128, 1009))
    r = fit_points(init, gt, loss="qal", iters=300, metric_every=100)
    first = r.metric_curve[0][1].coverage
    last = r.metric_curve[-1][1].coverage
    assert last > first


@pytest.mark.filterwarnings("ignore:overflow")
def test_divergence_reported_with_iteration():
    rng = np.random.default_rng(2)
    gt = rng.normal(size=(20, 3))
    init = gt + 0.5
    with pytest.raises(DivergedLossError) as ei:
        fit_points(init, gt, loss="cd-l2", optimizer="momentum", step=1e12,
                   iters=50)
    assert ei.value.iteration >= 1


def test_curve_shapes_and_config():
    gt = generate_shape(ShapeSpec("ThinPlate", 1.0, 64, 0))
    init = generate_shape(ShapeSpec("UniformSphere", 1.0, 32, 5))
    r = fit_points(init, gt, loss="cd-l1", optimizer="momentum", step=5e-3,
                   iters=70, metric_every=25, tau_eval=0.05, seed=9)
    assert len(r.loss_curve) == 70
    assert np.isfinite(r.loss_curve).all()
    iters_logged = [it for it, _ in r.metric_curve]
    assert iters_logged == [0, 25, 50, 70]
    assert all(rep.tau == 0.05 for _, rep in r.metric_curve)
    assert r.config["optimizer"] == "momentum"
    assert r.config["seed"] == 9
    assert r.config["params"]["eps"] == QalParams().eps


def test_validation():
    pts = [[0.0, 0.0, 0.0]]
    with pytest.raises(InvalidParamsError):
        fit_points(pts, pts, loss="emd")
    with pytest.raises(InvalidParamsError):
        fit_points(pts, pts, optimizer="lbfgs")
    with pytest.raises(InvalidParamsError):
        fit_points(pts, pts, step=0.0)
    with pytest.raises(InvalidParamsError):
        fit_points(pts, pts, iters=0)
    with pytest.raises(InvalidParamsError):
        fit_points(pts, pts, metric_every=0)


def test_to_dict_serializes():
    pts = np.random.default_rng(3).normal(size=(10, 3))
    r = fit_points(pts, pts, iters=5, metric_every=2)
    d = r.to_dict()
    assert len(d["loss_curve"]) == 5
    assert d["metric_curve"][0]["iteration"] == 0
    assert d["final_pred_n"] == 10
