"""Staged hyperparameter ablation and Pareto-knee selection.

The ablation keeps two of (eps, omega, lambda_attr) fixed and sweeps the
third, fitting one prediction per (value, seed) cell and averaging the
resulting metrics. Stage winners for eps and omega maximize coverage with
documented tie-breaks; the lambda stage instead picks the knee of the
coverage / spuriousness-complement frontier, since raising lambda trades
one for the other.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import DivergedLossError, InvalidParamsError, PcqalError
from .fit import fit_points
from .losses import QalParams, chamfer
from .metrics import max_workers, quality_report
from .shapes import ShapeSpec, generate_shape

__all__ = [
    "ExperimentConfig",
    "SweepCell",
    "SweepEntry",
    "SweepReport",
    "run_ablation",
    "pareto_knee",
    "STAGES",
]

STAGES = ("eps", "omega", "lambda")

# init clouds draw from a stream disjoint from the gt stream for the same
# experiment seed
_INIT_SEED_OFFSET = 1009

_MEAN_FIELDS = ("coverage", "spurious", "sp_bar", "quality", "f1", "cd")


@dataclass(frozen=True)
class ExperimentConfig:
    """One fitting experiment: which gt shape, which init, which optimizer."""

    gt: ShapeSpec
    init: ShapeSpec
    optimizer: str = "adam"
    step: float = 1e-2
    iters: int = 2000
    tau_eval: float = 0.03

    def to_dict(self) -> dict:
        return {
            "gt": vars(self.gt).copy(),
            "init": vars(self.init).copy(),
            "optimizer": self.optimizer,
            "step": self.step,
            "iters": self.iters,
            "tau_eval": self.tau_eval,
        }


@dataclass(frozen=True)
class SweepCell:
    value: float
    seed: int
    coverage: float | None
    spurious: float | None
    sp_bar: float | None
    quality: float | None
    f1: float | None
    cd: float | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class SweepEntry:
    """All cells for one swept value, plus their means over the ok cells."""

    params: QalParams
    value: float
    cells: tuple[SweepCell, ...]
    mean: dict | None
    n_ok: int
    n_failed: int

    def to_dict(self) -> dict:
        return {
            "params": vars(self.params).copy(),
            "value": self.value,
            "mean": self.mean,
            "n_ok": self.n_ok,
            "n_failed": self.n_failed,
        }


@dataclass(frozen=True)
class SweepReport:
    stage: str
    grid: tuple[SweepEntry, ...]
    knee: QalParams
    selection_log: tuple[str, ...]
    experiment: ExperimentConfig
    seeds: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "experiment": self.experiment.to_dict(),
            "seeds": list(self.seeds),
            "grid": [e.to_dict() for e in self.grid],
            "knee": vars(self.knee).copy(),
            "selection_log": list(self.selection_log),
        }


def _stage_params(stage: str, base: QalParams, value: float) -> QalParams:
    if stage == "eps":
        return replace(base, eps=value)
    if stage == "omega":
        return replace(base, omega=value)
    return replace(base, lambda_attr=value)


def _run_cell(stage_params, value, seed, experiment) -> SweepCell:
    gt_cloud = generate_shape(replace(experiment.gt, seed=seed))
    init_cloud = generate_shape(replace(experiment.init, seed=seed + _INIT_SEED_OFFSET))
    try:
        result = fit_points(init_cloud, gt_cloud, loss="qal", params=stage_params,
                            optimizer=experiment.optimizer, step=experiment.step,
                            iters=experiment.iters, tau_eval=experiment.tau_eval,
                            seed=seed)
    except DivergedLossError as exc:
        return SweepCell(value, seed, None, None, None, None, None, None, str(exc))
    rep = quality_report(result.final_pred, gt_cloud, experiment.tau_eval)
    cd = chamfer(result.final_pred, gt_cloud, "l1")
    return SweepCell(value, seed, rep.coverage, rep.spurious, rep.sp_bar,
                     rep.quality, rep.f1, cd)


def _entry_for(stage, base, value, seeds, experiment, cells) -> SweepEntry:
    ok = [c for c in cells if c.ok]
    mean = None
    if ok:
        mean = {f: float(np.mean([getattr(c, f) for c in ok])) for f in _MEAN_FIELDS}
    return SweepEntry(_stage_params(stage, base, value), float(value),
                      tuple(cells), mean, len(ok), len(cells) - len(ok))


def run_ablation(stage: str, base: QalParams, values, experiment: ExperimentConfig,
                 seeds) -> SweepReport:
    """Sweep one QAL hyperparameter over an experiment grid.

    Every (value, seed) cell fits a fresh init to a fresh gt cloud and
    records coverage, spuriousness, quality, f1 and Chamfer-L1 of the
    final prediction. Diverged cells are kept in the report with their
    error message and excluded from the means.

    The returned knee is the stage winner: argmax mean coverage (ties by
    min spuriousness, then min Chamfer) for eps and omega stages; the
    Pareto-knee rule over (coverage, sp_bar) for the lambda stage.
    """
    if stage not in STAGES:
        raise InvalidParamsError(f"stage must be one of {STAGES}, got {stage!r}")
    values = [float(v) for v in values]
    seeds = [int(s) for s in seeds]
    if not values:
        raise InvalidParamsError("values must be non-empty")
    if not seeds:
        raise InvalidParamsError("seeds must be non-empty")

    cells_flat = [(v, s) for v in values for s in seeds]

    def one(pair):
        v, s = pair
        return _run_cell(_stage_params(stage, base, v), v, s, experiment)

    workers = min(max_workers(), len(cells_flat))
    if workers <= 1:
        results = [one(p) for p in cells_flat]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, cells_flat))

    grid = []
    for i, v in enumerate(values):
        chunk = results[i * len(seeds):(i + 1) * len(seeds)]
        grid.append(_entry_for(stage, base, v, seeds, experiment, chunk))
    grid = tuple(grid)

    log = [f"stage={stage} values={values} seeds={seeds}"]
    for e in grid:
        if e.mean is None:
            log.append(f"  value={e.value:g}: all {e.n_failed} cells diverged")
        else:
            log.append(
                f"  value={e.value:g}: cov={e.mean['coverage']:.4f} "
                f"sp={e.mean['spurious']:.4f} cd={e.mean['cd']:.6f} "
                f"(ok={e.n_ok}, failed={e.n_failed})")

    usable = [e for e in grid if e.mean is not None]
    if not usable:
        raise PcqalError("every sweep cell diverged; nothing to select")

    if stage == "lambda":
        knee = pareto_knee([(e.params, e.mean["coverage"], e.mean["sp_bar"])
                            for e in usable])
        log.append(f"lambda knee: Pareto rule selected lambda_attr={knee.lambda_attr:g}")
    else:
        best = max(usable, key=lambda e: (e.mean["coverage"], -e.mean["spurious"],
                                          -e.mean["cd"]))
        knee = best.params
        log.append(
            f"winner: value={best.value:g} by max coverage "
            f"(ties: min spurious, then min chamfer)")
    return SweepReport(stage, grid, knee, tuple(log), experiment, tuple(seeds))


def pareto_knee(grid, delta: float = 0.05):
    """Select params from (params, coverage, sp_bar) triples.

    Entries dominated in both coverage and sp_bar are dropped; among the
    remaining frontier the entry with maximum coverage is chosen subject
    to sp_bar >= max(sp_bar) - delta. Ties prefer higher sp_bar, then
    earlier grid position. A singleton grid returns its element.
    """
    grid = list(grid)
    if not grid:
        raise InvalidParamsError("pareto_knee needs a non-empty grid")
    if not (delta >= 0):
        raise InvalidParamsError(f"delta must be >= 0, got {delta}")

    def dominated(i):
        pi, ci, si = grid[i]
        for j, (pj, cj, sj) in enumerate(grid):
            if j != i and cj >= ci and sj >= si and (cj > ci or sj > si):
                return True
        return False

    frontier = [g for i, g in enumerate(grid) if not dominated(i)]
    sp_max = max(s for _, _, s in frontier)
    eligible = [g for g in frontier if g[2] >= sp_max - delta]
    best = max(eligible, key=lambda g: (g[1], g[2]))
    return best[0]
