"""Command-line interface.

One verb per activity: ``eval`` scores a prediction against a ground
truth, ``loss`` prints a loss breakdown, ``fit`` optimizes points under a
loss, ``sweep`` runs a staged hyperparameter ablation, ``gen`` writes a
synthetic shape. Exit codes: 0 success, 2 usage error, 3 input/parse
error, 4 numerical failure. Errors print one line to stderr in the form
``pcqal: <ErrorType>: message``.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .errors import (
    AssignmentUnstableError,
    CloudParseError,
    DivergedLossError,
    EmptyCloudError,
    NonFiniteCoordinateError,
    PcqalError,
)
from .fileio import read_cloud, report_csv, report_json, write_cloud
from .losses import GRAD_LOSSES, QalParams, chamfer, emd, qal
from .metrics import (
    DEFAULT_TAU,
    aggregate,
    evaluate_pairs,
    mean_nn_spacing,
    quality_report,
)
from .shapes import SHAPE_KINDS, ShapeSpec, generate_shape

_INIT_SEED_OFFSET = 1009  # same init/gt stream split as the sweep module


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _resolve_tau(raw: str, gt_cloud) -> float:
    if raw == "auto":
        return 2.0 * mean_nn_spacing(gt_cloud)
    try:
        return float(raw)
    except ValueError:
        raise PcqalError(f"--tau must be a number or 'auto', got {raw!r}") from None


def _read_manifest(path):
    triples = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            body = line.rstrip("\n")
            if not body.strip() or body.lstrip().startswith("#"):
                continue
            fields = body.split("\t")
            if len(fields) not in (2, 3):
                raise CloudParseError(
                    f"manifest line needs pred<TAB>gt[<TAB>label], found "
                    f"{len(fields)} fields", path=str(path), line=ln)
            label = fields[2] if len(fields) == 3 and fields[2] else None
            triples.append((fields[0], fields[1], label))
    if not triples:
        raise CloudParseError("manifest has no pairs", path=str(path))
    return triples


def cmd_eval(args) -> int:
    if args.pairs:
        if args.pred or args.gt:
            raise PcqalError("--pairs replaces the positional pred/gt arguments")
        triples = _read_manifest(args.pairs)
        loaded = []
        for pred_path, gt_path, label in triples:
            gt_cloud = read_cloud(gt_path)
            loaded.append((read_cloud(pred_path), gt_cloud,
                           _resolve_tau(args.tau, gt_cloud), label))
        taus = {t for _, _, t, _ in loaded}
        if len(taus) == 1:
            report = evaluate_pairs([(p, g, lab) for p, g, _, lab in loaded],
                                    tau=taus.pop(), backend=args.backend)
        else:
            report = aggregate([quality_report(p, g, t, lab, args.backend)
                                for p, g, t, lab in loaded])
    else:
        if not (args.pred and args.gt):
            raise PcqalError("eval needs PRED and GT files (or --pairs)")
        gt_cloud = read_cloud(args.gt)
        report = quality_report(read_cloud(args.pred), gt_cloud,
                                _resolve_tau(args.tau, gt_cloud),
                                backend=args.backend)

    if args.csv:
        _emit(f"# seed={args.seed}\n" + report_csv(report), args.output)
        return 0
    payload = report.to_dict()
    payload["seed"] = args.seed
    if args.json:
        _emit(report_json(payload), args.output)
    else:
        if "overall" in payload:
            o = payload["overall"]
            text = (f"pairs={o['n_pairs']} coverage={o['coverage']:.6f} "
                    f"spurious={o['spurious']:.6f} quality={o['quality']:.6f} "
                    f"f1={o['f1']:.6f}\n")
        else:
            text = (f"coverage={payload['coverage']:.6f} "
                    f"spurious={payload['spurious']:.6f} "
                    f"quality={payload['quality']:.6f} f1={payload['f1']:.6f} "
                    f"(tau={payload['tau']:.9g}, n_pred={payload['n_pred']}, "
                    f"n_gt={payload['n_gt']})\n")
        _emit(text, args.output)
    return 0


def cmd_loss(args) -> int:
    pred = read_cloud(args.pred)
    gt = read_cloud(args.gt)
    payload = {"loss": args.loss, "seed": args.seed,
               "total": None, "cov_term": None, "attr_term": None}
    if args.loss == "qal":
        params = QalParams(args.eps, args.omega, args.lambda_attr)
        value = qal(pred, gt, params, want_grad=args.grad)
        payload.update(total=value.total, cov_term=value.cov_term,
                       attr_term=value.attr_term, eps=params.eps,
                       omega=params.omega, lambda_attr=params.lambda_attr)
        if args.grad:
            payload["grad"] = value.grad.tolist()
    elif args.loss in ("cd-l1", "cd-l2"):
        if args.grad:
            from .losses import loss_and_grad
            total, grad = loss_and_grad(pred, gt, args.loss)
            payload.update(total=total)
            payload["grad"] = grad.tolist()
        else:
            payload.update(total=chamfer(pred, gt, args.loss.removeprefix("cd-")))
    else:
        if args.grad:
            raise PcqalError("--grad is not available for emd")
        payload.update(total=emd(pred, gt, args.mode, reg=args.reg,
                                 iters=args.sinkhorn_iters),
                       mode=args.mode)
    if args.json:
        # full precision on purpose: downstream language bindings compare
        # against these exact values
        _emit(json.dumps(payload, sort_keys=True) + "\n", args.output)
    else:
        parts = [f"total={payload['total']:.9g}"]
        if payload["cov_term"] is not None:
            parts.append(f"cov_term={payload['cov_term']:.9g}")
            parts.append(f"attr_term={payload['attr_term']:.9g}")
        _emit(" ".join(parts) + "\n", args.output)
    return 0


def _load_side(args, role: str, seed: int, default_n: int):
    path = getattr(args, role)
    kind = getattr(args, f"{role}_kind")
    if path and kind:
        raise PcqalError(f"give --{role} or --{role}-kind, not both")
    if path:
        return read_cloud(path)
    if kind:
        spec = ShapeSpec(kind, getattr(args, f"{role}_scale"),
                         getattr(args, f"{role}_n") or default_n, seed)
        return generate_shape(spec)
    raise PcqalError(f"fit needs --{role} FILE or --{role}-kind KIND")


def cmd_fit(args) -> int:
    from .fit import fit_points

    gt_cloud = _load_side(args, "gt", args.seed, 512)
    init_cloud = _load_side(args, "init", args.seed + _INIT_SEED_OFFSET, 256)
    params = QalParams(args.eps, args.omega, args.lambda_attr)
    result = fit_points(init_cloud, gt_cloud, loss=args.loss, params=params,
                        optimizer=args.optimizer, step=args.step,
                        iters=args.iters, metric_every=args.metric_every,
                        tau_eval=args.tau_eval, seed=args.seed)
    if args.out_pred:
        write_cloud(args.out_pred, result.final_pred)
    if args.curve_csv:
        rows = ["iteration,tau,coverage,spurious,sp_bar,quality,f1"]
        for it, rep in result.metric_curve:
            rows.append(f"{it},{rep.tau:.9g},{rep.coverage:.9g},{rep.spurious:.9g},"
                        f"{rep.sp_bar:.9g},{rep.quality:.9g},{rep.f1:.9g}")
        with open(args.curve_csv, "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(rows) + "\n")
    final = result.metric_curve[-1][1]
    if args.json or args.output:
        _emit(report_json(result.to_dict()), args.output)
    if not args.json:
        sys.stdout.write(
            f"fit {args.loss}: loss {result.loss_curve[0]:.6g} -> "
            f"{result.loss_curve[-1]:.6g}, coverage {result.metric_curve[0][1].coverage:.4f} "
            f"-> {final.coverage:.4f} at tau={final.tau:.9g}\n")
    return 0


def cmd_sweep(args) -> int:
    from .sweep import ExperimentConfig, run_ablation

    gt_spec = ShapeSpec(args.gt_kind, args.gt_scale, args.gt_n or 512, 0)
    init_spec = ShapeSpec(args.init_kind, args.init_scale, args.init_n or 256, 0)
    experiment = ExperimentConfig(gt_spec, init_spec, optimizer=args.optimizer,
                                  step=args.step, iters=args.iters,
                                  tau_eval=args.tau_eval)
    base = QalParams(args.eps, args.omega, args.lambda_attr)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    report = run_ablation(args.stage, base, values, experiment, seeds)
    if args.json or args.output:
        _emit(report_json(report.to_dict()), args.output)
    if not args.json:
        sys.stdout.write("\n".join(report.selection_log) + "\n")
    return 0


def cmd_gen(args) -> int:
    spec = ShapeSpec(args.kind, args.scale, args.n, args.seed)
    cloud = generate_shape(spec)
    write_cloud(args.output, cloud)
    sys.stdout.write(f"wrote {len(cloud)} points to {args.output}\n")
    return 0


def _add_qal_flags(p):
    p.add_argument("--eps", type=float, default=0.001)
    p.add_argument("--omega", type=float, default=10.0)
    p.add_argument("--lambda", type=float, default=1.0, dest="lambda_attr")


def _add_side_flags(p, role, default_n):
    p.add_argument(f"--{role}", metavar="FILE")
    p.add_argument(f"--{role}-kind", choices=SHAPE_KINDS)
    p.add_argument(f"--{role}-n", type=int, default=default_n)
    p.add_argument(f"--{role}-scale", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcqal",
                                     description="Point-cloud quality losses and metrics")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="score a prediction against a ground truth")
    p.add_argument("pred", nargs="?")
    p.add_argument("gt", nargs="?")
    p.add_argument("--pairs", metavar="TSV", help="manifest of pred<TAB>gt<TAB>label lines")
    p.add_argument("--tau", default=str(DEFAULT_TAU),
                   help="threshold, or 'auto' for 2 x mean NN spacing of gt")
    p.add_argument("--backend", choices=("brute", "kdtree"), default="brute")
    p.add_argument("--json", action="store_true")
    p.add_argument("--csv", action="store_true")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("loss", help="compute a loss breakdown")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--loss", choices=(*GRAD_LOSSES, "emd"), default="qal")
    _add_qal_flags(p)
    p.add_argument("--grad", action="store_true", help="include d total / d pred")
    p.add_argument("--mode", choices=("exact", "entropic"), default="exact",
                   help="emd solver")
    p.add_argument("--reg", type=float, default=None, help="entropic regularization")
    p.add_argument("--sinkhorn-iters", type=int, default=200)
    p.add_argument("--json", action="store_true")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("fit", help="optimize prediction coordinates under a loss")
    _add_side_flags(p, "gt", 512)
    _add_side_flags(p, "init", 256)
    p.add_argument("--loss", choices=GRAD_LOSSES, default="qal")
    _add_qal_flags(p)
    p.add_argument("--optimizer", choices=("gd", "momentum", "adam"), default="adam")
    p.add_argument("--step", type=float, default=1e-2)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--metric-every", type=int, default=200)
    p.add_argument("--tau-eval", type=float, default=DEFAULT_TAU)
    p.add_argument("--out-pred", metavar="FILE", help="write the fitted cloud")
    p.add_argument("--curve-csv", metavar="FILE", help="write the metric curve")
    p.add_argument("--json", action="store_true")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep", help="staged hyperparameter ablation")
    p.add_argument("--stage", choices=("eps", "omega", "lambda"), required=True)
    p.add_argument("--values", required=True, help="comma-separated sweep values")
    p.add_argument("--seeds", default="0,1,2")
    _add_side_flags(p, "gt", 512)
    _add_side_flags(p, "init", 256)
    _add_qal_flags(p)
    p.add_argument("--optimizer", choices=("gd", "momentum", "adam"), default="adam")
    p.add_argument("--step", type=float, default=1e-2)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--tau-eval", type=float, default=DEFAULT_TAU)
    p.add_argument("--json", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen", help="write a synthetic shape cloud")
    p.add_argument("--kind", choices=SHAPE_KINDS, required=True)
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gen)

    return parser


_USAGE_ERRORS = (PcqalError,)  # anything not matched more specifically
_PARSE_ERRORS = (CloudParseError, FileNotFoundError, IsADirectoryError,
                 PermissionError, UnicodeDecodeError)
_INPUT_DATA_ERRORS = (EmptyCloudError, NonFiniteCoordinateError)
_NUMERICAL_ERRORS = (DivergedLossError, AssignmentUnstableError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _PARSE_ERRORS as exc:
        print(f"pcqal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except _NUMERICAL_ERRORS as exc:
        print(f"pcqal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    except _INPUT_DATA_ERRORS as exc:
        print(f"pcqal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except _USAGE_ERRORS as exc:
        print(f"pcqal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
