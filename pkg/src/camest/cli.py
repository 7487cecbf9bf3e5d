"""Command-line front end.

Subcommands: estimate-mean, estimate-cov, density, regress, simulate.  Every
command takes a --seed (default 0) and emits a versioned JSON summary to
stdout or --out; --emit-csv adds plot-ready series and --figures renders the
matching PNG next to them.  Usage errors exit 2, data errors exit 1.
Defaults honour CAM_* environment variables (e.g. CAM_SEED, CAM_BUDGET).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import figures, kde, locreg, simlab, ustat
from .dataset import (
    CamError,
    group_by_pattern,
    ingest_csv,
    select_adjustment_set,
)

_MODEL_ALIASES = {
    "toy": ("toy_gaussian", None),
    "example1": ("example_joint", "mean"),
    "example2": ("example_joint", "cov"),
    "density1": ("density_1", None),
    "density2": ("density_2", None),
    "density3": ("density_3", None),
    "regression1": ("regression_1", None),
    "regression2": ("regression_2", None),
    "regression3": ("regression_3", None),
}


def _env(name, cast, fallback):
    raw = os.environ.get(f"CAM_{name}")
    if raw is None:
        return fallback
    try:
        return cast(raw)
    except ValueError:
        raise SystemExit(f"bad CAM_{name} environment value: {raw!r}")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _emit(payload: dict, out_path):
    text = json.dumps(_jsonable(payload), indent=2) + "\n"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _add_common(p):
    p.add_argument("--seed", type=int, default=_env("SEED", int, 0))
    p.add_argument("--out", help="write the JSON summary here instead of stdout")
    p.add_argument("--emit-csv", dest="emit_csv", help="write plot-ready CSV series here")
    p.add_argument("--figures", help="render a PNG figure to this path")


def _add_dataset(p):
    p.add_argument("--input", required=True, help="CSV file with a header row")
    p.add_argument("--response", required=True, help="response column name")
    p.add_argument("--features", help="comma-separated feature columns (default: all others)")
    p.add_argument(
        "--na",
        action="append",
        default=None,
        help="missing-value marker (repeatable; default NA and empty)",
    )
    p.add_argument("--min-count", type=int, default=_env("MIN_COUNT", int, 20))
    p.add_argument("--integrate", action="store_true", help="pool compatible patterns")


def _add_smoothing(p):
    p.add_argument("--kernel", choices=["gaussian", "box"],
                   default=_env("KERNEL", str, "gaussian"))
    p.add_argument("--bandwidth", default=_env("BANDWIDTH", str, None),
                   help="a number, or a rule name (rot; loocv for regress)")


def _load_dataset(args):
    na = tuple(args.na) if args.na else ("NA", "")
    features = [c.strip() for c in args.features.split(",")] if args.features else None
    with open(args.input, "r", newline="") as fh:
        ds = ingest_csv(fh, response=args.response, features=features, na_markers=na)
    groups = group_by_pattern(ds)
    adjustment = select_adjustment_set(groups, min_count=args.min_count,
                                       integrate=args.integrate)
    return ds, groups, adjustment


def _pattern_counts(groups):
    return {str(m): int(groups.groups[m].shape[0]) for m in groups.patterns()}


def _adjustment_kernels(choice, ds, groups, adjustment, phi):
    kernels = {}
    for m in adjustment.patterns:
        if choice == "linear":
            kernels[m] = ustat.linear_adjustment(ds, groups, m, phi)
        elif phi.order == 1:
            kernels[m] = ustat.response_mean_kernel(pattern=m)
        else:
            kernels[m] = ustat.response_squared_difference_kernel(pattern=m)
    return kernels


def _write_estimate_csv(path, result):
    import csv as _csv

    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["pattern", "gamma", "omega", "lambda_diag", "theta0m", "thetam"])
        for i, m in enumerate(result.patterns):
            writer.writerow([
                str(m),
                repr(float(result.gamma[i])),
                repr(float(result.geometry.omegaU[i])),
                repr(float(result.geometry.lambdaU[i, i])),
                repr(float(result.components.theta0M[i])),
                repr(float(result.components.thetaM[i])),
            ])


def _run_estimate(args, phi) -> int:
    ds, groups, adjustment = _load_dataset(args)
    kernels = _adjustment_kernels(args.adjustment, ds, groups, adjustment, phi)
    result = ustat.cam_ustat(
        ds, groups, adjustment, phi, kernels,
        level=args.alpha, budget=args.budget,
        estimate_budget=args.estimate_budget, seed=args.seed,
    )
    payload = result.to_json_dict()
    payload["pattern_counts"] = _pattern_counts(groups)
    payload["seed"] = args.seed
    if args.emit_csv:
        _write_estimate_csv(args.emit_csv, result)
        payload["csv"] = args.emit_csv
    if args.figures:
        payload["figure"] = figures.render_estimate(payload, args.figures)
    _emit(payload, args.out)
    return 0


def _cmd_estimate_mean(args) -> int:
    phi = ustat.mean_kernel(args.feature - 1)
    return _run_estimate(args, phi)


def _cmd_estimate_cov(args) -> int:
    second = None if args.second == "response" else int(args.second) - 1
    phi = ustat.covariance_kernel(args.feature - 1, second)
    return _run_estimate(args, phi)


def _bandwidth(args, ds, groups, allow_loocv=False):
    raw = args.bandwidth or ("loocv" if allow_loocv else "rot")
    if raw == "rot":
        return kde.rule_of_thumb_bandwidth(ds, groups), "rot"
    if raw == "loocv":
        if not allow_loocv:
            raise CamError("loocv bandwidth applies to regression only")
        rot = kde.rule_of_thumb_bandwidth(ds, groups)
        grid = rot * np.geomspace(0.5, 3.0, 8)
        return locreg.loocv_bandwidth(ds, groups, grid, family=args.kernel), "loocv"
    try:
        return float(raw), "fixed"
    except ValueError:
        raise CamError(f"bad bandwidth {raw!r}: use a number, 'rot'"
                       + (" or 'loocv'" if allow_loocv else "")) from None


def _parse_points(args, d):
    points = []
    for spec in args.at or []:
        values = [float(v) for v in spec.split(",")]
        if len(values) != d:
            raise CamError(f"query point {spec!r} has {len(values)} coordinates, expected {d}")
        points.append(values)
    if getattr(args, "queries", None):
        with open(args.queries, "r", newline="") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                values = [float(v) for v in line.split(",")]
                if len(values) != d:
                    raise CamError(f"query row {line!r} has {len(values)} values, expected {d}")
                points.append(values)
    return np.asarray(points, dtype=float)


def _cmd_density(args) -> int:
    ds, groups, adjustment = _load_dataset(args)
    h, rule = _bandwidth(args, ds, groups)
    spec = kde.SmootherSpec(family=args.kernel, h=h, d=ds.d)
    payload = {
        "schema": 1,
        "command": "density",
        "bandwidth": h,
        "bandwidth_rule": rule,
        "kernel": args.kernel,
        "pattern_counts": _pattern_counts(groups),
        "patterns": [str(m) for m in adjustment.patterns],
        "seed": args.seed,
    }
    points = _parse_points(args, ds.d)
    if points.size:
        rows = []
        for x in points:
            res = kde.cam_density_at(ds, groups, adjustment, x, spec)
            rows.append({
                "x": [float(v) for v in x],
                "f_cc": res.f_cc,
                "f_cam": res.f_cam,
                "gamma": {str(m): float(g) for m, g in zip(res.patterns, res.gamma)},
            })
        payload["points"] = rows
    if args.grid or not points.size:
        axes = kde.grid_axes(ds, groups, spec, points=args.grid or 50)
        f_cc, f_cam, gammas = kde.cam_density_grid(ds, groups, adjustment, axes, spec)
        payload["grid_points_per_axis"] = args.grid or 50
        payload["gamma_mean"] = {str(m): float(g.mean()) for m, g in gammas.items()}
        if args.emit_csv:
            _write_density_csv(args.emit_csv, axes, f_cc, f_cam)
            payload["csv"] = args.emit_csv
        if args.figures:
            payload["figure"] = figures.render_density_grid(axes, f_cc, f_cam, args.figures)
    _emit(payload, args.out)
    return 0


def _write_density_csv(path, axes, f_cc, f_cam):
    import csv as _csv

    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=-1)
    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow([f"x{j + 1}" for j in range(coords.shape[1])] + ["f_cc", "f_cam"])
        flat_cc, flat_cam = f_cc.ravel(), f_cam.ravel()
        for i in range(coords.shape[0]):
            writer.writerow(
                [repr(float(v)) for v in coords[i]]
                + [repr(float(flat_cc[i])), repr(float(flat_cam[i]))]
            )


def _cmd_regress(args) -> int:
    ds, groups, adjustment = _load_dataset(args)
    points = _parse_points(args, ds.d)
    if not points.size:
        raise CamError("regress needs at least one query point (--at or --queries)")
    h, rule = _bandwidth(args, ds, groups, allow_loocv=True)
    spec = kde.SmootherSpec(family=args.kernel, h=h, d=ds.d)
    eta_cc, eta_cam, gamma, sigma2, _ = locreg.cam_regress_batch(
        ds, groups, adjustment, points, spec
    )
    payload = {
        "schema": 1,
        "command": "regress",
        "bandwidth": h,
        "bandwidth_rule": rule,
        "kernel": args.kernel,
        "pattern_counts": _pattern_counts(groups),
        "patterns": [str(m) for m in adjustment.patterns],
        "seed": args.seed,
        "points": [
            {
                "x": [float(v) for v in points[i]],
                "eta_cc": float(eta_cc[i]),
                "eta_cam": float(eta_cam[i]),
                "sigma2": float(sigma2[i]),
                "gamma": {str(m): float(gamma[i, j])
                          for j, m in enumerate(adjustment.patterns)},
            }
            for i in range(points.shape[0])
        ],
    }
    if args.emit_csv:
        _write_regress_csv(args.emit_csv, points, eta_cc, eta_cam, gamma, adjustment)
        payload["csv"] = args.emit_csv
    if args.figures:
        payload["figure"] = figures.render_regression(points, eta_cc, eta_cam, args.figures)
    _emit(payload, args.out)
    return 0


def _write_regress_csv(path, points, eta_cc, eta_cam, gamma, adjustment):
    import csv as _csv

    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(
            [f"x{j + 1}" for j in range(points.shape[1])]
            + ["eta_cc", "eta_cam"]
            + [f"gamma_{m}" for m in adjustment.patterns]
        )
        for i in range(points.shape[0]):
            writer.writerow(
                [repr(float(v)) for v in points[i]]
                + [repr(float(eta_cc[i])), repr(float(eta_cam[i]))]
                + [repr(float(g)) for g in gamma[i]]
            )


def _cmd_simulate(args) -> int:
    if args.model not in _MODEL_ALIASES:
        raise CamError(f"unknown model {args.model!r}; known: {sorted(_MODEL_ALIASES)}")
    model, target = _MODEL_ALIASES[args.model]
    if model == "toy_gaussian":
        report_dict = simlab.run_toy_experiment(
            simlab._TOY_GAMMA, args.n, args.reps, seed=args.seed
        )
        payload = {"schema": 1, "command": "simulate", "model": args.model,
                   "seed": args.seed, "summary": report_dict}
        _emit(payload, args.out)
        return 0
    spec = simlab.ModelSpec.first_feature_missing(
        model, args.n, args.p1, seed=args.seed, sigma=args.sigma
    )
    if target is not None:
        config = simlab.UStatConfig(
            target=target, phim=args.phim, level=args.alpha,
            budget=args.budget, estimate_budget=args.estimate_budget,
            min_count=args.min_count,
        )
        report = simlab.run_ustat_experiment(spec, config, args.reps,
                                             seed=args.seed, threads=args.threads)
    elif model.startswith("density"):
        report = simlab.run_density_experiment(
            spec, args.reps, bandwidth=args.bandwidth or "rot", seed=args.seed,
            grid_points=args.grid_points, min_count=args.min_count, threads=args.threads,
        )
    else:
        report = simlab.run_regression_experiment(
            spec, args.reps, bandwidth=args.bandwidth or "loocv", seed=args.seed,
            n_mc=args.n_mc, min_count=args.min_count, threads=args.threads,
        )
    payload = report.to_json_dict()
    payload["command"] = "simulate"
    if args.emit_csv:
        report.write_csv(args.emit_csv)
        payload["csv"] = args.emit_csv
    if args.figures:
        payload["figure"] = figures.render_simulation(report, args.figures)
    _emit(payload, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="camest",
        description="Correlation-assisted estimation with missing features",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate-mean", help="marginal mean of one feature")
    _add_dataset(p)
    p.add_argument("--feature", type=int, required=True, help="1-based feature index")
    p.add_argument("--adjustment", choices=["linear", "response"], default="linear")
    p.add_argument("--alpha", type=float, default=_env("ALPHA", float, 0.05))
    p.add_argument("--budget", type=int,
                   default=_env("BUDGET", int, ustat.DEFAULT_GEOMETRY_BUDGET))
    p.add_argument("--estimate-budget", dest="estimate_budget", type=int,
                   default=_env("ESTIMATE_BUDGET", int, ustat.DEFAULT_ESTIMATE_BUDGET))
    _add_common(p)
    p.set_defaults(run=_cmd_estimate_mean)

    p = sub.add_parser("estimate-cov", help="covariance of a feature with another or the response")
    _add_dataset(p)
    p.add_argument("--feature", type=int, required=True, help="1-based feature index")
    p.add_argument("--second", default="response",
                   help="partner: a 1-based feature index or 'response'")
    p.add_argument("--adjustment", choices=["linear", "response"], default="linear")
    p.add_argument("--alpha", type=float, default=_env("ALPHA", float, 0.05))
    p.add_argument("--budget", type=int,
                   default=_env("BUDGET", int, ustat.DEFAULT_GEOMETRY_BUDGET))
    p.add_argument("--estimate-budget", dest="estimate_budget", type=int,
                   default=_env("ESTIMATE_BUDGET", int, ustat.DEFAULT_ESTIMATE_BUDGET))
    _add_common(p)
    p.set_defaults(run=_cmd_estimate_cov)

    p = sub.add_parser("density", help="CAM kernel density at points or on a grid")
    _add_dataset(p)
    _add_smoothing(p)
    p.add_argument("--at", action="append", help="query point 'v1,v2,...' (repeatable)")
    p.add_argument("--grid", type=int, help="points per axis for a grid evaluation")
    _add_common(p)
    p.set_defaults(run=_cmd_density)

    p = sub.add_parser("regress", help="CAM local-constant regression at query points")
    _add_dataset(p)
    _add_smoothing(p)
    p.add_argument("--at", action="append", help="query point 'v1,v2,...' (repeatable)")
    p.add_argument("--queries", help="headerless CSV of query points")
    _add_common(p)
    p.set_defaults(run=_cmd_regress)

    p = sub.add_parser("simulate", help="replicated synthetic experiments")
    p.add_argument("--model", required=True,
                   help="toy | example1 | example2 | density1..3 | regression1..3")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p1", type=float, default=0.5,
                   help="missingness probability of the first feature")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--sigma", type=float, default=0.2, help="noise sd for the example models")
    p.add_argument("--phim", choices=["practical", "linear", "oracle"], default="practical")
    p.add_argument("--alpha", type=float, default=_env("ALPHA", float, 0.05))
    p.add_argument("--budget", type=int,
                   default=_env("BUDGET", int, ustat.DEFAULT_GEOMETRY_BUDGET))
    p.add_argument("--estimate-budget", dest="estimate_budget", type=int,
                   default=_env("ESTIMATE_BUDGET", int, ustat.DEFAULT_ESTIMATE_BUDGET))
    p.add_argument("--bandwidth", default=_env("BANDWIDTH", str, None),
                   help="rot/loocv or a number, for the smoothing models")
    p.add_argument("--grid-points", dest="grid_points", type=int, default=200)
    p.add_argument("--n-mc", dest="n_mc", type=int, default=10_000)
    p.add_argument("--min-count", type=int, default=_env("MIN_COUNT", int, 20))
    p.add_argument("--threads", type=int, default=_env("THREADS", int, 1),
                   help="replication parallelism; 1 is the reference mode")
    _add_common(p)
    p.set_defaults(run=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.run(args)
    except (CamError, OSError, ValueError, KeyError) as exc:
        sys.stderr.write(f"camest: error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
