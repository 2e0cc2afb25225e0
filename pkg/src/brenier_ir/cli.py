"""Command-line interface: ``brenier-ir <command> [options]``.

Every command reads CSV or model JSON, writes to ``--out`` or stdout, and is
deterministic given ``--seed``. Errors print one diagnostic line to stderr
and exit with status 1; usage errors exit with status 2.
"""

from __future__ import annotations

import argparse
import io as _stdio
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .calibration import all_metrics, calibration_map_grid, fit_recalibrator, recalibrate
from .core import BrenierModel, FitConfig, LabeledDataset, fit, laguerre_predict
from .monotone import check_cyclic_monotone
from .pav import pav_fit
from .sim import W_INITS, SimModel, fit_sim, sim_predict
from .transport import recover_vertex_plan, solve_discrete_ot, squared_l2_cost

PROG = "brenier-ir"


# ---------------------------------------------------------------------------
# helpers


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _csv_text(header, rows) -> str:
    buf = _stdio.StringIO()
    io.write_csv(buf, header, rows)
    return buf.getvalue()


def _fit_config(args, **overrides) -> FitConfig:
    params = dict(
        k=args.k,
        max_outer_iters=args.max_iters,
        fd_epsilon=args.fd_epsilon,
        step_tolerance=args.step_tol,
        objective_tolerance=args.objective_tol,
        seed=args.seed,
        init_strategy=args.init,
    )
    params.update(overrides)
    return FitConfig(**params)


def _load_brenier(path) -> BrenierModel:
    model = io.load_model(path)
    if not isinstance(model, BrenierModel):
        raise ValueError(f"{path}: expected a brenier model, found a single-index model")
    return model


def _load_sim(path) -> SimModel:
    model = io.load_model(path)
    if not isinstance(model, SimModel):
        raise ValueError(f"{path}: expected a single-index model, found a brenier model")
    return model


# ---------------------------------------------------------------------------
# commands


def cmd_fit(args) -> None:
    config = _fit_config(args, simplex_constrained=not args.unconstrained)
    data = io.load_dataset(args.data, "zy_pairs")
    if args.mode == "1d-oracle":
        if data.d != 1:
            raise ValueError(f"1d-oracle mode needs d = 1, data has d = {data.d}")
        yhat = pav_fit(data.Z[:, 0], data.Y[:, 0])
        _emit(args, _csv_text(["z0", "yhat0"], zip(data.Z[:, 0], yhat)))
        return
    model = fit(data, config)
    _emit(args, io.dumps_model(model))


def cmd_predict(args) -> None:
    model = _load_brenier(args.model)
    Z = io.read_points(args.data, "z")
    out, idx = laguerre_predict(model, Z)
    header = [f"u{j}" for j in range(model.d)] + ["cell"]
    _emit(args, _csv_text(header, (list(u) + [c] for u, c in zip(out, idx))))


def cmd_calibrate(args) -> None:
    config = _fit_config(args)
    cal = io.load_dataset(args.data, "probs_labels")
    model = fit_recalibrator(cal, config)
    _emit(args, io.dumps_model(model))


def cmd_eval_calib(args) -> None:
    cal = io.load_dataset(args.probs, "probs_labels")
    probs = cal.probs
    if args.model:
        model = _load_brenier(args.model)
        if model.d != cal.d:
            raise ValueError(f"model has d = {model.d}, probabilities have d = {cal.d}")
        probs = recalibrate(model, probs)
    metrics = all_metrics(probs, cal.labels, args.bins)
    _emit(args, _csv_text(["metric", "value"], metrics.items()))


def cmd_map_grid(args) -> None:
    model = _load_brenier(args.model)
    rows = calibration_map_grid(model, args.resolution)
    header = ["q0", "q1", "q2", "u0", "u1", "u2"]
    _emit(args, _csv_text(header, (list(q) + list(u) for q, u in rows)))


def cmd_sim_fit(args) -> None:
    config = _fit_config(args, simplex_constrained=True)
    data = io.load_dataset(args.data, "covariates_labels", n_classes=args.n_classes)
    model = fit_sim(
        data.X,
        data.Y,
        config,
        lambda_W=args.lambda_W,
        T_max=args.T_max,
        inner_iters=args.inner_iters,
        w_init=args.w_init,
    )
    _emit(args, io.dumps_model(model))


def cmd_sim_predict(args) -> None:
    model = _load_sim(args.model)
    X = io.read_points(args.data, "x")
    P = sim_predict(model, X)
    header = [f"p{j}" for j in range(model.d)] + ["label"]
    _emit(args, _csv_text(header, (list(p) + [int(np.argmax(p))] for p in P)))


def cmd_verify_cm(args) -> None:
    Z = io.read_points(args.data, "z")
    U = io.read_points(args.data, "u")
    depth = None if args.max_cycle_len == "all" else int(args.max_cycle_len)
    res = check_cyclic_monotone(Z, U, max_cycle_len=depth, tol=args.tol)
    witness = "" if res.witness is None else " ".join(str(i) for i in res.witness)
    rows = [
        ("holds", res.holds),
        ("depth", res.depth),
        ("exhaustive", res.exhaustive),
        ("margin", res.margin),
        ("witness", witness),
    ]
    _emit(args, _csv_text(["key", "value"], rows))


def cmd_ot_solve(args) -> None:
    if args.cost:
        C = io.read_matrix(args.cost)
    else:
        C = squared_l2_cost(io.read_matrix(args.source), io.read_matrix(args.target))
    sol = solve_discrete_ot(C)
    plan = recover_vertex_plan(sol) if args.vertex else sol.plan
    doc = {
        "primal_cost": sol.primal_cost,
        "dual_value": sol.dual_value,
        "duality_gap": sol.duality_gap,
        "plan": plan.weights,
        "f": sol.duals.f,
        "g": sol.duals.g,
    }
    _emit(args, io.dumps_json(doc))


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _add_fit_options(p: argparse.ArgumentParser, k: int = 15) -> None:
    p.add_argument("--k", type=int, default=k, help=f"number of quantiles (default: {k})")
    p.add_argument("--max-iters", type=int, default=200, help="outer descent iterations (default: 200)")
    p.add_argument("--fd-epsilon", type=float, default=1e-6)
    p.add_argument("--step-tol", type=float, default=1e-10)
    p.add_argument("--objective-tol", type=float, default=1e-8)
    p.add_argument("--init", choices=("response_subsample", "random_simplex"), default="response_subsample")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=PROG, description="Brenier isotonic regression toolkit")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("fit", help="fit quantiles to z/y pairs")
    p.add_argument("--data", required=True, help="CSV with z0.., y0.. columns")
    p.add_argument("--unconstrained", action="store_true", help="do not restrict quantiles to the simplex")
    p.add_argument("--mode", choices=("brenier", "1d-oracle"), default="brenier")
    _add_fit_options(p)
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="Laguerre-map predictions of a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="CSV with z0.. columns")
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("calibrate", help="fit a recalibrator on probabilities and labels")
    p.add_argument("--data", required=True, help="CSV with p0.., label columns")
    _add_fit_options(p)
    _add_common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("eval-calib", help="calibration metrics as metric,value CSV")
    p.add_argument("--probs", required=True, help="CSV with p0.., label columns")
    p.add_argument("--model", help="recalibrator applied before scoring")
    p.add_argument("--bins", type=int, default=15, help="bins per axis (default: 15)")
    _add_common(p)
    p.set_defaults(func=cmd_eval_calib)

    p = sub.add_parser("map-grid", help="recalibration map over a grid of the 2-simplex")
    p.add_argument("--model", required=True)
    p.add_argument("--resolution", type=int, default=10)
    _add_common(p)
    p.set_defaults(func=cmd_map_grid)

    p = sub.add_parser("sim-fit", help="fit a single-index model")
    p.add_argument("--data", required=True, help="CSV with x0.., label columns")
    p.add_argument("--n-classes", type=int, help="number of classes (default: largest label + 1)")
    p.add_argument("--lambda-W", dest="lambda_W", type=float, default=1e-3)
    p.add_argument("--T-max", dest="T_max", type=int, default=100)
    p.add_argument("--inner-iters", type=int, default=25)
    p.add_argument("--w-init", choices=W_INITS, default="least_squares")
    _add_fit_options(p, k=6)
    _add_common(p)
    p.set_defaults(func=cmd_sim_fit)

    p = sub.add_parser("sim-predict", help="predictions of a single-index model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="CSV with x0.. columns")
    _add_common(p)
    p.set_defaults(func=cmd_sim_predict)

    p = sub.add_parser("verify-cm", help="check cyclic monotonicity of paired points")
    p.add_argument("--data", required=True, help="CSV with z0.. and u0.. columns")
    p.add_argument("--max-cycle-len", default="4", help="longest cycle, or 'all' (default: 4)")
    p.add_argument("--tol", type=float, default=1e-8)
    _add_common(p)
    p.set_defaults(func=cmd_verify_cm)

    p = sub.add_parser("ot-solve", help="exact discrete OT with uniform marginals")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--cost", help="CSV cost matrix (header row, n x k)")
    src.add_argument("--source", help="CSV of source points; requires --target")
    p.add_argument("--target", help="CSV of target points")
    p.add_argument("--vertex", action="store_true", help="return a permutation vertex (square problems)")
    _add_common(p)
    p.set_defaults(func=cmd_ot_solve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "ot-solve" and args.cost and args.target:
        parser.error("--target cannot be combined with --cost")
    if args.command == "ot-solve" and bool(args.source) != bool(args.target):
        parser.error("--source and --target must be given together")
    if args.command == "verify-cm" and args.max_cycle_len != "all":
        try:
            int(args.max_cycle_len)
        except ValueError:
            parser.error(f"--max-cycle-len must be an integer or 'all', got {args.max_cycle_len!r}")
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        args.func(args)
    except (ValueError, OSError, RuntimeError, json.JSONDecodeError) as exc:
        msg = " ".join(str(exc).split())
        print(f"{PROG} {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
