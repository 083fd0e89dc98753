"""Command line entry point: ``rpsvm <subcommand> ...``.

Exit codes: 0 success, 1 a deterministic bound was violated, 2 usage error,
3 I/O or parse error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .errors import (
    BoundVacuousError, CapacityError, DegenerateProblemError, InvalidArgumentError,
    ParseError, UndefinedMarginError,
)
from .geometry import (
    DEFAULT_APPROX_DELTA, data_discrepancy, min_enclosing_ball, verify_combined_bound,
    verify_margin_bound, verify_objective_chain, verify_radius_bound,
)
from .io import load_dataset, write_libsvm
from .sketch import SketchKind, SketchOperator, apply_sketch, build_sketch, recommend_r
from .svm import SvmModel, predict, train_svc, train_svr

log = logging.getLogger("rpsvm")

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3, 4


class NumericalFailure(Exception):
    pass


def _load_config(path):
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise InvalidArgumentError("config file must hold a JSON object")
    return cfg


def _merged(args, cfg, key, default=None):
    """CLI flag wins over the JSON config, which wins over the default."""
    val = getattr(args, key, None)
    if val is not None:
        return val
    return cfg.get(key, default)


def _dataset(args, cfg):
    path = _merged(args, cfg, "input")
    name = _merged(args, cfg, "preset")
    seed = int(_merged(args, cfg, "seed", 0))
    task = _merged(args, cfg, "task", ex.CLASSIFY)
    if path is not None:
        X, y = load_dataset(path, _merged(args, cfg, "format"))
        return X, y
    if name is None:
        raise InvalidArgumentError("give --input FILE or --preset D1|D2|D3")
    spec = ex.preset(name, seed=seed)
    if task == ex.REGRESS:
        return ex.generate_regression(spec, float(_merged(args, cfg, "tube_eps", 0.1)))
    return ex.generate_synthetic(spec)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _train(X, y, task, C, tol, max_iter, tube_eps):
    if task == ex.CLASSIFY:
        return train_svc(X, y, C=C, tol=tol, max_iter=max_iter)
    return train_svr(X, y, C=C, tube_epsilon=tube_eps, tol=tol, max_iter=max_iter)


# -- subcommands -------------------------------------------------------------
def cmd_recommend_r(args, cfg):
    kinds = [args.kind] if args.kind else [k.value for k in SketchKind]
    for k in kinds:
        value = recommend_r(k, args.rho, args.d if args.d is not None else 1, args.eps, args.delta)
        print(value if len(kinds) == 1 else f"{k}\t{value}")
    return EXIT_OK


def cmd_synth(args, cfg):
    spec = ex.SyntheticSpec(args.n, args.d, args.mu, args.sigma, args.seed) if args.n else \
        ex.preset(args.preset or "D1", seed=args.seed, mu=args.mu, sigma=args.sigma)
    if args.task == ex.REGRESS:
        X, y = ex.generate_regression(spec, args.tube_eps)
    else:
        X, y = ex.generate_synthetic(spec)
    write_libsvm(args.out, X, y)
    log.info("wrote %dx%d dataset to %s", X.shape[0], X.shape[1], args.out)
    return EXIT_OK


def cmd_sketch(args, cfg):
    X, y = _dataset(args, cfg)
    op = build_sketch(args.kind, X.shape[1], args.r, args.seed, mode=args.mode,
                      replace=not args.without_replacement)
    Xt, report = apply_sketch(op, X)
    write_libsvm(args.out, Xt, y)
    _write_json(args.descriptor, op.to_dict())
    log.info("t_rp=%.6f s, nnz %d -> %d", report.t_rp, report.input_nnz, report.output_nnz)
    return EXIT_OK


def cmd_train(args, cfg):
    X, y = _dataset(args, cfg)
    if args.sketch:
        op = SketchOperator.from_dict(json.loads(Path(args.sketch).read_text()))
        X, _ = apply_sketch(op, X)
    model = _train(X, y, _merged(args, cfg, "task", ex.CLASSIFY), float(_merged(args, cfg, "C", 1000.0)),
                   float(_merged(args, cfg, "tol", 1e-6)), int(_merged(args, cfg, "max_iter", 10_000_000)),
                   float(_merged(args, cfg, "tube_eps", 0.1)))
    if not model.converged:
        log.warning("solver stopped at max_iter with KKT violation %.3g", model.kkt_violation)
    _write_json(args.model, model.to_dict())
    return EXIT_OK


def cmd_predict(args, cfg):
    model = SvmModel.from_dict(json.loads(Path(args.model).read_text()))
    op = SketchOperator.from_dict(json.loads(Path(args.sketch).read_text())) if args.sketch else None
    # raw inputs have the operator's width when a sketch sits between data and model
    X, y = load_dataset(args.input, args.format, n_features=op.d if op else model.w.shape[0])
    if op is not None:
        X, _ = apply_sketch(op, X)
    preds = predict(model, X)
    lines = "".join(f"{p!r}\n" for p in preds.tolist())
    if args.out:
        Path(args.out).write_text(lines, encoding="utf-8")
    else:
        sys.stdout.write(lines)
    task = ex.CLASSIFY if model.kind == "svc" else ex.REGRESS
    try:
        log.info("metrics: %s", ex.metrics(preds, y, task))
    except InvalidArgumentError as exc:
        log.info("metrics unavailable: %s", exc)
    return EXIT_OK


def _experiment_config(args, cfg):
    keys = ("kinds", "r_values", "C", "tol", "max_iter", "folds", "cv_reps", "seed_reps",
            "task", "tube_epsilon", "seed", "cw_mode", "n_jobs")
    merged = {k: cfg[k] for k in keys if k in cfg}
    flag_map = {"kinds": args.kinds, "r_values": args.r, "C": args.C, "tol": args.tol,
                "folds": args.folds, "cv_reps": args.cv_reps, "seed_reps": args.seed_reps,
                "task": args.task, "tube_epsilon": args.tube_eps, "seed": args.seed}
    merged.update({k: v for k, v in flag_map.items() if v is not None})
    return ex.ExperimentConfig(**merged)


def cmd_experiment(args, cfg):
    config = _experiment_config(args, cfg)
    X, y = _dataset(args, {**cfg, "task": config.task})
    report = ex.run_experiment(X, y, config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "timings.csv").write_text(report.timing_csv(), encoding="utf-8")
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out / "records.jsonl").write_text(report.records_jsonl(), encoding="utf-8")
    log.info("wrote report for %d runs to %s", len(report.records), out)
    return EXIT_OK


def _check_record(check):
    rec = check.to_dict()
    rec["status"] = "satisfied" if check.satisfied else "violated"
    return rec


def cmd_verify(args, cfg):
    task = _merged(args, cfg, "task", ex.CLASSIFY)
    X, y = _dataset(args, cfg)
    C = float(_merged(args, cfg, "C", 1000.0))
    tol = float(_merged(args, cfg, "tol", 1e-8))
    tube_eps = float(_merged(args, cfg, "tube_eps", 0.1))
    delta = float(_merged(args, cfg, "approx_delta", DEFAULT_APPROX_DELTA))
    op = build_sketch(args.kind, X.shape[1], args.r, args.seed, mode=args.mode,
                      replace=not args.without_replacement)
    Xt, _ = apply_sketch(op, X)
    full = _train(X, y, task, C, tol, 10_000_000, tube_eps)
    sk = _train(Xt, y, task, C, tol, 10_000_000, tube_eps)
    if not (full.converged and sk.converged):
        raise NumericalFailure("SVM solver did not reach the requested tolerance")
    e = data_discrepancy(X, op).e_norm
    records = []
    name = "svc_margin" if task == ex.CLASSIFY else "svr_margin"
    chain = verify_objective_chain(full, sk, e, X, y if task == ex.CLASSIFY else None)
    records.append({"check": "objective_chain", **_check_record(chain)})
    try:
        records.append({"check": name, **_check_record(verify_margin_bound(full, sk, e))})
    except BoundVacuousError as exc:
        records.append({"check": name, "status": "vacuous", "e_norm": e, "reason": str(exc)})
    if task == ex.CLASSIFY:
        radius = verify_radius_bound(X, op, delta)
        records.append({"check": "radius", **_check_record(radius)})
        meb = min_enclosing_ball(X, delta)
        meb_t = min_enclosing_ball(Xt, delta)
        e_b = radius.details["e_b_norm"]
        for form in ("chained", "stated"):
            label = f"combined_{form}"
            try:
                rec = _check_record(verify_combined_bound(full, sk, meb, meb_t, e, e_b, form=form))
                if form == "stated":
                    rec["gating"] = False
                records.append({"check": label, **rec})
            except BoundVacuousError as exc:
                records.append({"check": label, "status": "vacuous", "reason": str(exc)})
    text = "".join(json.dumps(r, sort_keys=True, default=float) + "\n" for r in records)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    violated = [r for r in records if r["status"] == "violated" and r.get("gating", True)]
    return EXIT_VIOLATION if violated else EXIT_OK


# -- argument parsing --------------------------------------------------------------
def _data_args(p):
    p.add_argument("--input", help="LIBSVM or .csv dataset")
    p.add_argument("--format", choices=["libsvm", "csv"])
    p.add_argument("--preset", help="synthetic preset D1, D2 or D3 (when no --input)")
    p.add_argument("--task", choices=[ex.CLASSIFY, ex.REGRESS])
    p.add_argument("--tube-eps", dest="tube_eps", type=float)


def _sketch_args(p, r_required=True):
    p.add_argument("--kind", required=True, choices=[k.value for k in SketchKind])
    p.add_argument("--r", type=int, required=r_required)
    p.add_argument("--mode", choices=["countsketch", "block"])
    p.add_argument("--without-replacement", action="store_true",
                   help="SRHT only: sample distinct columns (orthogonal when r = padded d)")


def build_parser():
    parser = argparse.ArgumentParser(prog="rpsvm", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON config; flags override its keys")
    parser.add_argument("--seed", type=int, default=None, help="controls all randomness")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("recommend-r", help="projection dimension from the sampling bounds")
    p.add_argument("--kind", choices=[k.value for k in SketchKind])
    p.add_argument("--rho", type=int, required=True)
    p.add_argument("--d", type=int)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float)
    p.set_defaults(func=cmd_recommend_r)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--preset", default=None)
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--task", choices=[ex.CLASSIFY, ex.REGRESS], default=ex.CLASSIFY)
    p.add_argument("--tube-eps", dest="tube_eps", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sketch", help="project a dataset and save the operator descriptor")
    _data_args(p)
    _sketch_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--descriptor", required=True)
    p.set_defaults(func=cmd_sketch)

    p = sub.add_parser("train", help="train an SVM and write the model JSON")
    _data_args(p)
    p.add_argument("--C", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--sketch", help="operator descriptor to apply before training")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="evaluate a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["libsvm", "csv"])
    p.add_argument("--sketch")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("experiment", help="repeated cross-validation over sketches")
    _data_args(p)
    p.add_argument("--kinds", nargs="+")
    p.add_argument("--r", nargs="+", type=int)
    p.add_argument("--C", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--folds", type=int)
    p.add_argument("--cv-reps", dest="cv_reps", type=int)
    p.add_argument("--seed-reps", dest="seed_reps", type=int)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("verify", help="check the margin, radius and combined bounds")
    _data_args(p)
    _sketch_args(p)
    p.add_argument("--C", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--approx-delta", dest="approx_delta", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args.config)
        if args.seed is None:
            args.seed = int(cfg.get("seed", 0))
        return args.func(args, cfg)
    except ParseError as exc:
        print(f"rpsvm: parse error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"rpsvm: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalFailure, CapacityError, UndefinedMarginError, np.linalg.LinAlgError) as exc:
        print(f"rpsvm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidArgumentError, DegenerateProblemError, json.JSONDecodeError) as exc:
        print(f"rpsvm: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
