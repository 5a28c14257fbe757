"""Command-line interface.

Subcommands: ingest-check, fit, predict, debias, evaluate, theory-check,
synth. Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.
Diagnostics go to stderr; data goes to files or stdout. Every random choice
flows from an explicit seed (flag or config field), so identical invocations
produce identical outputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from . import __version__
from .data import load_csv, load_schema
from .debias import build_index
from .exceptions import DataError, NumericalError, TowerDebiasError
from .harness import ExperimentConfig, export_results, run_experiment, write_synthetic
from .metrics import pearson
from .models import (FitConfig, export_predictions, fit_knn_predictor, fit_linear,
                     fit_logistic, load_external_predictions, load_model, save_model)
from .theory import (PRESET_NAMES, GaussianSpec, correlation_reduction_closed_form,
                     population_coefficients, preset_spec, random_spec,
                     residualize, run_inequality_trials, sample_matrix, verify_tower)


def _load_dataset(args):
    return load_csv(args.data, load_schema(args.schema),
                    drop_missing=getattr(args, "drop_missing", False))


def _cmd_ingest_check(args) -> int:
    ds = _load_dataset(args)
    doc = {
        "rows": ds.n_rows,
        "dropped_rows": ds.n_dropped,
        "encoded_columns": [
            {"name": n, "role": r.value} for n, r in zip(ds.names, ds.roles)
        ],
        "categorical_levels": {c: list(v) for c, v in ds.encoding_map.items()},
        "target": {
            "name": ds.target_name,
            "binary": ds.binary_target,
            "levels": list(ds.target_levels) if ds.target_levels else None,
        },
    }
    json.dump(doc, sys.stdout, indent=1, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def _fit_config(args) -> FitConfig:
    return FitConfig(ridge_epsilon=args.ridge_epsilon,
                     logistic_max_iter=args.max_iter,
                     logistic_tol=args.tol,
                     knn_k=args.knn_k)


def _cmd_fit(args) -> int:
    ds = _load_dataset(args)
    config = _fit_config(args)
    if args.model == "linear":
        fp = fit_linear(ds, config)
    elif args.model == "logistic":
        fp = fit_logistic(ds, config)
    else:
        fp = fit_knn_predictor(ds, config, task=args.task)
    save_model(fp, args.out)
    print(f"wrote {fp.kind} model ({fp.task}) to {args.out}", file=sys.stderr)
    return 0


def _cmd_predict(args) -> int:
    fp = load_model(args.model)
    ds = _load_dataset(args)
    export_predictions(args.out, ds.row_ids, fp.predict(ds))
    print(f"wrote {ds.n_rows} predictions to {args.out}", file=sys.stderr)
    return 0


def _cmd_debias(args) -> int:
    if args.k < 1:
        raise ValueError(f"k must be >= 1, got {args.k}")
    ds = _load_dataset(args)
    if args.predictions:
        reference_preds = load_external_predictions(args.predictions).predict(ds)
    else:
        reference_preds = load_model(args.model).predict(ds)
    index = build_index(ds, reference_preds, k=args.k)
    debiased = index.predict(ds)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("id,debiased_prediction\n")
        for rid, value in zip(ds.row_ids, debiased):
            fh.write(f"{int(rid)},{float(value)!r}\n")
    print(f"wrote {ds.n_rows} debiased predictions to {args.out}", file=sys.stderr)
    return 0


def _cmd_evaluate(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    if args.threads is not None:
        config = dataclasses.replace(config, threads=args.threads)
    out_dir = args.out_dir or config.output_dir
    if not out_dir:
        raise ValueError("no output directory: set output_dir in the config or pass --out-dir")
    result = run_experiment(config)
    paths = export_results(result, out_dir)
    print(f"wrote {', '.join(str(p) for p in paths.values())}", file=sys.stderr)
    return 0


def _cmd_synth(args) -> int:
    if bool(args.preset) == bool(args.spec):
        raise ValueError("pass exactly one of --preset or --spec")
    if args.preset:
        spec = preset_spec(args.preset)
    else:
        try:
            with open(args.spec, "r", encoding="utf-8") as fh:
                spec = GaussianSpec.from_dict(json.load(fh))
        except FileNotFoundError:
            raise DataError(f"spec file not found: {args.spec}") from None
        except (KeyError, json.JSONDecodeError) as exc:
            raise DataError(f"spec file must be JSON with 'mean' and 'covariance': {exc}") from None
    ds = write_synthetic(spec, n=args.n, seed=args.seed,
                         data_path=args.out_data, schema_path=args.out_schema)
    print(f"wrote {ds.n_rows} rows to {args.out_data} (schema {args.out_schema})",
          file=sys.stderr)
    return 0


def _cmd_theory_check(args) -> int:
    checks = []

    gaps = []
    for t in range(args.trials):
        coeffs = population_coefficients(random_spec(args.p, args.seed + t))
        gaps.append(coeffs.identity_gap())
    checks.append({
        "name": "coefficient_identity",
        "trials": args.trials,
        "max_gap": max(gaps),
        "tolerance": 1e-10,
        "passed": max(gaps) < 1e-10,
    })

    mc_trials = min(args.trials, 5)
    mc_tol = 3.0 / np.sqrt(args.n)
    mc_gap = 0.0
    for t in range(mc_trials):
        spec = random_spec(args.p, args.seed + 1000 + t)
        coeffs = population_coefficients(spec)
        closed = correlation_reduction_closed_form(coeffs, spec)
        features, sensitive, _ = sample_matrix(spec, args.n, args.seed + 1000 + t)
        baseline_fit = (features @ coeffs.joint_feature_coefs[1:]
                        + coeffs.joint_feature_coefs[0]
                        + coeffs.joint_sensitive_coef * sensitive)
        debiased_fit = features @ coeffs.marginal_coefs[1:] + coeffs.marginal_coefs[0]
        rho_b = pearson(baseline_fit, sensitive)
        rho_d = pearson(debiased_fit, sensitive)
        mc_gap = max(mc_gap,
                     1.0 if rho_b is None else abs(rho_b - closed.baseline),
                     1.0 if rho_d is None else abs(rho_d - closed.debiased))
    checks.append({
        "name": "closed_form_vs_monte_carlo",
        "trials": mc_trials,
        "n": args.n,
        "max_gap": mc_gap,
        "tolerance": mc_tol,
        "passed": mc_gap <= mc_tol,
    })

    tower = verify_tower(random_spec(args.p, args.seed + 2000), n=args.n,
                         seed=args.seed + 2000)
    checks.append({"name": "tower_property", **tower.to_dict()})

    features, sensitive, _ = sample_matrix(random_spec(args.p, args.seed + 3000),
                                           min(args.n, 20000), args.seed + 3000)
    residuals, _ = residualize(features, sensitive.reshape(-1, 1))
    resid_corr = max(
        (abs(r) for r in (pearson(residuals[:, j], sensitive)
                          for j in range(residuals.shape[1])) if r is not None),
        default=0.0,
    )
    checks.append({
        "name": "residual_orthogonality",
        "max_abs_corr": resid_corr,
        "tolerance": 1e-10,
        "passed": resid_corr < 1e-10,
    })

    reports = run_inequality_trials(trials=args.trials, n=args.n, k=args.k,
                                    base_seed=args.seed + 4000, p_values=(args.p,),
                                    threads=args.threads)
    n_hold = sum(r.holds for r in reports)
    required = int(np.ceil(0.95 * args.trials))
    checks.append({
        "name": "correlation_inequality",
        "trials": args.trials,
        "n": args.n,
        "k": args.k,
        "holds": n_hold,
        "required": required,
        "passed": n_hold >= required,
    })

    doc = {
        "seed": args.seed,
        "p": args.p,
        "checks": checks,
        "all_pass": all(c["passed"] for c in checks),
    }
    json.dump(doc, sys.stdout, indent=1, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="towerdebias",
        description="Remove sensitive-attribute influence from black-box predictions "
                    "by nearest-neighbor averaging, and evaluate the fairness-utility "
                    "trade-off.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_data_args(p):
        p.add_argument("--data", required=True, help="CSV file with a header row")
        p.add_argument("--schema", required=True,
                       help="JSON mapping column name to target/feature/sensitive/ignored")
        p.add_argument("--drop-missing", action="store_true",
                       help="drop rows with missing values instead of failing")

    p = sub.add_parser("ingest-check", help="load a dataset and print its encoded layout")
    add_data_args(p)
    p.set_defaults(func=_cmd_ingest_check)

    p = sub.add_parser("fit", help="fit a baseline model and export it as JSON")
    add_data_args(p)
    p.add_argument("--model", required=True, choices=["linear", "logistic", "knn"])
    p.add_argument("--task", default="auto", choices=["auto", "regression", "classification"],
                   help="only consulted for knn models")
    p.add_argument("--out", required=True, help="output model JSON path")
    p.add_argument("--ridge-epsilon", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--knn-k", type=int, default=10)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("predict", help="apply an exported model to a dataset")
    add_data_args(p)
    p.add_argument("--model", required=True, help="model JSON from 'fit'")
    p.add_argument("--out", required=True, help="output CSV (id,prediction)")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("debias", help="debias predictions by averaging over nearest "
                                      "feature-space neighbors")
    add_data_args(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--predictions", help="CSV (id,prediction) of black-box outputs")
    group.add_argument("--model", help="model JSON from 'fit'")
    p.add_argument("--k", type=int, required=True, help="neighbor count, >= 1")
    p.add_argument("--out", required=True, help="output CSV (id,debiased_prediction)")
    p.set_defaults(func=_cmd_debias)

    p = sub.add_parser("evaluate", help="run the repeated-holdout k-sweep experiment")
    p.add_argument("--config", required=True, help="experiment JSON (see README)")
    p.add_argument("--out-dir", help="override the config's output_dir")
    p.add_argument("--threads", type=int, help="cap worker parallelism")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("theory-check", help="run the seeded mathematical checks and "
                                            "print a JSON report")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p", type=int, default=2, help="feature dimension")
    p.add_argument("--k", type=int, default=25, help="neighbor count for the "
                                                     "inequality trials")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=_cmd_theory_check)

    p = sub.add_parser("synth", help="sample a synthetic dataset from a Gaussian spec")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset", choices=list(PRESET_NAMES))
    group.add_argument("--spec", help="JSON file with 'mean' and 'covariance'")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-data", required=True)
    p.add_argument("--out-schema", required=True)
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 0 for --help, 2 for usage errors
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except TowerDebiasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
