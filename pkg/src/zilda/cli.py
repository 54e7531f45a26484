"""Command-line interface: simulate, fit, cv, predict, bench.

Every command honors ``--seed`` and ``--threads`` (env overrides ZILDA_SEED
and ZILDA_THREADS), writes its outputs plus a run manifest into ``--out``,
and is deterministic: re-running with the same seed and config produces
byte-identical data files.  Exit codes: 0 success, 1 runtime or numerical
failure, 2 input or schema error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .classify import PosteriorRule, predict_matrix
from .coda import coda_cross_validate, coda_predict, coda_score
from .dataio import (CODA_MODEL_FORMAT, dump_json, load_coda_model, load_model,
                     model_format, read_dataset, save_coda_model, save_model,
                     write_csv, write_dataset, write_manifest)
from .errors import DataValidationError, DomainError, ZildaError
from .latentcorr import validate_covariates
from .simgen import SimConfig, generate, oracle_classify
from .tune import TuneConfig, cross_validate, fit_at

METHODS = ("oracle", "clda_linear", "clda_mc", "coda")


def _load_config_file(path):
    path = Path(path)
    text = path.read_bytes()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:          # tomllib is stdlib from 3.11
            import tomli as tomllib
        return tomllib.loads(text.decode())
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise DataValidationError(f"{path}: invalid config: {e}") from None


def _sim_config(raw, seed_override=None):
    if not isinstance(raw, dict):
        raise DataValidationError("scenario config must be a table/object")
    known = {f for f in SimConfig.__dataclass_fields__}
    bad = set(raw) - known
    if bad:
        raise DataValidationError(f"unknown scenario config fields: {sorted(bad)}")
    cfg = dict(raw)
    if seed_override is not None:
        cfg["seed"] = seed_override
    try:
        return SimConfig(**cfg)
    except (TypeError, DomainError) as e:
        raise DataValidationError(f"invalid scenario config: {e}") from None


def _tune_config(args, seed):
    return TuneConfig(
        n_folds=args.folds,
        n_lambdas=args.n_lambdas,
        intercept_grid=(args.intercept_lo, args.intercept_hi, args.intercept_count),
        rule=PosteriorRule(args.rule, args.mc_samples),
        seed=seed,
    )


def cmd_simulate(args):
    started = time.time()
    raw = _load_config_file(args.config)
    cfg = _sim_config(raw, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    library = None
    if args.marginals:
        from .simgen import MarginalLibrary

        library = MarginalLibrary.from_csv(args.marginals, level=cfg.truncation)
    data = generate(cfg, library)
    write_dataset(out / "train.csv", data.x_train, data.y_train)
    write_dataset(out / "test.csv", data.x_test, data.y_test)
    truth = {"beta_star": data.beta_star, "meta": data.meta,
             "oracle": {"family": data.oracle.family,
                        "mu_a": data.oracle.mu_a,
                        "mix_sd": data.oracle.mix_sd,
                        "table_idx": list(data.oracle.table_idx)}}
    dump_json(out / "truth.json", truth)
    inputs = {"config": args.config}
    if args.marginals:
        inputs["marginals"] = args.marginals
    write_manifest(out / "manifest.json", "simulate", raw, cfg.seed, inputs,
                   ["train.csv", "test.csv", "truth.json"], started)
    return 0


def cmd_cv(args, refit=False):
    started = time.time()
    x, y, names = read_dataset(args.train)
    validate_covariates(x, names)            # name-carrying rejection first
    seed = args.seed if args.seed is not None else 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.method == "coda":
        model, lambdas, errors = coda_cross_validate(
            x, y, n_folds=args.folds, n_lambdas=args.n_lambdas, seed=seed)
        if refit:
            save_coda_model(out / "model.json", model)
            train_err = float(np.mean(coda_predict(model, x) != y))
            print(f"selected lambda={model.lam:.6g} train_error={train_err:.4f}")
        else:
            print(f"selected lambda={model.lam:.6g}")
        write_csv(out / "cv_table.csv", ["lambda", "cv_error"],
                  ([lam, err] for lam, err in zip(lambdas, errors)))
    else:
        cfg = _tune_config(args, seed)
        if refit:
            model, cv = fit_at_cv(x, y, cfg, names)
            save_model(out / "model.json", model)
            _, labels = predict_matrix(model, x, seed=seed)
            train_err = float(np.mean(labels != y))
            print(f"selected lambda={cv.best_lambda:.6g} intercept={cv.best_intercept:.6g} "
                  f"train_error={train_err:.4f}")
        else:
            cv = cross_validate(x, y, cfg)
            print(f"selected lambda={cv.best_lambda:.6g} intercept={cv.best_intercept:.6g}")
        header = ["lambda"] + [repr(float(v)) for v in cv.intercepts]
        write_csv(out / "cv_table.csv", header,
                  ([lam] + list(row) for lam, row in zip(cv.lambdas, cv.error_table)))
    outputs = ["cv_table.csv"] + (["model.json"] if refit else [])
    write_manifest(out / "manifest.json", "fit" if refit else "cv",
                   vars_config(args), seed, {"train": args.train}, outputs, started)
    return 0


def fit_at_cv(x, y, cfg, names):
    cv = cross_validate(x, y, cfg)
    model = fit_at(x, y, cv.best_lambda, cv.best_intercept, cfg, names)
    return model, cv


def vars_config(args):
    skip = {"func", "out", "train", "model", "data", "config"}
    return {k: v for k, v in vars(args).items() if k not in skip and not callable(v)}


def cmd_fit(args):
    return cmd_cv(args, refit=True)


def cmd_predict(args):
    started = time.time()
    x, _, _ = read_dataset(args.data, require_label=False)
    seed = args.seed if args.seed is not None else 0
    if model_format(args.model) == CODA_MODEL_FORMAT:
        from scipy.special import ndtr

        model = load_coda_model(args.model)
        score = coda_score(model, x)
        # probit-squashed score: monotone in the rule, not a calibrated posterior
        posteriors = ndtr(score)
        labels = (score > 0.0).astype(int)
    else:
        model = load_model(args.model)
        rule = PosteriorRule(args.rule, args.mc_samples)
        posteriors, labels = predict_matrix(model, x, rule=rule, seed=seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = ([i, posteriors[i], int(labels[i])] for i in range(len(labels)))
    write_csv(out / "predictions.csv", ["row", "posterior", "label"], rows)
    write_manifest(out / "manifest.json", "predict", vars_config(args), seed,
                   {"model": args.model, "data": args.data},
                   ["predictions.csv"], started)
    return 0


def _bench_one(scenario_raw, scenario_name, rep, seed, tune_args):
    cfg = _sim_config(dict(scenario_raw), seed)
    data = generate(cfg)
    y_te = data.y_test
    errors = {}
    oracle_labels = oracle_classify(data.oracle, data.x_test, latents=data.z_test)
    errors["oracle"] = float(np.mean(oracle_labels != y_te))

    tune_cfg = TuneConfig(
        n_folds=tune_args["folds"], n_lambdas=tune_args["n_lambdas"],
        intercept_grid=tune_args["intercept_grid"],
        rule=PosteriorRule("linear", tune_args["mc_samples"]), seed=seed)
    cv = cross_validate(data.x_train, data.y_train, tune_cfg)
    model = fit_at(data.x_train, data.y_train, cv.best_lambda, cv.best_intercept,
                   tune_cfg)
    for kind, name in (("linear", "clda_linear"), ("mc", "clda_mc")):
        rule = PosteriorRule(kind, tune_args["mc_samples"])
        _, labels = predict_matrix(model, data.x_test, rule=rule, seed=seed)
        errors[name] = float(np.mean(labels != y_te))

    coda_model, _, _ = coda_cross_validate(
        data.x_train, data.y_train, n_folds=tune_args["folds"],
        n_lambdas=tune_args["n_lambdas"], seed=seed)
    errors["coda"] = float(np.mean(coda_predict(coda_model, data.x_test) != y_te))
    return [(scenario_name, rep, m, errors[m]) for m in METHODS]


def cmd_bench(args):
    started = time.time()
    raw = _load_config_file(args.config)
    scenarios = raw["scenarios"] if isinstance(raw, dict) and "scenarios" in raw else raw
    if isinstance(scenarios, dict):
        scenarios = [scenarios]
    if not isinstance(scenarios, list) or not scenarios:
        raise DataValidationError("bench config must define a non-empty scenario list")
    root_seed = args.seed if args.seed is not None else 0
    tune_args = {"folds": args.folds, "n_lambdas": args.n_lambdas,
                 "intercept_grid": (args.intercept_lo, args.intercept_hi,
                                    args.intercept_count),
                 "mc_samples": args.mc_samples}

    jobs = []
    for si, scen in enumerate(scenarios):
        name = scen.get("name", f"scenario{si}")
        body = {k: v for k, v in scen.items() if k != "name"}
        for rep in range(args.replicates):
            child = np.random.SeedSequence((root_seed, si, rep)).generate_state(1)[0]
            jobs.append((body, name, rep, int(child)))

    results = [None] * len(jobs)

    def run(idx):
        body, name, rep, seed = jobs[idx]
        results[idx] = _bench_one(body, name, rep, seed, tune_args)

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            list(pool.map(run, range(len(jobs))))
    else:
        for i in range(len(jobs)):
            run(i)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [row for chunk in results for row in chunk]
    write_csv(out / "results.csv", ["scenario", "replicate", "method", "error"], rows)

    summary = []
    names = sorted({r[0] for r in rows})
    for name in names:
        for method in METHODS:
            errs = np.array([r[3] for r in rows if r[0] == name and r[2] == method])
            se = errs.std(ddof=1) / np.sqrt(len(errs)) if len(errs) > 1 else 0.0
            summary.append([name, method, errs.mean(), se, len(errs)])
    write_csv(out / "summary.csv",
              ["scenario", "method", "mean_error", "se", "replicates"], summary)
    write_manifest(out / "manifest.json", "bench", vars_config(args), root_seed,
                   {"config": args.config}, ["results.csv", "summary.csv"], started)
    for row in summary:
        print(f"{row[0]:>16s} {row[1]:>12s} mean={row[2]:.4f} se={row[3]:.4f}")
    return 0


def _add_tune_flags(sp):
    sp.add_argument("--method", choices=("clda", "coda"), default="clda")
    sp.add_argument("--folds", type=int, default=5)
    sp.add_argument("--n-lambdas", type=int, default=100)
    sp.add_argument("--intercept-lo", type=float, default=-1.5)
    sp.add_argument("--intercept-hi", type=float, default=1.5)
    sp.add_argument("--intercept-count", type=int, default=100)
    sp.add_argument("--rule", choices=("linear", "mc"), default="linear")
    sp.add_argument("--mc-samples", type=int, default=100)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="zilda",
        description="Sparse discriminant analysis for zero-inflated data")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    env_seed = os.environ.get("ZILDA_SEED")
    env_threads = os.environ.get("ZILDA_THREADS")

    def add_common(sp):
        sp.add_argument("--seed", type=int,
                        default=int(env_seed) if env_seed else None)
        sp.add_argument("--threads", type=int,
                        default=int(env_threads) if env_threads else 1)
        sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("simulate", help="generate a synthetic scenario")
    sp.add_argument("--config", required=True, help="scenario config (JSON/TOML)")
    sp.add_argument("--marginals", default=None,
                    help="CSV of marginal tables (one per column) replacing "
                         "the built-in synthetic library")
    add_common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="cross-validate and fit a classifier")
    sp.add_argument("--train", required=True)
    _add_tune_flags(sp)
    add_common(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("cv", help="cross-validate only, emit the error table")
    sp.add_argument("--train", required=True)
    _add_tune_flags(sp)
    add_common(sp)
    sp.set_defaults(func=lambda a: cmd_cv(a, refit=False))

    sp = sub.add_parser("predict", help="score a dataset with a saved model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--rule", choices=("linear", "mc"), default="linear")
    sp.add_argument("--mc-samples", type=int, default=300)
    add_common(sp)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("bench", help="replicate benchmark across scenarios")
    sp.add_argument("--config", required=True)
    sp.add_argument("--replicates", type=int, default=20)
    _add_tune_flags(sp)
    add_common(sp)
    sp.set_defaults(func=cmd_bench)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataValidationError, DomainError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ZildaError, np.linalg.LinAlgError) as e:
        print(f"failure: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
