"""Command-line interface.

Subcommands mirror the pipeline stages (ingest, profile, impute, split, eda,
select, train, tune, evaluate, explain, inspect) plus `run` for the full
configured pipeline and `synth` for the bundled data generator. Exit codes:
0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    SplitSpec,
    design_matrix,
    drop_rows_missing_label,
    drop_sparse_columns,
    load_directory,
    load_table,
    save_table,
    sparsity_profile,
    split,
)
from .errors import SepsikitError, ValidationError
from .explain import LimeConfig, explain_instance, explanations_to_delimited, explanation_to_text, fit_discretizer
from .gbt import GbtConfig, gbt_fit
from .glm import glm_fit
from .impute import MiceConfig, imputation_summary, mice_fit_transform
from .metrics import confusion, report
from .models import describe_model, load_model, save_model, tune
from .pipeline import (
    design_matrix_raw,
    load_config,
    raw_predictor,
    render_report,
    report_to_dict,
    run_pipeline,
)
from .stats import describe_table, select_features
from .synth import SynthSpec, write_synthetic


class _Parser(argparse.ArgumentParser):
    """Argparse that reports usage problems as validation errors (exit 1)."""

    def error(self, message):
        raise ValidationError(message)


def _load_any(path: str, fmt: str):
    if fmt == "dir":
        return load_directory(path)
    return load_table(path, fmt)


def _load_labeled(path: str, fmt: str, label: str, drop_missing_label: bool = False):
    ds = _load_any(path, fmt)
    if drop_missing_label:
        ds = drop_rows_missing_label(ds, label)
    return ds.with_label(label)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _csv_list(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


# -- subcommand handlers ---------------------------------------------------------


def cmd_synth(args) -> int:
    spec = SynthSpec(
        n_rows=args.n,
        n_features=args.features,
        missing_fraction=args.missingness,
        prevalence=args.prevalence,
        correlation=args.correlation,
        logit_scale=args.logit_scale,
        seed=args.seed,
    )
    paths = write_synthetic(spec, args.out, args.format)
    for key, path in paths.items():
        print(f"{key}: {path}")
    return 0


def cmd_ingest(args) -> int:
    ds = _load_any(args.input, args.format)
    if args.label:
        if args.drop_missing_label:
            ds = drop_rows_missing_label(ds, args.label)
        ds = ds.with_label(args.label)
    out = _out_dir(args) / f"ingested.{'psv' if args.out_format == 'psv' else 'csv'}"
    save_table(ds, out, args.out_format)
    print(f"rows: {ds.n_rows}  columns: {len(ds.columns)}  missing cells: {ds.missing_cell_count()}")
    print(f"wrote {out}")
    return 0


def cmd_profile(args) -> int:
    ds = _load_any(args.input, args.format)
    profile = sparsity_profile(ds)
    print(f"{'column':<28} {'missing_fraction':>16}")
    for name, frac in profile:
        print(f"{name:<28} {frac:>16.4f}")
    if args.out:
        out = _out_dir(args) / "sparsity_profile.csv"
        out.write_text(
            "column,missing_fraction\n"
            + "\n".join(f"{n},{repr(f)}" for n, f in profile) + "\n",
            encoding="utf-8",
        )
        print(f"wrote {out}")
    return 0


def cmd_impute(args) -> int:
    ds = _load_any(args.input, args.format)
    if args.label:
        ds = ds.with_label(args.label)
    cfg = MiceConfig(
        max_iterations=args.max_iterations,
        tolerance=args.tolerance,
        ridge=args.ridge,
        deterministic=not args.stochastic,
        seed=args.seed,
        imputation_count=args.m,
    )
    completed, model = mice_fit_transform(ds, cfg)
    out = _out_dir(args)
    ext = "psv" if args.out_format == "psv" else "csv"
    for i, comp in enumerate(completed):
        suffix = "" if len(completed) == 1 else f"_m{i + 1}"
        save_table(comp, out / f"imputed{suffix}.{ext}", args.out_format)
    summary = imputation_summary(ds, model)
    (out / "imputation_summary.txt").write_text(summary, encoding="utf-8")
    print(summary, end="")
    return 0


def cmd_split(args) -> int:
    ds = _load_labeled(args.input, args.format, args.label)
    spec = SplitSpec(
        train_fraction=args.train,
        validation_fraction=args.validation,
        test_fraction=args.test,
        seed=args.seed,
        stratified=not args.no_stratify,
    )
    train, validation, test = split(ds, spec)
    out = _out_dir(args)
    ext = "psv" if args.out_format == "psv" else "csv"
    for name, part in (("train", train), ("validation", validation), ("test", test)):
        save_table(part, out / f"{name}.{ext}", args.out_format)
    print(f"train: {train.n_rows}  validation: {validation.n_rows}  test: {test.n_rows}")
    return 0


def cmd_eda(args) -> int:
    ds = _load_any(args.input, args.format)
    text = describe_table(ds)
    print(text, end="")
    from .pipeline import _correlation_csv
    from .stats import correlation_matrix

    names, corr = correlation_matrix(ds)
    if args.out:
        out = _out_dir(args)
        (out / "eda_descriptive.txt").write_text(text, encoding="utf-8")
        (out / "eda_correlation.csv").write_text(_correlation_csv(names, corr), encoding="utf-8")
        print(f"wrote {out / 'eda_descriptive.txt'} and {out / 'eda_correlation.csv'}")
    return 0


def cmd_select(args) -> int:
    ds = _load_labeled(args.input, args.format, args.label)
    whitelist = _csv_list(args.whitelist) if args.whitelist is not None else None
    selection = select_features(ds, alpha=args.alpha, whitelist=whitelist, k=args.k)
    print(f"{'feature':<28} {'test':<12} {'p_value':>12}  selected")
    chosen = set(selection.selected)
    for name, kind, p in selection.ranked:
        print(f"{name:<28} {kind.value:<12} {p:>12.3e}  {'yes' if name in chosen else 'no'}")
    if args.out:
        from .pipeline import _selection_csv

        out = _out_dir(args) / "feature_selection.csv"
        out.write_text(_selection_csv(selection), encoding="utf-8")
        print(f"wrote {out}")
    return 0


def cmd_train(args) -> int:
    ds = _load_labeled(args.input, args.format, args.label)
    X, names = design_matrix(ds)
    y = ds.labels()
    out = _out_dir(args)
    if args.model in ("glm", "both"):
        model = glm_fit(X, y, feature_names=names, ridge=args.glm_ridge)
        save_model(model, out / "model_glm.json")
        print(f"glm: iterations={model.iterations} converged={model.converged}")
    if args.model in ("gbt", "both"):
        cfg = GbtConfig(
            n_trees=args.n_trees,
            learning_rate=args.learning_rate,
            max_depth=args.max_depth,
            reg_lambda=args.reg_lambda,
            gamma=args.gamma,
            min_child_weight=args.min_child_weight,
            seed=args.seed,
        )
        model = gbt_fit(X, y, cfg, feature_names=names)
        save_model(model, out / "model_gbt.json")
        print(f"gbt: trees={len(model.trees)} final train log-loss={model.train_log_loss[-1]:.6f}")
    return 0


def cmd_tune(args) -> int:
    train_ds = _load_labeled(args.train, args.format, args.label)
    val_ds = _load_labeled(args.validation, args.format, args.label)
    X_train, names = design_matrix(train_ds)
    X_val, _ = design_matrix(val_ds)
    y_train, y_val = train_ds.labels(), val_ds.labels()
    if args.model == "gbt":
        depths = [int(v) for v in _csv_list(args.depth_grid)]
        grid = [GbtConfig(n_trees=args.n_trees, max_depth=d) for d in depths]
        result = tune(X_train, y_train, X_val, y_val, grid, args.metric, feature_names=names)
        for cfg, score in result.grid:
            print(f"max_depth={cfg.max_depth:<3} {args.metric}={score:.6f}")
        print(f"best: max_depth={result.best_config.max_depth} ({result.best_metric:.6f})")
    else:
        ridges = [float(v) for v in _csv_list(args.ridge_grid)]
        result = tune(X_train, y_train, X_val, y_val, ridges, args.metric, feature_names=names)
        for ridge, score in result.grid:
            print(f"ridge={ridge:<10g} {args.metric}={score:.6f}")
        print(f"best: ridge={result.best_config} ({result.best_metric:.6f})")
    if args.out:
        out = _out_dir(args) / "model_tuned.json"
        save_model(result.best_model, out)
        print(f"wrote {out}")
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    ds = _load_labeled(args.test, args.format, args.label)
    X, names = design_matrix(ds)
    if tuple(names) != tuple(model.feature_names):
        raise ValidationError("test columns do not match the model's feature names")
    probs = np.asarray(model.predict_proba(X))
    preds = (probs >= 0.5).astype(int)
    rep = report(confusion(ds.labels(), preds, positive_label="1"))
    text = render_report(rep)
    print(text, end="")
    if args.out:
        out = _out_dir(args)
        (out / "evaluation.txt").write_text(text, encoding="utf-8")
        (out / "evaluation.json").write_text(
            json.dumps(report_to_dict(rep), indent=2) + "\n", encoding="utf-8")
        print(f"wrote {out / 'evaluation.txt'}")
    return 0


def cmd_explain(args) -> int:
    model = load_model(args.model)
    train_ds = _load_labeled(args.train, args.format, args.label)
    test_ds = _load_labeled(args.test, args.format, args.label)
    features = list(train_ds.feature_names)
    _, design_names = design_matrix(train_ds, features)
    if tuple(design_names) != tuple(model.feature_names):
        raise ValidationError("train columns do not match the model's feature names")
    disc = fit_discretizer(train_ds, features)
    predictor = raw_predictor(model, train_ds, features)
    raw_cases, _ = design_matrix_raw(test_ds, features)
    if args.cases:
        case_ids = [int(v) for v in _csv_list(args.cases)]
    else:
        rng = np.random.default_rng(args.seed)
        case_ids = sorted(int(i) for i in rng.choice(test_ds.n_rows, size=min(args.n_cases, test_ds.n_rows), replace=False))
    k = None if args.k == "all" else int(args.k)
    explanations = []
    for i, case_id in enumerate(case_ids):
        if not 0 <= case_id < test_ds.n_rows:
            raise ValidationError(f"case {case_id} outside the test set (n={test_ds.n_rows})")
        cfg = LimeConfig(n_samples=args.n_samples, k_features=k, seed=args.seed + i)
        explanations.append(explain_instance(
            predictor, raw_cases[case_id], disc, cfg,
            case_id=str(case_id), label=args.label,
        ))
    for e in explanations:
        print(explanation_to_text(e))
    if args.out:
        out = _out_dir(args) / "explanations.csv"
        out.write_text(explanations_to_delimited(explanations), encoding="utf-8")
        print(f"wrote {out}")
    return 0


def cmd_inspect(args) -> int:
    print(describe_model(load_model(args.model)), end="")
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.format is not None:
        overrides["output_format"] = args.format
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    manifest = run_pipeline(cfg)
    for stage in manifest.stages:
        print(f"stage {stage['name']}: " + ", ".join(f"{k}={v}" for k, v in stage.items() if k != "name"))
    print(f"manifest: {Path(cfg.output_dir) / 'manifest.json'}")
    return 0


# -- parser wiring -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sepsikit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"sepsikit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_io(p, input_name="--input"):
        p.add_argument(input_name, required=True, help="input table")
        p.add_argument("--format", default="csv", choices=("csv", "psv", "dir"),
                       help="input format (default csv)")

    p = sub.add_parser("synth", help="generate a synthetic clinical table with known truth")
    p.add_argument("--out", default="synth", help="output directory")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--features", type=int, default=10)
    p.add_argument("--missingness", type=float, default=0.10)
    p.add_argument("--prevalence", type=float, default=0.50)
    p.add_argument("--correlation", type=float, default=0.30)
    p.add_argument("--logit-scale", dest="logit_scale", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", default="csv", choices=("csv", "psv"))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="load, validate, and re-serialize a table")
    add_io(p)
    p.add_argument("--label", default=None)
    p.add_argument("--drop-missing-label", action="store_true")
    p.add_argument("--out", default="out")
    p.add_argument("--out-format", default="csv", choices=("csv", "psv"))
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("profile", help="per-column missingness, descending")
    add_io(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("impute", help="chained-equation imputation")
    add_io(p)
    p.add_argument("--label", default=None)
    p.add_argument("--max-iterations", type=int, default=10)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--ridge", type=float, default=1e-6)
    p.add_argument("--stochastic", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m", type=int, default=1, help="number of completed datasets")
    p.add_argument("--out", default="out")
    p.add_argument("--out-format", default="csv", choices=("csv", "psv"))
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("split", help="stratified train/validation/test split")
    add_io(p)
    p.add_argument("--label", required=True)
    p.add_argument("--train", type=float, default=0.70)
    p.add_argument("--validation", type=float, default=0.15)
    p.add_argument("--test", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-stratify", action="store_true")
    p.add_argument("--out", default="out")
    p.add_argument("--out-format", default="csv", choices=("csv", "psv"))
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("eda", help="descriptive statistics and correlation matrix")
    add_io(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eda)

    p = sub.add_parser("select", help="statistical feature ranking and selection")
    add_io(p)
    p.add_argument("--label", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--whitelist", default=None, help="comma-separated force-included features")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("train", help="fit GLM and/or boosted trees on a completed table")
    add_io(p)
    p.add_argument("--label", required=True)
    p.add_argument("--model", default="both", choices=("glm", "gbt", "both"))
    p.add_argument("--glm-ridge", type=float, default=1e-3)
    p.add_argument("--n-trees", type=int, default=200)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--max-depth", type=int, default=4)
    p.add_argument("--reg-lambda", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--min-child-weight", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", help="grid search scored on the validation set")
    p.add_argument("--train", required=True)
    p.add_argument("--validation", required=True)
    p.add_argument("--format", default="csv", choices=("csv", "psv"))
    p.add_argument("--label", required=True)
    p.add_argument("--model", default="gbt", choices=("glm", "gbt"))
    p.add_argument("--depth-grid", default="1,3,4,6")
    p.add_argument("--ridge-grid", default="1e-4,1e-3,1e-2,1e-1")
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--metric", default="log_loss", choices=("log_loss", "accuracy"))
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("evaluate", help="confusion matrix and statistics on a test table")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--format", default="csv", choices=("csv", "psv"))
    p.add_argument("--label", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explain", help="local surrogate explanations for test cases")
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--format", default="csv", choices=("csv", "psv"))
    p.add_argument("--label", required=True)
    p.add_argument("--cases", default=None, help="comma-separated test row indices")
    p.add_argument("--n-cases", type=int, default=5)
    p.add_argument("--n-samples", type=int, default=5000)
    p.add_argument("--k", default="10", help="surrogate size, or 'all'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("inspect", help="print a saved model's structure")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("run", help="full pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="override the output directory")
    p.add_argument("--format", default=None, choices=("csv", "psv"),
                   help="override the output format")
    p.set_defaults(func=cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SepsikitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        return 0


if __name__ == "__main__":
    sys.exit(main())
