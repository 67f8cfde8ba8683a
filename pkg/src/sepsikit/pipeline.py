"""Configuration-driven end-to-end runs.

A run executes: load -> label -> drop sparse columns -> split -> impute
(fit on train, apply to validation/test) -> descriptive outputs -> feature
selection -> model fitting (optionally tuned on validation) -> test
evaluation -> local explanations for sampled test cases. Every artifact is
written under the output directory and digested into a manifest, and one
global seed pins the whole run, so two runs with the same configuration are
byte-identical apart from timings.

The imputation order is split-first by default; `impute_before_split` fits
the chained equations on the whole table instead, which mirrors a common
single-table workflow at the cost of letting test rows inform the
imputation model.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    Dataset,
    SplitSpec,
    design_matrix,
    drop_rows_missing_label,
    drop_sparse_columns,
    load_directory,
    load_table,
    save_table,
    serialize_table,
    split,
)
from .errors import ComputationError, ValidationError
from .explain import (
    Discretizer,
    LimeConfig,
    explain_instance,
    explanations_to_delimited,
    explanation_to_text,
    fit_discretizer,
)
from .gbt import GbtConfig, gbt_fit
from .glm import glm_fit
from .impute import MiceConfig, apply_imputation, imputation_summary, mice_fit_transform
from .metrics import ClassificationReport, confusion, report
from .models import describe_model, save_model, tune
from .stats import ColumnKind, correlation_matrix, describe_table, select_features
from .synth import write_synthetic  # re-exported for the CLI  # noqa: F401


# -- configuration --------------------------------------------------------------


def _strict(mapping: dict, allowed: set[str], context: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ValidationError(f"unknown config key(s) in {context}: {', '.join(sorted(unknown))}")


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.70
    validation_fraction: float = 0.15
    test_fraction: float = 0.15
    stratified: bool = True

    def to_spec(self, seed: int) -> SplitSpec:
        return SplitSpec(
            train_fraction=self.train_fraction,
            validation_fraction=self.validation_fraction,
            test_fraction=self.test_fraction,
            seed=seed,
            stratified=self.stratified,
        )


@dataclass(frozen=True)
class SelectionConfig:
    alpha: float = 0.05
    whitelist: tuple[str, ...] | None = None  # None -> clinical default set
    k: int | None = None


@dataclass(frozen=True)
class TuneConfig:
    enabled: bool = False
    metric: str = "log_loss"
    gbt_max_depth: tuple[int, ...] = (1, 3, 4, 6)
    glm_ridge: tuple[float, ...] = (1e-4, 1e-3, 1e-2, 1e-1)


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "both"  # glm | gbt | both
    glm_ridge: float = 1e-3
    glm_tol: float = 1e-8
    glm_max_iter: int = 100
    gbt: GbtConfig = GbtConfig()
    tune: TuneConfig = TuneConfig()

    def __post_init__(self):
        if self.kind not in ("glm", "gbt", "both"):
            raise ValidationError("model.kind must be one of glm, gbt, both")


@dataclass(frozen=True)
class ExplainConfig:
    n_cases: int = 5
    case_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class PipelineConfig:
    input_path: str
    input_format: str = "csv"  # csv | psv | dir
    label_column: str = "sepsis"
    drop_rows_missing_label: bool = False
    sparsity_threshold: float = 0.90
    impute_before_split: bool = False
    split: SplitConfig = SplitConfig()
    mice: MiceConfig = MiceConfig()
    selection: SelectionConfig = SelectionConfig()
    model: ModelConfig = ModelConfig()
    lime: LimeConfig = LimeConfig()
    explain: ExplainConfig = ExplainConfig()
    output_dir: str = "out"
    output_format: str = "csv"
    seed: int = 0

    def __post_init__(self):
        if self.input_format not in ("csv", "psv", "dir"):
            raise ValidationError("input.format must be one of csv, psv, dir")
        if self.output_format not in ("csv", "psv"):
            raise ValidationError("output_format must be csv or psv")
        if not 0.0 < self.sparsity_threshold <= 1.0:
            raise ValidationError("sparsity_threshold must lie in (0, 1]")
        # exercise the split invariants now rather than mid-run
        self.split.to_spec(seed=self.seed)


def config_from_dict(raw: dict) -> PipelineConfig:
    """Parse a configuration mapping; unknown keys are rejected, not ignored."""
    _strict(raw, {
        "input", "label_column", "drop_rows_missing_label", "sparsity_threshold",
        "impute_before_split", "split", "mice", "selection", "model", "lime",
        "explain", "output_dir", "output_format", "seed",
    }, "config")
    inp = raw.get("input")
    if not isinstance(inp, dict) or "path" not in inp:
        raise ValidationError("config requires input: {path: ..., format: ...}")
    _strict(inp, {"path", "format"}, "input")

    split_d = dict(raw.get("split", {}))
    _strict(split_d, {"train_fraction", "validation_fraction", "test_fraction", "stratified"}, "split")
    mice_d = dict(raw.get("mice", {}))
    _strict(mice_d, {"max_iterations", "tolerance", "ridge", "deterministic", "imputation_count"}, "mice")
    sel_d = dict(raw.get("selection", {}))
    _strict(sel_d, {"alpha", "whitelist", "k"}, "selection")
    if sel_d.get("whitelist") is not None:
        sel_d["whitelist"] = tuple(sel_d["whitelist"])
    model_d = dict(raw.get("model", {}))
    _strict(model_d, {"kind", "glm_ridge", "glm_tol", "glm_max_iter", "gbt", "tune"}, "model")
    gbt_d = dict(model_d.pop("gbt", {}))
    _strict(gbt_d, {"n_trees", "learning_rate", "max_depth", "reg_lambda", "gamma",
                    "min_child_weight", "seed"}, "model.gbt")
    tune_d = dict(model_d.pop("tune", {}))
    _strict(tune_d, {"enabled", "metric", "gbt_max_depth", "glm_ridge"}, "model.tune")
    for key in ("gbt_max_depth", "glm_ridge"):
        if key in tune_d:
            tune_d[key] = tuple(tune_d[key])
    lime_d = dict(raw.get("lime", {}))
    _strict(lime_d, {"n_samples", "kernel_width", "k_features", "surrogate_ridge"}, "lime")
    if lime_d.get("k_features") == "all":
        lime_d["k_features"] = None
    explain_d = dict(raw.get("explain", {}))
    _strict(explain_d, {"n_cases", "case_ids"}, "explain")
    if "case_ids" in explain_d:
        explain_d["case_ids"] = tuple(str(c) for c in explain_d["case_ids"])

    return PipelineConfig(
        input_path=str(inp["path"]),
        input_format=str(inp.get("format", "csv")),
        label_column=str(raw.get("label_column", "sepsis")),
        drop_rows_missing_label=bool(raw.get("drop_rows_missing_label", False)),
        sparsity_threshold=float(raw.get("sparsity_threshold", 0.90)),
        impute_before_split=bool(raw.get("impute_before_split", False)),
        split=SplitConfig(**split_d),
        mice=MiceConfig(**mice_d),
        selection=SelectionConfig(**sel_d),
        model=ModelConfig(gbt=GbtConfig(**gbt_d), tune=TuneConfig(**tune_d), **model_d),
        lime=LimeConfig(**lime_d),
        explain=ExplainConfig(**explain_d),
        output_dir=str(raw.get("output_dir", "out")),
        output_format=str(raw.get("output_format", "csv")),
        seed=int(raw.get("seed", 0)),
    )


def config_to_dict(cfg: PipelineConfig) -> dict:
    return {
        "input": {"path": cfg.input_path, "format": cfg.input_format},
        "label_column": cfg.label_column,
        "drop_rows_missing_label": cfg.drop_rows_missing_label,
        "sparsity_threshold": cfg.sparsity_threshold,
        "impute_before_split": cfg.impute_before_split,
        "split": dataclasses.asdict(cfg.split),
        "mice": {
            "max_iterations": cfg.mice.max_iterations,
            "tolerance": cfg.mice.tolerance,
            "ridge": cfg.mice.ridge,
            "deterministic": cfg.mice.deterministic,
            "imputation_count": cfg.mice.imputation_count,
        },
        "selection": {
            "alpha": cfg.selection.alpha,
            "whitelist": list(cfg.selection.whitelist) if cfg.selection.whitelist is not None else None,
            "k": cfg.selection.k,
        },
        "model": {
            "kind": cfg.model.kind,
            "glm_ridge": cfg.model.glm_ridge,
            "glm_tol": cfg.model.glm_tol,
            "glm_max_iter": cfg.model.glm_max_iter,
            "gbt": dataclasses.asdict(cfg.model.gbt),
            "tune": {
                "enabled": cfg.model.tune.enabled,
                "metric": cfg.model.tune.metric,
                "gbt_max_depth": list(cfg.model.tune.gbt_max_depth),
                "glm_ridge": list(cfg.model.tune.glm_ridge),
            },
        },
        "lime": {
            "n_samples": cfg.lime.n_samples,
            "kernel_width": cfg.lime.kernel_width,
            "k_features": cfg.lime.k_features,
            "surrogate_ridge": cfg.lime.surrogate_ridge,
        },
        "explain": {"n_cases": cfg.explain.n_cases, "case_ids": list(cfg.explain.case_ids)},
        "output_dir": cfg.output_dir,
        "output_format": cfg.output_format,
        "seed": cfg.seed,
    }


def load_config(path: str | Path) -> PipelineConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ValidationError(f"config {path}: top level must be an object")
    return config_from_dict(raw)


# -- report rendering ------------------------------------------------------------


def _fmt_rate(value: float) -> str:
    return "NA" if math.isnan(value) else f"{value:.4f}"


def _fmt_p(value: float) -> str:
    if math.isnan(value):
        return "NA"
    if value < 2e-16:
        return "<2e-16"
    if value < 1e-4:
        return f"{value:.4g}"
    return f"{value:.4f}"


def render_report(rep: ClassificationReport) -> str:
    """The printed statistics block: matrix (rows = prediction, columns =
    reference), accuracy with its exact CI, NIR and its test, kappa, McNemar,
    then the rate family and the positive-class line."""
    cm = rep.matrix
    pos = cm.positive_label
    neg = f"not {pos}" if not pos.isdigit() else str(1 - int(pos))
    width = max(len(str(v)) for v in (cm.tp, cm.fp, cm.fn, cm.tn)) + 2
    width = max(width, len(pos) + 2, len(neg) + 2)
    head = " " * 10 + "Reference"
    cols = f"{'Prediction':>10}{neg:>{width}}{pos:>{width}}"
    row0 = f"{neg:>10}{cm.tn:>{width}}{cm.fn:>{width}}"
    row1 = f"{pos:>10}{cm.fp:>{width}}{cm.tp:>{width}}"
    lines = [
        "Confusion Matrix and Statistics",
        "",
        head,
        cols,
        row0,
        row1,
        "",
        f"               Accuracy : {_fmt_rate(rep.accuracy)}",
        f"                 95% CI : ({_fmt_rate(rep.accuracy_ci_low)}, {_fmt_rate(rep.accuracy_ci_high)})",
        f"    No Information Rate : {_fmt_rate(rep.nir)}",
        f"    P-Value [Acc > NIR] : {_fmt_p(rep.p_acc_gt_nir)}",
        "",
        f"                  Kappa : {_fmt_rate(rep.kappa)}",
        "",
        f" Mcnemar's Test P-Value : {_fmt_p(rep.mcnemar_p)}",
        "",
        f"            Sensitivity : {_fmt_rate(rep.sensitivity)}",
        f"            Specificity : {_fmt_rate(rep.specificity)}",
        f"         Pos Pred Value : {_fmt_rate(rep.ppv)}",
        f"         Neg Pred Value : {_fmt_rate(rep.npv)}",
        f"             Prevalence : {_fmt_rate(rep.prevalence)}",
        f"         Detection Rate : {_fmt_rate(rep.detection_rate)}",
        f"   Detection Prevalence : {_fmt_rate(rep.detection_prevalence)}",
        f"      Balanced Accuracy : {_fmt_rate(rep.balanced_accuracy)}",
        "",
        f"       'Positive' Class : {pos}",
    ]
    return "\n".join(lines) + "\n"


def report_to_dict(rep: ClassificationReport) -> dict:
    def none_if_nan(v: float):
        return None if math.isnan(v) else v

    return {
        "matrix": {"tp": rep.matrix.tp, "fp": rep.matrix.fp,
                   "fn": rep.matrix.fn, "tn": rep.matrix.tn,
                   "positive_label": rep.matrix.positive_label},
        "accuracy": rep.accuracy,
        "accuracy_ci": [rep.accuracy_ci_low, rep.accuracy_ci_high],
        "nir": rep.nir,
        "p_acc_gt_nir": none_if_nan(rep.p_acc_gt_nir),
        "kappa": rep.kappa,
        "mcnemar_p": rep.mcnemar_p,
        "sensitivity": none_if_nan(rep.sensitivity),
        "specificity": none_if_nan(rep.specificity),
        "ppv": none_if_nan(rep.ppv),
        "npv": none_if_nan(rep.npv),
        "prevalence": rep.prevalence,
        "detection_rate": rep.detection_rate,
        "detection_prevalence": rep.detection_prevalence,
        "balanced_accuracy": none_if_nan(rep.balanced_accuracy),
    }


# -- raw-row predictor adapter ---------------------------------------------------


@dataclass(frozen=True)
class ExpandingPredictor:
    """Present a model fitted on one-hot expanded columns as a predictor over
    the raw (pre-expansion) feature space, for the explainer."""
    inner: object
    feature_names: tuple[str, ...]
    levels: tuple[int, ...]  # 0 = numeric passthrough, else category count

    def expand(self, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        blocks = []
        for j, k in enumerate(self.levels):
            if k == 0:
                blocks.append(rows[:, j:j + 1])
            else:
                onehot = np.zeros((rows.shape[0], k))
                codes = rows[:, j].astype(int)
                onehot[np.arange(rows.shape[0]), codes] = 1.0
                blocks.append(onehot)
        return np.hstack(blocks)

    def predict_proba(self, rows):
        rows = np.asarray(rows, dtype=float)
        single = rows.ndim == 1
        out = self.inner.predict_proba(self.expand(rows))
        return float(np.asarray(out)[0]) if single else out


def raw_predictor(model, ds: Dataset, features: list[str]) -> ExpandingPredictor:
    levels = []
    for name in features:
        meta, _, _ = ds.column(name)
        levels.append(len(meta.dictionary) if meta.kind == ColumnKind.CATEGORICAL else 0)
    return ExpandingPredictor(inner=model, feature_names=tuple(features), levels=tuple(levels))


# -- manifest --------------------------------------------------------------------


def _digest_bytes(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def digest_file(path: Path) -> str:
    return _digest_bytes(path.read_bytes())


def digest_dataset(ds: Dataset) -> str:
    return _digest_bytes(serialize_table(ds, "csv").encode("utf-8"))


@dataclass
class RunManifest:
    config: dict
    versions: dict
    stages: list = field(default_factory=list)
    stage_inputs: dict = field(default_factory=dict)
    leakage_check: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    status: str = "ok"
    failed_stage: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "tool": "sepsikit",
            "status": self.status,
            "failed_stage": self.failed_stage,
            "error": self.error,
            "versions": self.versions,
            "config": self.config,
            "stages": self.stages,
            "stage_inputs": self.stage_inputs,
            "leakage_check": self.leakage_check,
            "outputs": self.outputs,
            "timings": self.timings,
        }


def _versions() -> dict:
    return {
        "sepsikit": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


# -- the run ---------------------------------------------------------------------


def _correlation_csv(names: list[str], matrix: np.ndarray) -> str:
    lines = ["," + ",".join(names)]
    for i, name in enumerate(names):
        cells = ["NA" if math.isnan(v) else repr(float(v)) for v in matrix[i]]
        lines.append(name + "," + ",".join(cells))
    return "\n".join(lines) + "\n"


def _selection_csv(selection) -> str:
    lines = ["feature,test,p_value,selected"]
    chosen = set(selection.selected)
    for name, kind, p in selection.ranked:
        lines.append(f"{name},{kind.value},{repr(float(p))},{int(name in chosen)}")
    return "\n".join(lines) + "\n"


def _pick_cases(n_test: int, explain_cfg: ExplainConfig, seed: int) -> list[int]:
    chosen: list[int] = []
    for cid in explain_cfg.case_ids:
        try:
            idx = int(cid)
        except ValueError:
            raise ValidationError(f"explain.case_ids entry '{cid}' is not a row index") from None
        if not 0 <= idx < n_test:
            raise ValidationError(f"explain case {idx} outside the test set (n={n_test})")
        if idx not in chosen:
            chosen.append(idx)
    extra = min(explain_cfg.n_cases, n_test) - len([c for c in chosen])
    if extra > 0:
        rng = np.random.default_rng(seed)
        pool = [i for i in range(n_test) if i not in chosen]
        sampled = rng.choice(len(pool), size=min(extra, len(pool)), replace=False)
        chosen.extend(pool[i] for i in sorted(int(s) for s in sampled))
    return chosen


def run_pipeline(cfg: PipelineConfig) -> RunManifest:
    """Execute every stage and write all artifacts plus manifest.json.

    Any stage failure aborts with the stage name and cause; whatever was
    already written is flagged as partial in the manifest.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config=config_to_dict(cfg), versions=_versions())
    t_start = time.perf_counter()
    stage_seconds: dict[str, float] = {}
    fmt = cfg.output_format

    def emit_text(name: str, text: str) -> Path:
        path = out / name
        path.write_text(text, encoding="utf-8")
        manifest.outputs[name] = digest_file(path)
        return path

    def emit_table(name: str, ds: Dataset) -> Path:
        return emit_text(name, serialize_table(ds, fmt))

    current_stage = "load"
    try:
        # ---- load + label ------------------------------------------------
        t0 = time.perf_counter()
        if cfg.input_format == "dir":
            ds = load_directory(cfg.input_path)
        else:
            ds = load_table(cfg.input_path, cfg.input_format)
        if cfg.drop_rows_missing_label:
            ds = drop_rows_missing_label(ds, cfg.label_column)
        ds = ds.with_label(cfg.label_column)
        manifest.stages.append({"name": "load", "rows": ds.n_rows, "columns": len(ds.columns)})
        stage_seconds["load"] = time.perf_counter() - t0

        # ---- clean ---------------------------------------------------------
        current_stage = "clean"
        t0 = time.perf_counter()
        ds = drop_sparse_columns(ds, cfg.sparsity_threshold)
        emit_table(f"cleaned.{fmt}", ds)
        manifest.stages.append({"name": "clean", "rows": ds.n_rows, "columns": len(ds.columns)})
        stage_seconds["clean"] = time.perf_counter() - t0

        seeds = np.random.SeedSequence(cfg.seed).generate_state(4)
        split_seed, mice_seed, case_seed, lime_seed = (int(s) for s in seeds)

        # ---- optional whole-table imputation (paper-faithful order) --------
        mice_cfg = dataclasses.replace(cfg.mice, seed=mice_seed)
        model_imp = None
        if cfg.impute_before_split:
            current_stage = "impute"
            t0 = time.perf_counter()
            manifest.stage_inputs["mice_fit"] = [digest_dataset(ds)]
            completed, model_imp = mice_fit_transform(ds, mice_cfg)
            emit_text("imputation_summary.txt", imputation_summary(ds, model_imp))
            ds = completed[0]
            manifest.stages.append({
                "name": "impute", "rows": ds.n_rows, "columns": len(ds.columns),
                "iterations": model_imp.iterations_run, "converged": model_imp.converged,
            })
            stage_seconds["impute"] = time.perf_counter() - t0

        # ---- split ----------------------------------------------------------
        current_stage = "split"
        t0 = time.perf_counter()
        train, validation, test = split(ds, cfg.split.to_spec(seed=split_seed))
        emit_table(f"train.{fmt}", train)
        emit_table(f"validation.{fmt}", validation)
        emit_table(f"test.{fmt}", test)
        manifest.stages.append({
            "name": "split",
            "rows": {"train": train.n_rows, "validation": validation.n_rows, "test": test.n_rows},
        })
        stage_seconds["split"] = time.perf_counter() - t0

        # ---- impute (default order: fit on train only) ----------------------
        if not cfg.impute_before_split:
            current_stage = "impute"
            t0 = time.perf_counter()
            manifest.stage_inputs["mice_fit"] = [digest_dataset(train)]
            completed, model_imp = mice_fit_transform(train, mice_cfg)
            train_c = completed[0]
            validation_c = apply_imputation(model_imp, validation)
            test_c = apply_imputation(model_imp, test)
            emit_text("imputation_summary.txt", imputation_summary(train, model_imp))
            manifest.stages.append({
                "name": "impute", "rows": train_c.n_rows,
                "iterations": model_imp.iterations_run, "converged": model_imp.converged,
            })
            stage_seconds["impute"] = time.perf_counter() - t0
        else:
            train_c, validation_c, test_c = train, validation, test
        emit_table(f"train_imputed.{fmt}", train_c)
        emit_table(f"validation_imputed.{fmt}", validation_c)
        emit_table(f"test_imputed.{fmt}", test_c)

        # ---- EDA -------------------------------------------------------------
        current_stage = "eda"
        t0 = time.perf_counter()
        emit_text("eda_descriptive.txt", describe_table(train_c))
        corr_names, corr = correlation_matrix(train_c)
        emit_text("eda_correlation.csv", _correlation_csv(corr_names, corr))
        manifest.stages.append({"name": "eda", "rows": train_c.n_rows, "columns": len(corr_names)})
        stage_seconds["eda"] = time.perf_counter() - t0

        # ---- feature selection -----------------------------------------------
        current_stage = "select"
        t0 = time.perf_counter()
        selection = select_features(
            train_c, alpha=cfg.selection.alpha,
            whitelist=cfg.selection.whitelist, k=cfg.selection.k,
        )
        if not selection.selected:
            raise ComputationError("feature selection kept no features")
        emit_text("feature_selection.csv", _selection_csv(selection))
        manifest.stages.append({
            "name": "select", "candidates": len(selection.ranked),
            "selected": len(selection.selected),
        })
        stage_seconds["select"] = time.perf_counter() - t0

        # ---- train (+ optional tuning) ----------------------------------------
        current_stage = "train"
        t0 = time.perf_counter()
        features = selection.selected
        X_train, design_names = design_matrix(train_c, features)
        X_val, _ = design_matrix(validation_c, features)
        X_test, _ = design_matrix(test_c, features)
        y_train = train_c.labels()
        y_val = validation_c.labels()
        y_test = test_c.labels()
        train_digest = digest_dataset(train_c)
        val_digest = digest_dataset(validation_c)
        manifest.stage_inputs["model_fit"] = [train_digest]

        models: dict[str, object] = {}
        if cfg.model.kind in ("glm", "both"):
            if cfg.model.tune.enabled and cfg.model.tune.glm_ridge:
                manifest.stage_inputs.setdefault("tune", [train_digest, val_digest])
                result = tune(X_train, y_train, X_val, y_val,
                              list(cfg.model.tune.glm_ridge), cfg.model.tune.metric,
                              feature_names=design_names)
                emit_text("tune_glm.json", json.dumps(
                    {"grid": [{"ridge": c, "metric": m} for c, m in result.grid],
                     "best": {"ridge": result.best_config, "metric": result.best_metric}},
                    indent=2) + "\n")
                models["glm"] = result.best_model
            else:
                models["glm"] = glm_fit(
                    X_train, y_train, feature_names=design_names,
                    ridge=cfg.model.glm_ridge, tol=cfg.model.glm_tol,
                    max_iter=cfg.model.glm_max_iter,
                )
        if cfg.model.kind in ("gbt", "both"):
            if cfg.model.tune.enabled and cfg.model.tune.gbt_max_depth:
                manifest.stage_inputs.setdefault("tune", [train_digest, val_digest])
                grid = [dataclasses.replace(cfg.model.gbt, max_depth=d)
                        for d in cfg.model.tune.gbt_max_depth]
                result = tune(X_train, y_train, X_val, y_val, grid,
                              cfg.model.tune.metric, feature_names=design_names)
                emit_text("tune_gbt.json", json.dumps(
                    {"grid": [{"max_depth": c.max_depth, "metric": m} for c, m in result.grid],
                     "best": {"max_depth": result.best_config.max_depth,
                              "metric": result.best_metric}},
                    indent=2) + "\n")
                models["gbt"] = result.best_model
            else:
                models["gbt"] = gbt_fit(X_train, y_train, cfg.model.gbt, feature_names=design_names)
        for kind, model in models.items():
            path = out / f"model_{kind}.json"
            save_model(model, path)
            manifest.outputs[path.name] = digest_file(path)
        manifest.stages.append({"name": "train", "models": sorted(models)})
        stage_seconds["train"] = time.perf_counter() - t0

        # ---- evaluate -----------------------------------------------------------
        current_stage = "evaluate"
        t0 = time.perf_counter()
        manifest.stage_inputs["evaluate"] = [digest_dataset(test_c)]
        accuracies = {}
        for kind, model in models.items():
            probs = np.asarray(model.predict_proba(X_test))
            preds = (probs >= 0.5).astype(int)
            rep = report(confusion(y_test, preds, positive_label="1"))
            accuracies[kind] = rep.accuracy
            emit_text(f"evaluation_{kind}.txt", render_report(rep))
            emit_text(f"evaluation_{kind}.json", json.dumps(report_to_dict(rep), indent=2) + "\n")
        manifest.stages.append({"name": "evaluate", "rows": test_c.n_rows, "accuracy": accuracies})
        stage_seconds["evaluate"] = time.perf_counter() - t0

        # ---- explain -------------------------------------------------------------
        current_stage = "explain"
        t0 = time.perf_counter()
        disc = fit_discretizer(train_c, features)
        case_rows = _pick_cases(test_c.n_rows, cfg.explain, case_seed)
        raw_case_matrix, _ = design_matrix_raw(test_c, features)
        k_eff = cfg.lime.k_features
        if k_eff is not None:
            k_eff = min(k_eff, len(features))
        for kind, model in models.items():
            predictor = raw_predictor(model, train_c, features)
            explanations = []
            for i, row_idx in enumerate(case_rows):
                lime_cfg = dataclasses.replace(cfg.lime, seed=lime_seed + i, k_features=k_eff)
                explanations.append(explain_instance(
                    predictor, raw_case_matrix[row_idx], disc, lime_cfg,
                    case_id=str(row_idx), label=cfg.label_column,
                ))
            emit_text(f"explanations_{kind}.csv", explanations_to_delimited(explanations))
            emit_text(f"explanations_{kind}.txt",
                      "\n".join(explanation_to_text(e) for e in explanations))
        manifest.stages.append({"name": "explain", "cases": [str(i) for i in case_rows]})
        stage_seconds["explain"] = time.perf_counter() - t0

        # ---- leakage cross-check ---------------------------------------------------
        test_digest = digest_dataset(test_c)
        fit_digests = (manifest.stage_inputs.get("mice_fit", [])
                       + manifest.stage_inputs.get("tune", [])
                       + manifest.stage_inputs.get("model_fit", []))
        manifest.leakage_check = {
            "test_digest": test_digest,
            "fit_stage_digests": fit_digests,
            "whole_table_imputation": cfg.impute_before_split,
            "passed": test_digest not in fit_digests,
        }
    except Exception as exc:
        manifest.status = "failed"
        manifest.failed_stage = current_stage
        manifest.error = str(exc)
        manifest.timings = {"total_seconds": time.perf_counter() - t_start, "stages": stage_seconds}
        manifest.leakage_check.setdefault("passed", False)
        (out / "manifest.json").write_text(
            json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8")
        if isinstance(exc, (ValidationError, ComputationError)):
            raise type(exc)(f"stage '{current_stage}': {exc}") from exc
        raise ComputationError(f"stage '{current_stage}': {exc}") from exc

    manifest.timings = {"total_seconds": time.perf_counter() - t_start, "stages": stage_seconds}
    (out / "manifest.json").write_text(
        json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8")
    return manifest


def design_matrix_raw(ds: Dataset, features: list[str]) -> tuple[np.ndarray, list[str]]:
    """Raw (pre-one-hot) feature matrix: numeric values and categorical codes."""
    cols = []
    for name in features:
        meta, values, mask = ds.column(name)
        col = values.astype(float).copy()
        col[mask] = np.nan
        cols.append(col)
    return np.column_stack(cols) if cols else np.zeros((ds.n_rows, 0)), list(features)
