"""Common predictor contract, model serialization, and validation-set tuning.

Both classifiers satisfy the same duck-typed contract: a `feature_names`
tuple plus `predict_proba(rows)` returning the positive-class probability for
a single feature row or a matrix of rows. Serialization is a versioned JSON
format; floats round-trip bit-exactly because Python's json writer emits
shortest-round-trip representations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import ValidationError
from .gbt import GbtConfig, GbtModel, TreeNode, gbt_fit
from .glm import GlmModel, glm_fit
from .mathutil import log_loss

FORMAT_NAME = "sepsikit-model"
FORMAT_VERSION = 1


@runtime_checkable
class Predictor(Protocol):
    feature_names: tuple[str, ...]

    def predict_proba(self, rows): ...


# -- serialization -------------------------------------------------------------


def _tree_payload(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"leaf": node.weight}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _tree_payload(node.left),
        "right": _tree_payload(node.right),
    }


def _tree_from_payload(payload: dict) -> TreeNode:
    if "leaf" in payload:
        return TreeNode(weight=float(payload["leaf"]))
    return TreeNode(
        feature=int(payload["feature"]),
        threshold=float(payload["threshold"]),
        left=_tree_from_payload(payload["left"]),
        right=_tree_from_payload(payload["right"]),
    )


def model_to_payload(model) -> dict:
    if isinstance(model, GlmModel):
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "kind": "glm",
            "feature_names": list(model.feature_names),
            "coefficients": [float(c) for c in model.coefficients],
            "intercept": model.intercept,
            "converged": model.converged,
            "iterations": model.iterations,
            "ridge": model.ridge,
        }
    if isinstance(model, GbtModel):
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "kind": "gbt",
            "feature_names": list(model.feature_names),
            "base_score": model.base_score,
            "config": {
                "n_trees": model.config.n_trees,
                "learning_rate": model.config.learning_rate,
                "max_depth": model.config.max_depth,
                "reg_lambda": model.config.reg_lambda,
                "gamma": model.config.gamma,
                "min_child_weight": model.config.min_child_weight,
                "seed": model.config.seed,
            },
            "trees": [_tree_payload(t) for t in model.trees],
            "train_log_loss": list(model.train_log_loss),
        }
    raise ValidationError(f"cannot serialize model of type {type(model).__name__}")


def model_from_payload(payload: dict):
    if payload.get("format") != FORMAT_NAME:
        raise ValidationError("not a sepsikit model payload")
    if payload.get("version") != FORMAT_VERSION:
        raise ValidationError(f"unsupported model format version {payload.get('version')}")
    kind = payload.get("kind")
    if kind == "glm":
        return GlmModel(
            feature_names=tuple(payload["feature_names"]),
            coefficients=np.asarray(payload["coefficients"], dtype=float),
            intercept=float(payload["intercept"]),
            converged=bool(payload["converged"]),
            iterations=int(payload["iterations"]),
            ridge=float(payload["ridge"]),
        )
    if kind == "gbt":
        return GbtModel(
            feature_names=tuple(payload["feature_names"]),
            base_score=float(payload["base_score"]),
            trees=tuple(_tree_from_payload(t) for t in payload["trees"]),
            config=GbtConfig(**payload["config"]),
            train_log_loss=tuple(float(v) for v in payload["train_log_loss"]),
        )
    raise ValidationError(f"unknown model kind '{kind}'")


def dumps_model(model) -> str:
    return json.dumps(model_to_payload(model), indent=2)


def loads_model(text: str):
    return model_from_payload(json.loads(text))


def save_model(model, path: str | Path) -> None:
    Path(path).write_text(dumps_model(model) + "\n", encoding="utf-8")


def load_model(path: str | Path):
    return loads_model(Path(path).read_text(encoding="utf-8"))


def describe_model(model) -> str:
    """Human-readable dump: GLM coefficients or per-tree structure."""
    if isinstance(model, GlmModel):
        lines = [
            f"glm: intercept={model.intercept:.6g} ridge={model.ridge:g} "
            f"iterations={model.iterations} converged={model.converged}",
        ]
        for name, coef in zip(model.feature_names, model.coefficients):
            lines.append(f"  {name:<28} {coef:+.6g}")
        return "\n".join(lines) + "\n"
    if isinstance(model, GbtModel):
        lines = [
            f"gbt: base_score={model.base_score:.6g} trees={len(model.trees)} "
            f"depth<={model.config.max_depth} eta={model.config.learning_rate:g}",
        ]

        def walk(node: TreeNode, indent: int):
            pad = "  " * indent
            if node.is_leaf:
                lines.append(f"{pad}leaf weight={node.weight:+.6g}")
            else:
                lines.append(f"{pad}[{model.feature_names[node.feature]} < {node.threshold:.6g}]")
                walk(node.left, indent + 1)
                walk(node.right, indent + 1)

        for i, tree in enumerate(model.trees):
            lines.append(f"tree {i}:")
            walk(tree, 1)
        return "\n".join(lines) + "\n"
    raise ValidationError(f"cannot describe model of type {type(model).__name__}")


# -- tuning --------------------------------------------------------------------


@dataclass(frozen=True)
class TuneResult:
    grid: list[tuple[object, float]]
    best_config: object
    best_metric: float
    best_model: object


def _fit_grid_entry(entry, X: np.ndarray, y: np.ndarray, feature_names):
    if isinstance(entry, GbtConfig):
        return gbt_fit(X, y, entry, feature_names=feature_names)
    if isinstance(entry, (int, float)) and not isinstance(entry, bool):
        return glm_fit(X, y, feature_names=feature_names, ridge=float(entry))
    raise ValidationError(f"unsupported grid entry {entry!r} (expected GbtConfig or GLM ridge value)")


def score_predictions(y: np.ndarray, p: np.ndarray, metric: str) -> float:
    if metric == "log_loss":
        return log_loss(y, p)
    if metric == "accuracy":
        pred = (np.asarray(p) >= 0.5).astype(int)
        return float(np.mean(pred == np.asarray(y).astype(int)))
    raise ValidationError(f"unknown metric '{metric}'")


def tune(
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_val: np.ndarray,
    y_val: np.ndarray,
    grid,
    metric: str = "log_loss",
    feature_names=None,
) -> TuneResult:
    """Fit every grid entry on train and keep the best validation score.

    Lower is better for log_loss, higher for accuracy; ties keep the earliest
    grid entry. Test data has no business here.
    """
    grid = list(grid)
    if not grid:
        raise ValidationError("tune: empty grid")
    if len(np.asarray(y_val)) == 0:
        raise ValidationError("tune: empty validation set")
    minimize = metric == "log_loss"
    results: list[tuple[object, float]] = []
    best_idx = -1
    best_metric = None
    best_model = None
    for i, entry in enumerate(grid):
        model = _fit_grid_entry(entry, X_train, y_train, feature_names)
        score = score_predictions(y_val, model.predict_proba(X_val), metric)
        results.append((entry, score))
        better = (
            best_metric is None
            or (minimize and score < best_metric)
            or (not minimize and score > best_metric)
        )
        if better:
            best_idx, best_metric, best_model = i, score, model
    return TuneResult(
        grid=results,
        best_config=grid[best_idx],
        best_metric=float(best_metric),
        best_model=best_model,
    )
