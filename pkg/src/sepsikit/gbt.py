"""Gradient-boosted binary trees with second-order (gradient + hessian) fitting.

Each round fits one regression tree to the logistic loss's per-row gradient
g = p - y and hessian h = p(1 - p) at the current predictions. Splits are
found by exact greedy scan over midpoints between consecutive distinct
feature values, scored with the regularized quadratic gain

    gain = 1/2 [ G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda)
               - (G_L+G_R)^2/(H_L+H_R+lambda) ] - gamma

and leaves take the closed-form optimum w = -G/(H + lambda). There is no
histogram approximation and no row/column subsampling, so fitting is fully
deterministic for a given dataset and configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .mathutil import clamp_probability, log_loss, logit, sigmoid


@dataclass(frozen=True)
class GbtConfig:
    n_trees: int = 200
    learning_rate: float = 0.1
    max_depth: int = 4
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValidationError("gbt.n_trees must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValidationError("gbt.learning_rate must lie in (0, 1]")
        if self.max_depth < 1:
            raise ValidationError("gbt.max_depth must be >= 1")
        if self.reg_lambda < 0 or self.gamma < 0:
            raise ValidationError("gbt.reg_lambda and gbt.gamma must be >= 0")


@dataclass(frozen=True)
class TreeNode:
    """Internal node (feature >= 0) or leaf (feature == -1 with a weight)."""
    feature: int = -1
    threshold: float = 0.0
    weight: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())


def leaf_weight(grad_sum: float, hess_sum: float, reg_lambda: float) -> float:
    """Closed-form leaf optimum -G/(H + lambda)."""
    denom = hess_sum + reg_lambda
    if denom <= 0:
        raise ValidationError("leaf_weight: hessian sum plus lambda must be > 0")
    return -grad_sum / denom


def best_split(
    values: np.ndarray,
    grads: np.ndarray,
    hess: np.ndarray,
    reg_lambda: float,
    gamma: float,
    min_child_weight: float,
) -> tuple[float, float] | None:
    """Best (threshold, gain) on one feature, or None when no split helps.

    `values` must be sorted ascending with grads/hess aligned. Candidate
    thresholds are midpoints between consecutive distinct values; a split is
    admissible when its gain is strictly positive and both children carry at
    least min_child_weight of hessian mass. Ties keep the lowest threshold.
    """
    n = len(values)
    if n < 2:
        return None
    g_total = float(grads.sum())
    h_total = float(hess.sum())
    parent = g_total * g_total / (h_total + reg_lambda)
    g_prefix = np.cumsum(grads)
    h_prefix = np.cumsum(hess)
    best: tuple[float, float] | None = None
    for i in range(n - 1):
        if values[i] == values[i + 1]:
            continue
        mid = 0.5 * (values[i] + values[i + 1])
        if not values[i] < mid <= values[i + 1]:
            continue  # midpoint rounded onto a data value; cannot separate
        gl, hl = float(g_prefix[i]), float(h_prefix[i])
        gr, hr = g_total - gl, h_total - hl
        if hl < min_child_weight or hr < min_child_weight:
            continue
        gain = 0.5 * (gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda) - parent) - gamma
        if gain > 0.0 and (best is None or gain > best[1]):
            best = (mid, gain)
    return best


def _grow(
    X: np.ndarray,
    grads: np.ndarray,
    hess: np.ndarray,
    indices: np.ndarray,
    depth: int,
    cfg: GbtConfig,
) -> TreeNode:
    g_sum = float(grads[indices].sum())
    h_sum = float(hess[indices].sum())
    if depth >= cfg.max_depth or len(indices) < 2:
        return TreeNode(weight=leaf_weight(g_sum, h_sum, cfg.reg_lambda))
    chosen: tuple[int, float, float] | None = None  # (feature, threshold, gain)
    for j in range(X.shape[1]):
        order = np.argsort(X[indices, j], kind="stable")
        sub = indices[order]
        found = best_split(
            X[sub, j], grads[sub], hess[sub],
            cfg.reg_lambda, cfg.gamma, cfg.min_child_weight,
        )
        if found is not None and (chosen is None or found[1] > chosen[2]):
            chosen = (j, found[0], found[1])
    if chosen is None:
        return TreeNode(weight=leaf_weight(g_sum, h_sum, cfg.reg_lambda))
    j, threshold, _ = chosen
    left_mask = X[indices, j] < threshold
    left = _grow(X, grads, hess, indices[left_mask], depth + 1, cfg)
    right = _grow(X, grads, hess, indices[~left_mask], depth + 1, cfg)
    return TreeNode(feature=j, threshold=threshold, left=left, right=right)


def _tree_raw(node: TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])
    stack = [(node, np.arange(X.shape[0]))]
    while stack:
        current, idx = stack.pop()
        if current.is_leaf:
            out[idx] = current.weight
            continue
        go_left = X[idx, current.feature] < current.threshold
        stack.append((current.left, idx[go_left]))
        stack.append((current.right, idx[~go_left]))
    return out


@dataclass(frozen=True)
class GbtModel:
    feature_names: tuple[str, ...]
    base_score: float
    trees: tuple[TreeNode, ...]
    config: GbtConfig
    train_log_loss: tuple[float, ...] = field(default=())

    def raw_scores(self, X: np.ndarray) -> np.ndarray:
        raw = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            raw += self.config.learning_rate * _tree_raw(tree, X)
        return raw

    def predict_proba(self, rows) -> np.ndarray | float:
        """Positive-class probability; rejects rows with missing cells."""
        rows = np.asarray(rows, dtype=float)
        single = rows.ndim == 1
        X = rows[None, :] if single else rows
        if X.shape[1] != len(self.feature_names):
            raise ValidationError(
                f"expected {len(self.feature_names)} features, got {X.shape[1]}"
            )
        if np.isnan(X).any():
            raise ValidationError("missing cell in row: impute before predict")
        p = clamp_probability(sigmoid(self.raw_scores(X)))
        return float(p[0]) if single else p


def gbt_fit(X: np.ndarray, y: np.ndarray, cfg: GbtConfig = GbtConfig(), feature_names=None) -> GbtModel:
    """Boost cfg.n_trees trees against the logistic loss.

    The base score is the log-odds of the training positive rate, clamped to
    [-10, 10]; the per-round training log-loss is recorded on the model.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValidationError("gbt_fit: X and y row counts differ")
    if X.shape[0] < 2:
        raise ValidationError("gbt_fit: need at least 2 rows")
    if np.isnan(X).any():
        raise ValidationError("gbt_fit: X contains missing cells; impute first")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValidationError("gbt_fit: labels must be 0/1")
    mean_y = float(y.mean())
    if mean_y in (0.0, 1.0):
        raise ValidationError("gbt_fit: both classes must be present")
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{i}" for i in range(X.shape[1]))
    if len(names) != X.shape[1]:
        raise ValidationError("gbt_fit: feature_names length mismatch")

    base = float(np.clip(logit(mean_y), -10.0, 10.0))
    raw = np.full(X.shape[0], base)
    all_rows = np.arange(X.shape[0])
    trees: list[TreeNode] = []
    losses: list[float] = []
    for _ in range(cfg.n_trees):
        p = sigmoid(raw)
        grads = p - y
        hess = p * (1.0 - p)
        tree = _grow(X, grads, hess, all_rows, 0, cfg)
        trees.append(tree)
        raw = raw + cfg.learning_rate * _tree_raw(tree, X)
        losses.append(log_loss(y, sigmoid(raw)))
    return GbtModel(
        feature_names=names,
        base_score=base,
        trees=tuple(trees),
        config=cfg,
        train_log_loss=tuple(losses),
    )
