"""Local surrogate explanations for tabular predictors.

One explanation perturbs a single case, queries the black-box probability on
the perturbed rows, weights rows by an exponential locality kernel on the
binary "same bin as the case" representation, and fits a k-feature weighted
ridge surrogate (feature subset chosen by forward selection on weighted
residual reduction). Only predict_proba is ever consulted, so the procedure
is identical for the GLM, the boosted trees, or any wrapper around them.

Numeric features are discretized at the training quartiles; a perturbed raw
value is drawn uniformly inside the drawn bin's training range. Categorical
features are resampled from their training frequencies.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .dataset import ColumnKind, Dataset
from .errors import ValidationError
from .stats import quantile

#: Column order of the serialized explanation table.
EXPLANATION_COLUMNS = (
    "model_type",
    "case",
    "label",
    "label_prob",
    "model_r2",
    "model_intercept",
    "model_prediction",
    "feature",
    "feature_value",
    "feature_weight",
    "feature_desc",
    "data",
    "prediction",
)


@dataclass(frozen=True)
class LimeConfig:
    n_samples: int = 5000
    kernel_width: float | None = None  # None -> 0.75 * sqrt(feature count)
    k_features: int | None = 10  # None -> keep every feature in the surrogate
    surrogate_ridge: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 10:
            raise ValidationError("lime.n_samples must be >= 10")
        if self.kernel_width is not None and not self.kernel_width > 0:
            raise ValidationError("lime.kernel_width must be > 0")
        if self.k_features is not None and self.k_features < 1:
            raise ValidationError("lime.k_features must be >= 1")
        if self.surrogate_ridge < 0:
            raise ValidationError("lime.surrogate_ridge must be >= 0")


@dataclass(frozen=True)
class NumericBins:
    cuts: tuple[float, float, float]  # (q1, median, q3)
    lo: float
    hi: float

    def bin_of(self, value: float) -> int:
        q1, med, q3 = self.cuts
        if value <= q1:
            return 0
        if value <= med:
            return 1
        if value <= q3:
            return 2
        return 3

    def edges(self) -> tuple[float, ...]:
        return (self.lo, *self.cuts, self.hi)


@dataclass(frozen=True)
class CategoricalBins:
    codes: tuple[int, ...]
    frequencies: tuple[float, ...]
    dictionary: tuple[str, ...]


@dataclass(frozen=True)
class PassThrough:
    """Fallback for degenerate numeric columns (fewer than 4 distinct values)."""
    value_hint: float = 0.0


@dataclass(frozen=True)
class Discretizer:
    feature_names: tuple[str, ...]
    per_feature: tuple[NumericBins | CategoricalBins | PassThrough, ...]

    def describe(self, j: int, value: float) -> str:
        name = self.feature_names[j]
        spec = self.per_feature[j]
        if isinstance(spec, NumericBins):
            q1, med, q3 = spec.cuts
            b = spec.bin_of(value)
            if b == 0:
                return f"{name} <= {q1:.2f}"
            if b == 1:
                return f"{q1:.2f} < {name} <= {med:.2f}"
            if b == 2:
                return f"{med:.2f} < {name} <= {q3:.2f}"
            return f"{name} > {q3:.2f}"
        if isinstance(spec, CategoricalBins):
            return f"{name} = {spec.dictionary[int(value)]}"
        return f"{name} = {value:.2f}"


def fit_discretizer(train: Dataset, features=None) -> Discretizer:
    """Quartile cut points (same interpolation as stats.describe) per numeric
    feature; categorical features keep their training code frequencies."""
    names = tuple(features) if features is not None else train.feature_names
    specs: list[NumericBins | CategoricalBins | PassThrough] = []
    for name in names:
        meta, values, mask = train.column(name)
        observed = values[~mask]
        if meta.kind == ColumnKind.CATEGORICAL:
            codes, counts = np.unique(observed, return_counts=True)
            freq = counts / counts.sum()
            specs.append(CategoricalBins(
                codes=tuple(int(c) for c in codes),
                frequencies=tuple(float(f) for f in freq),
                dictionary=meta.dictionary,
            ))
            continue
        distinct = np.unique(observed)
        if distinct.size < 4:
            hint = float(observed[0]) if observed.size else 0.0
            specs.append(PassThrough(value_hint=hint))
            continue
        v = np.sort(observed.astype(float))
        specs.append(NumericBins(
            cuts=(quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75)),
            lo=float(v[0]),
            hi=float(v[-1]),
        ))
    return Discretizer(feature_names=names, per_feature=tuple(specs))


def sample_perturbations(
    case: np.ndarray, disc: Discretizer, n: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Draw n perturbed rows around the case.

    Returns (interpretable, raw): interpretable[i, j] is 1 when sample i fell
    in the case's bin for feature j, raw holds the reconstructed feature
    values. Row 0 is the unperturbed case (all-ones interpretable vector).
    """
    if n < 10:
        raise ValidationError("sample_perturbations: n must be >= 10")
    case = np.asarray(case, dtype=float)
    d = len(disc.feature_names)
    if case.shape != (d,):
        raise ValidationError("sample_perturbations: case length does not match the discretizer")
    if np.isnan(case).any():
        raise ValidationError("sample_perturbations: case has missing cells")
    rng = np.random.default_rng(seed)
    interpretable = np.ones((n, d))
    raw = np.empty((n, d))
    raw[0] = case
    m = n - 1
    for j, spec in enumerate(disc.per_feature):
        if isinstance(spec, NumericBins):
            case_bin = spec.bin_of(case[j])
            bins = rng.integers(0, 4, size=m)
            edges = spec.edges()
            lo = np.array([edges[b] for b in bins])
            hi = np.array([edges[b + 1] for b in bins])
            raw[1:, j] = lo + rng.random(m) * (hi - lo)
            interpretable[1:, j] = (bins == case_bin).astype(float)
        elif isinstance(spec, CategoricalBins):
            drawn = rng.choice(np.array(spec.codes), size=m, p=np.array(spec.frequencies))
            raw[1:, j] = drawn.astype(float)
            interpretable[1:, j] = (drawn.astype(float) == case[j]).astype(float)
        else:
            raw[1:, j] = case[j]
    return interpretable, raw


def kernel_weight(distance: float, width: float) -> float:
    """Exponential locality kernel exp(-distance^2 / width^2)."""
    if distance < 0:
        raise ValidationError("kernel_weight: distance must be >= 0")
    if not width > 0:
        raise ValidationError("kernel_weight: width must be > 0")
    return math.exp(-(distance * distance) / (width * width))


@dataclass(frozen=True)
class SurrogateFit:
    selected: tuple[int, ...]
    coefficients: np.ndarray
    intercept: float
    r2: float  # weighted R^2, unclamped


def _weighted_gram(Z: np.ndarray, y: np.ndarray, w: np.ndarray):
    A = np.column_stack([np.ones(len(y)), Z])
    Aw = A * w[:, None]
    return Aw.T @ A, Aw.T @ y, float(w @ (y * y))


def _solve_subset(gram, rhs, yy, cols: list[int], ridge: float):
    """Weighted ridge solve restricted to the intercept plus `cols`; returns
    (beta, weighted RSS)."""
    idx = np.array([0] + [c + 1 for c in cols])
    sub = gram[np.ix_(idx, idx)].copy()
    sub[1:, 1:] += ridge * np.eye(len(cols))
    beta = np.linalg.solve(sub, rhs[idx])
    rss = yy - 2.0 * float(beta @ rhs[idx]) + float(beta @ (gram[np.ix_(idx, idx)] @ beta))
    return beta, max(rss, 0.0)


def fit_surrogate(
    Z: np.ndarray, probs: np.ndarray, weights: np.ndarray, k: int, ridge: float
) -> SurrogateFit:
    """Forward-select k interpretable features, then weighted ridge on them.

    Weights are normalized to mean 1 first, so rescaling all of them changes
    nothing. The weighted R^2 is taken against the weighted mean and defined
    as 0 when the black box is constant.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(probs, dtype=float)
    w = np.asarray(weights, dtype=float)
    if Z.ndim != 2 or len(y) != Z.shape[0] or len(w) != Z.shape[0]:
        raise ValidationError("fit_surrogate: matrix, probabilities, and weights are misaligned")
    if (w < 0).any() or w.sum() <= 0:
        raise ValidationError("fit_surrogate: weights must be >= 0 and not all zero")
    d = Z.shape[1]
    if not 1 <= k <= d:
        raise ValidationError(f"fit_surrogate: k must lie in [1, {d}]")
    w = w * (len(w) / w.sum())
    gram, rhs, yy = _weighted_gram(Z, y, w)

    selected: list[int] = []
    remaining = list(range(d))
    for _ in range(k):
        best_col = None
        best_rss = None
        for c in remaining:
            _, rss = _solve_subset(gram, rhs, yy, selected + [c], ridge)
            if best_rss is None or rss < best_rss - 1e-15:
                best_col, best_rss = c, rss
        selected.append(best_col)
        remaining.remove(best_col)

    beta, rss = _solve_subset(gram, rhs, yy, selected, ridge)
    w_mean = float(rhs[0] / gram[0, 0])  # weighted mean of y
    tss = yy - gram[0, 0] * w_mean * w_mean
    r2 = 0.0 if tss <= 1e-12 else 1.0 - rss / tss
    return SurrogateFit(
        selected=tuple(selected),
        coefficients=beta[1:].copy(),
        intercept=float(beta[0]),
        r2=float(r2),
    )


@dataclass(frozen=True)
class ExplanationRow:
    feature: str
    feature_value: float
    feature_weight: float
    feature_desc: str


@dataclass(frozen=True)
class Explanation:
    model_type: str
    case_id: str
    label: str
    label_prob: float
    model_r2: float  # clamped into [0, 1] for reporting
    model_r2_raw: float
    model_intercept: float
    model_prediction: float
    rows: tuple[ExplanationRow, ...]
    data: tuple[float, ...]
    prediction: int


def _predict_many(predictor, X: np.ndarray) -> np.ndarray:
    """Query the black box; fall back to per-row calls for predictors that
    only implement the single-row contract."""
    try:
        out = np.asarray(predictor.predict_proba(X), dtype=float)
        if out.shape == (X.shape[0],):
            return out
    except Exception:
        pass
    return np.array([float(predictor.predict_proba(row)) for row in X])


def explain_instance(
    predictor,
    case: np.ndarray,
    disc: Discretizer,
    cfg: LimeConfig = LimeConfig(),
    case_id: str = "0",
    label: str = "1",
) -> Explanation:
    """Fit a local surrogate around one case and package the explanation.

    Rows are sorted by descending absolute weight; each carries the case's
    bin description for its feature. The surrogate prediction is its value at
    the all-ones interpretable vector (the case itself).
    """
    case = np.asarray(case, dtype=float)
    d = len(disc.feature_names)
    if tuple(predictor.feature_names) != tuple(disc.feature_names):
        raise ValidationError("explain_instance: predictor and discretizer feature names differ")
    k = d if cfg.k_features is None else cfg.k_features
    if k > d:
        raise ValidationError(f"lime.k_features={k} exceeds the {d} available features")
    width = cfg.kernel_width if cfg.kernel_width is not None else 0.75 * math.sqrt(d)
    Z, raw = sample_perturbations(case, disc, cfg.n_samples, cfg.seed)
    probs = _predict_many(predictor, raw)
    distance_sq = np.sum((Z - 1.0) ** 2, axis=1)
    weights = np.exp(-distance_sq / (width * width))
    fit = fit_surrogate(Z, probs, weights, k, cfg.surrogate_ridge)
    order = sorted(
        range(len(fit.selected)),
        key=lambda i: (-abs(float(fit.coefficients[i])), fit.selected[i]),
    )
    rows = tuple(
        ExplanationRow(
            feature=disc.feature_names[fit.selected[i]],
            feature_value=float(case[fit.selected[i]]),
            feature_weight=float(fit.coefficients[i]),
            feature_desc=disc.describe(fit.selected[i], float(case[fit.selected[i]])),
        )
        for i in order
    )
    label_prob = float(probs[0])
    surrogate_at_case = fit.intercept + float(np.sum(fit.coefficients))
    return Explanation(
        model_type=type(predictor).__name__,
        case_id=str(case_id),
        label=label,
        label_prob=label_prob,
        model_r2=min(max(fit.r2, 0.0), 1.0),
        model_r2_raw=fit.r2,
        model_intercept=fit.intercept,
        model_prediction=surrogate_at_case,
        rows=rows,
        data=tuple(float(v) for v in case),
        prediction=int(label_prob >= 0.5),
    )


def explanations_to_delimited(explanations) -> str:
    """Serialize explanations as CSV with the 13 canonical columns, one line
    per (case, feature) pair."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(EXPLANATION_COLUMNS)
    for e in explanations:
        data_repr = "[" + " ".join(repr(v) for v in e.data) + "]"
        for row in e.rows:
            writer.writerow([
                e.model_type,
                e.case_id,
                e.label,
                repr(e.label_prob),
                repr(e.model_r2),
                repr(e.model_intercept),
                repr(e.model_prediction),
                row.feature,
                repr(row.feature_value),
                repr(row.feature_weight),
                row.feature_desc,
                data_repr,
                e.prediction,
            ])
    return buf.getvalue()


def explanation_to_text(e: Explanation) -> str:
    """Human-readable block: descriptions and weights by descending |weight|."""
    lines = [
        f"case {e.case_id} ({e.model_type}): P[{e.label}] = {e.label_prob:.4f} "
        f"-> prediction {e.prediction}",
        f"surrogate: R2 = {e.model_r2:.4f}, intercept = {e.model_intercept:.4f}, "
        f"prediction = {e.model_prediction:.4f}",
    ]
    for row in e.rows:
        lines.append(f"  {row.feature_desc:<40} -> {row.feature_weight:+.6f}")
    return "\n".join(lines) + "\n"
