"""Descriptive statistics, correlation, significance tests, and feature ranking.

Numeric features are compared across label groups with Welch's t-test (safe
under the unequal variances typical of lab values); categorical features use
the Pearson chi-squared test with Yates continuity correction on 2x2 tables.
P-values come from the tail functions in `tails`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dataset import ColumnKind, Dataset
from .errors import ValidationError
from . import tails

#: Clinical variables retained on domain grounds regardless of p-value.
CLINICAL_WHITELIST = (
    "age",
    "heart_rate",
    "respiratory_rate",
    "blood_pressure",
    "temperature",
    "white_blood_cell_count",
    "lactate",
    "creatinine",
    "platelet_count",
    "glucose",
    "oxygen_saturation",
    "comorbidities",
    "prior_antibiotics",
)


class TestKind(Enum):
    CHI_SQUARED = "chi_squared"
    WELCH_T = "welch_t"
    ANOVA_F = "anova_f"
    PEARSON = "pearson"


@dataclass(frozen=True)
class TestResult:
    statistic: float
    degrees_of_freedom: float | tuple[float, float]
    p_value: float
    test_kind: TestKind
    degenerate: bool = False
    low_expected: bool = False


@dataclass(frozen=True)
class DescriptiveStats:
    n: int
    mean: float
    sd: float
    min: float
    q1: float
    median: float
    q3: float
    max: float


@dataclass(frozen=True)
class FeatureSelection:
    ranked: list[tuple[str, TestKind, float]]
    selected: list[str]
    whitelist_applied: bool


def _observed(values, mask=None) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if mask is not None:
        values = values[~np.asarray(mask, dtype=bool)]
    return values


def quantile(sorted_values: np.ndarray, q: float) -> float:
    """Linear interpolation between order statistics (position (n-1)*q)."""
    n = len(sorted_values)
    pos = (n - 1) * q
    lo = int(math.floor(pos))
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    return float(sorted_values[lo] * (1.0 - frac) + sorted_values[hi] * frac)


def describe(values, mask=None) -> DescriptiveStats:
    """Summary statistics of the observed cells; sd uses the n-1 denominator
    (0 by convention for a singleton)."""
    v = _observed(values, mask)
    if v.size == 0:
        raise ValidationError("describe: zero observed values")
    v = np.sort(v)
    sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return DescriptiveStats(
        n=int(v.size),
        mean=float(v.mean()),
        sd=sd,
        min=float(v[0]),
        q1=quantile(v, 0.25),
        median=quantile(v, 0.5),
        q3=quantile(v, 0.75),
        max=float(v[-1]),
    )


def pearson_correlation(x, y, mask_x=None, mask_y=None) -> TestResult:
    """Pearson r with pairwise deletion; two-sided p from the t transform."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValidationError("pearson_correlation: length mismatch")
    keep = np.ones(x.shape, dtype=bool)
    if mask_x is not None:
        keep &= ~np.asarray(mask_x, dtype=bool)
    if mask_y is not None:
        keep &= ~np.asarray(mask_y, dtype=bool)
    x, y = x[keep], y[keep]
    n = x.size
    if n < 3:
        raise ValidationError("pearson_correlation: need at least 3 paired observations")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        raise ValidationError("constant column")
    r = float(xc @ yc) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return TestResult(statistic=r, degrees_of_freedom=float(n - 2), p_value=0.0,
                          test_kind=TestKind.PEARSON)
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    p = tails.student_t_two_sided(t, n - 2)
    return TestResult(statistic=r, degrees_of_freedom=float(n - 2), p_value=p,
                      test_kind=TestKind.PEARSON)


def correlation_matrix(ds: Dataset, columns=None) -> tuple[list[str], np.ndarray]:
    """Symmetric pairwise-deletion correlation matrix over numeric columns.

    Constant columns get NaN over their whole row and column (an explicit
    "undefined" marker rather than a misleading 0).
    """
    names = list(columns) if columns is not None else [
        c.name for c in ds.columns if c.kind == ColumnKind.NUMERIC
    ]
    data = []
    masks = []
    for name in names:
        meta, values, mask = ds.column(name)
        if meta.kind != ColumnKind.NUMERIC:
            raise ValidationError(f"correlation_matrix: column '{name}' is not numeric")
        data.append(values.astype(float))
        masks.append(mask)
    k = len(names)
    out = np.eye(k)
    undefined = np.zeros(k, dtype=bool)
    for i in range(k):
        vi = data[i][~masks[i]]
        if vi.size == 0 or float(np.var(vi)) == 0.0:
            undefined[i] = True
    for i in range(k):
        for j in range(i + 1, k):
            if undefined[i] or undefined[j]:
                continue
            try:
                r = pearson_correlation(data[i], data[j], masks[i], masks[j]).statistic
            except ValidationError:
                r = math.nan
            out[i, j] = out[j, i] = r
    out[undefined, :] = math.nan
    out[:, undefined] = math.nan
    return names, out


def chi_squared_test(table) -> TestResult:
    """Pearson chi-squared on a contingency table of counts.

    Yates continuity correction applies to 2x2 tables only. Any expected
    count below 1 sets the low_expected warning flag.
    """
    table = np.asarray(table, dtype=float)
    if table.ndim != 2 or table.shape[0] < 2 or table.shape[1] < 2:
        raise ValidationError("chi_squared_test: need a table with >= 2 rows and columns")
    if (table < 0).any():
        raise ValidationError("chi_squared_test: counts must be nonnegative")
    row = table.sum(axis=1)
    col = table.sum(axis=0)
    total = table.sum()
    if (row == 0).any() or (col == 0).any():
        raise ValidationError("chi_squared_test: zero margin")
    expected = np.outer(row, col) / total
    diff = np.abs(table - expected)
    if table.shape == (2, 2):
        diff = np.maximum(diff - 0.5, 0.0)
    stat = float((diff * diff / expected).sum())
    df = (table.shape[0] - 1) * (table.shape[1] - 1)
    return TestResult(
        statistic=stat,
        degrees_of_freedom=float(df),
        p_value=tails.chi_squared_sf(stat, df),
        test_kind=TestKind.CHI_SQUARED,
        low_expected=bool((expected < 1.0).any()),
    )


def t_test(a, b) -> TestResult:
    """Welch two-sample t-test (unequal variances), two-sided."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValidationError("t_test: each group needs n >= 2")
    va = float(np.var(a, ddof=1))
    vb = float(np.var(b, ddof=1))
    diff = float(a.mean() - b.mean())
    if va == 0.0 and vb == 0.0:
        if diff == 0.0:
            return TestResult(0.0, float(a.size + b.size - 2), 1.0, TestKind.WELCH_T, degenerate=True)
        stat = math.copysign(math.inf, diff)
        return TestResult(stat, float(a.size + b.size - 2), 0.0, TestKind.WELCH_T, degenerate=True)
    sa, sb = va / a.size, vb / b.size
    t = diff / math.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa**2 / (a.size - 1) + sb**2 / (b.size - 1))
    return TestResult(t, df, tails.student_t_two_sided(t, df), TestKind.WELCH_T)


def anova_oneway(groups) -> TestResult:
    """One-way fixed-effects F test across two or more groups."""
    arrays = [np.asarray(g, dtype=float) for g in groups]
    if len(arrays) < 2:
        raise ValidationError("anova_oneway: need at least 2 groups")
    if any(g.size < 2 for g in arrays):
        raise ValidationError("anova_oneway: each group needs n >= 2")
    k = len(arrays)
    n_total = sum(g.size for g in arrays)
    grand = sum(float(g.sum()) for g in arrays) / n_total
    ssb = sum(g.size * (float(g.mean()) - grand) ** 2 for g in arrays)
    ssw = sum(float(((g - g.mean()) ** 2).sum()) for g in arrays)
    df = (float(k - 1), float(n_total - k))
    if ssw == 0.0:
        if ssb == 0.0:
            return TestResult(0.0, df, 1.0, TestKind.ANOVA_F, degenerate=True)
        return TestResult(math.inf, df, 0.0, TestKind.ANOVA_F, degenerate=True)
    f = (ssb / df[0]) / (ssw / df[1])
    return TestResult(f, df, tails.f_sf(f, df[0], df[1]), TestKind.ANOVA_F)


def contingency_table(codes_a: np.ndarray, codes_b: np.ndarray) -> np.ndarray:
    """Cross-tabulate two integer code arrays (levels = observed codes)."""
    ua = np.unique(codes_a)
    ub = np.unique(codes_b)
    table = np.zeros((ua.size, ub.size))
    for i, va in enumerate(ua):
        for j, vb in enumerate(ub):
            table[i, j] = int(np.count_nonzero((codes_a == va) & (codes_b == vb)))
    return table


def _feature_test(ds: Dataset, name: str, y: np.ndarray) -> TestResult:
    meta, values, mask = ds.column(name)
    keep = ~mask
    if meta.kind == ColumnKind.NUMERIC:
        a = values[keep & (y == 0)].astype(float)
        b = values[keep & (y == 1)].astype(float)
        try:
            return t_test(a, b)
        except ValidationError:
            return TestResult(0.0, 0.0, 1.0, TestKind.WELCH_T, degenerate=True)
    codes = values[keep]
    labels = y[keep]
    if np.unique(codes).size < 2 or np.unique(labels).size < 2:
        return TestResult(0.0, 0.0, 1.0, TestKind.CHI_SQUARED, degenerate=True)
    try:
        return chi_squared_test(contingency_table(codes, labels))
    except ValidationError:
        return TestResult(0.0, 0.0, 1.0, TestKind.CHI_SQUARED, degenerate=True)


def select_features(
    ds: Dataset,
    target: str | None = None,
    alpha: float = 0.05,
    whitelist: tuple[str, ...] | list[str] | None = None,
    k: int | None = None,
) -> FeatureSelection:
    """Rank features by the type-appropriate test against the binary target.

    Numeric features use Welch's t between label groups; categorical ones a
    chi-squared on the feature-by-label table. Features with p < alpha are
    retained; whitelisted names present in the dataset are force-included
    regardless of p. The result list is truncated to k when given.

    When whitelist is None the default clinical set (CLINICAL_WHITELIST) is
    applied; pass an empty sequence to disable whitelisting entirely.
    """
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1)")
    target = target if target is not None else ds.label_column
    if target is None:
        raise ValidationError("select_features: no target column")
    if target != ds.label_column:
        ds = ds.with_label(target)
    y = ds.labels()
    wl_names = CLINICAL_WHITELIST if whitelist is None else tuple(whitelist)
    effective_whitelist = [n for n in wl_names if n in ds.feature_names]

    results = [(name, _feature_test(ds, name, y)) for name in ds.feature_names]
    ranked_pairs = sorted(results, key=lambda item: item[1].p_value)  # stable for ties
    ranked = [(name, res.test_kind, res.p_value) for name, res in ranked_pairs]
    selected = [
        name for name, _, p in ranked if p < alpha or name in effective_whitelist
    ]
    if k is not None:
        if k < 1:
            raise ValidationError("k must be >= 1")
        selected = selected[:k]
    return FeatureSelection(
        ranked=ranked,
        selected=selected,
        whitelist_applied=bool(effective_whitelist),
    )


def describe_table(ds: Dataset) -> str:
    """Aligned per-column descriptive table for the numeric columns."""
    header = f"{'column':<24} {'n':>6} {'mean':>12} {'sd':>12} {'min':>12} {'q1':>12} {'median':>12} {'q3':>12} {'max':>12}"
    lines = [header, "-" * len(header)]
    for meta in ds.columns:
        if meta.kind != ColumnKind.NUMERIC:
            continue
        _, values, mask = ds.column(meta.name)
        if int((~mask).sum()) == 0:
            continue
        s = describe(values, mask)
        lines.append(
            f"{meta.name:<24} {s.n:>6} {s.mean:>12.4f} {s.sd:>12.4f} {s.min:>12.4f} "
            f"{s.q1:>12.4f} {s.median:>12.4f} {s.q3:>12.4f} {s.max:>12.4f}"
        )
    return "\n".join(lines) + "\n"
