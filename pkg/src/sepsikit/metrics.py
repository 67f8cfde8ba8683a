"""Confusion matrix and the derived classification statistics block.

The report reproduces the printed evaluation of a caret-style summary: exact
binomial (Clopper-Pearson) confidence interval on accuracy, exact binomial
test of accuracy against the no-information rate, Cohen's kappa, the
continuity-corrected McNemar test, and the usual rate family. Any rate whose
denominator is zero is an explicit NaN ("undefined"), never silently 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from . import tails


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int
    positive_label: str = "1"

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValidationError("confusion counts must be nonnegative")
        if self.total < 1:
            raise ValidationError("confusion matrix must count at least one case")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def reference_positive(self) -> int:
        return self.tp + self.fn

    @property
    def reference_negative(self) -> int:
        return self.fp + self.tn

    @property
    def predicted_positive(self) -> int:
        return self.tp + self.fp

    @property
    def predicted_negative(self) -> int:
        return self.fn + self.tn

    def swapped(self) -> "ConfusionMatrix":
        """The same predictions with positive and negative classes exchanged."""
        return ConfusionMatrix(
            tp=self.tn, fp=self.fn, fn=self.fp, tn=self.tp,
            positive_label=f"not {self.positive_label}",
        )


def confusion(y_true, y_pred, positive_label: str = "1") -> ConfusionMatrix:
    """Count agreement between 0/1 label arrays (1 = positive class)."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.size < 1:
        raise ValidationError("confusion: label arrays must share a length >= 1")
    if not (np.isin(y_true, (0, 1)).all() and np.isin(y_pred, (0, 1)).all()):
        raise ValidationError("confusion: labels must be 0 or 1")
    return ConfusionMatrix(
        tp=int(np.count_nonzero((y_true == 1) & (y_pred == 1))),
        fp=int(np.count_nonzero((y_true == 0) & (y_pred == 1))),
        fn=int(np.count_nonzero((y_true == 1) & (y_pred == 0))),
        tn=int(np.count_nonzero((y_true == 0) & (y_pred == 0))),
        positive_label=positive_label,
    )


def clopper_pearson_ci(successes: int, n: int, alpha: float = 0.05) -> tuple[float, float]:
    """Exact binomial confidence interval via beta-distribution quantiles."""
    if not 0 <= successes <= n:
        raise ValidationError("clopper_pearson_ci: need 0 <= successes <= n")
    if not 0.0 < alpha < 1.0:
        raise ValidationError("clopper_pearson_ci: alpha must lie in (0, 1)")
    low = 0.0 if successes == 0 else tails.beta_quantile(alpha / 2.0, successes, n - successes + 1)
    high = 1.0 if successes == n else tails.beta_quantile(1.0 - alpha / 2.0, successes + 1, n - successes)
    return low, high


def binomial_test_greater(successes: int, n: int, p0: float) -> float:
    """Exact one-sided binomial p-value P[X >= successes | n, p0]."""
    if not 0.0 < p0 < 1.0:
        raise ValidationError("binomial_test_greater: p0 must lie in (0, 1)")
    return tails.binomial_sf(successes, n, p0)


def cohen_kappa(cm: ConfusionMatrix) -> float:
    """Chance-corrected agreement (p_o - p_e) / (1 - p_e); 0 when p_e = 1."""
    n = cm.total
    p_o = (cm.tp + cm.tn) / n
    p_e = (cm.predicted_positive * cm.reference_positive
           + cm.predicted_negative * cm.reference_negative) / (n * n)
    if p_e == 1.0:
        return 0.0
    return (p_o - p_e) / (1.0 - p_e)


def mcnemar_test(cm: ConfusionMatrix) -> tuple[float, float]:
    """Continuity-corrected McNemar statistic and chi-squared(1) p-value.

    With no discordant pairs the test is degenerate and reports (0.0, 1.0).
    """
    discordant = cm.fn + cm.fp
    if discordant == 0:
        return 0.0, 1.0
    stat = (abs(cm.fn - cm.fp) - 1.0) ** 2 / discordant
    return stat, tails.chi_squared_sf(stat, 1.0)


def _rate(numerator: int, denominator: int) -> float:
    if denominator == 0:
        return math.nan
    return numerator / denominator


@dataclass(frozen=True)
class ClassificationReport:
    matrix: ConfusionMatrix
    accuracy: float
    accuracy_ci_low: float
    accuracy_ci_high: float
    nir: float
    p_acc_gt_nir: float
    kappa: float
    mcnemar_p: float
    sensitivity: float
    specificity: float
    ppv: float
    npv: float
    prevalence: float
    detection_rate: float
    detection_prevalence: float
    balanced_accuracy: float


def report(cm: ConfusionMatrix) -> ClassificationReport:
    """Assemble the full statistics block from one confusion matrix."""
    n = cm.total
    correct = cm.tp + cm.tn
    nir = max(cm.reference_positive, cm.reference_negative) / n
    ci_low, ci_high = clopper_pearson_ci(correct, n, alpha=0.05)
    sensitivity = _rate(cm.tp, cm.reference_positive)
    specificity = _rate(cm.tn, cm.reference_negative)
    return ClassificationReport(
        matrix=cm,
        accuracy=correct / n,
        accuracy_ci_low=ci_low,
        accuracy_ci_high=ci_high,
        nir=nir,
        p_acc_gt_nir=binomial_test_greater(correct, n, nir) if 0.0 < nir < 1.0 else math.nan,
        kappa=cohen_kappa(cm),
        mcnemar_p=mcnemar_test(cm)[1],
        sensitivity=sensitivity,
        specificity=specificity,
        ppv=_rate(cm.tp, cm.predicted_positive),
        npv=_rate(cm.tn, cm.predicted_negative),
        prevalence=cm.reference_positive / n,
        detection_rate=cm.tp / n,
        detection_prevalence=cm.predicted_positive / n,
        balanced_accuracy=(sensitivity + specificity) / 2.0,
    )
