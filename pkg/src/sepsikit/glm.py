"""Logistic regression fit by iteratively reweighted least squares.

The objective is the ridge-penalized logistic log-likelihood; the penalty
applies to the coefficients only, never the intercept. Newton steps are
halved whenever they fail to improve the objective, which keeps the solve
monotone even on poorly scaled or separable data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ComputationError, ValidationError
from .mathutil import clamp_probability, sigmoid


@dataclass(frozen=True)
class GlmModel:
    feature_names: tuple[str, ...]
    coefficients: np.ndarray
    intercept: float
    converged: bool
    iterations: int
    ridge: float

    def predict_proba(self, rows) -> np.ndarray | float:
        """Positive-class probability, clamped into (1e-12, 1 - 1e-12)."""
        rows = np.asarray(rows, dtype=float)
        single = rows.ndim == 1
        X = rows[None, :] if single else rows
        if X.shape[1] != len(self.feature_names):
            raise ValidationError(
                f"expected {len(self.feature_names)} features, got {X.shape[1]}"
            )
        p = clamp_probability(sigmoid(self.intercept + X @ self.coefficients))
        return float(p[0]) if single else p


def penalized_nll(X: np.ndarray, y: np.ndarray, intercept: float, coefs: np.ndarray, ridge: float) -> float:
    """Ridge-penalized negative log-likelihood (intercept unpenalized)."""
    eta = intercept + X @ coefs
    # log(1 + e^eta) computed stably for both signs of eta
    nll = float(np.sum(np.logaddexp(0.0, eta) - y * eta))
    return nll + 0.5 * ridge * float(coefs @ coefs)


def gradient(X: np.ndarray, y: np.ndarray, intercept: float, coefs: np.ndarray, ridge: float) -> np.ndarray:
    """Gradient of the penalized log-likelihood, intercept component first."""
    p = sigmoid(intercept + X @ coefs)
    resid = y - p
    g = np.empty(len(coefs) + 1)
    g[0] = float(np.sum(resid))
    g[1:] = X.T @ resid - ridge * coefs
    return g


def glm_fit(
    X: np.ndarray,
    y: np.ndarray,
    feature_names=None,
    ridge: float = 1e-6,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> GlmModel:
    """Fit the logistic model by damped Newton (IRLS) steps.

    Iterates until the largest absolute parameter change drops below tol.
    Raises when an update goes non-finite, which on separable data means the
    ridge is too small.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValidationError("glm_fit: X and y row counts differ")
    if np.isnan(X).any():
        raise ValidationError("glm_fit: X contains missing cells; impute first")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValidationError("glm_fit: labels must be 0/1")
    if ridge < 0:
        raise ValidationError("glm_fit: ridge must be >= 0")
    n, p = X.shape
    if ridge == 0.0 and n < p + 1:
        raise ValidationError("glm_fit: need n >= n_features + 1 or ridge > 0")
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{i}" for i in range(p))
    if len(names) != p:
        raise ValidationError("glm_fit: feature_names length mismatch")

    beta = np.zeros(p + 1)  # [intercept, coefficients]
    penalty = np.full(p + 1, ridge)
    penalty[0] = 0.0
    nll = penalized_nll(X, y, beta[0], beta[1:], ridge)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = beta[0] + X @ beta[1:]
        prob = sigmoid(eta)
        w = prob * (1.0 - prob)
        A = np.column_stack([np.ones(n), X])
        hess = (A * w[:, None]).T @ A + np.diag(penalty)
        grad = np.empty(p + 1)
        resid = y - prob
        grad[0] = float(np.sum(resid))
        grad[1:] = X.T @ resid - ridge * beta[1:]
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            raise ComputationError(
                "glm_fit: singular IRLS system; set ridge > 0 (data may be separable)"
            ) from exc
        if not np.all(np.isfinite(step)):
            raise ComputationError(
                "glm_fit: non-finite IRLS update; set ridge > 0 (data may be separable)"
            )
        # damped Newton: halve the step until the objective stops worsening
        scale = 1.0
        for _ in range(50):
            candidate = beta + scale * step
            cand_nll = penalized_nll(X, y, candidate[0], candidate[1:], ridge)
            if cand_nll <= nll + 1e-12:
                break
            scale *= 0.5
        beta = beta + scale * step
        nll = penalized_nll(X, y, beta[0], beta[1:], ridge)
        if float(np.max(np.abs(scale * step))) < tol:
            converged = True
            break
    if not np.all(np.isfinite(beta)):
        raise ComputationError("glm_fit: diverged; set ridge > 0")
    return GlmModel(
        feature_names=names,
        coefficients=beta[1:].copy(),
        intercept=float(beta[0]),
        converged=converged,
        iterations=it,
        ridge=ridge,
    )
