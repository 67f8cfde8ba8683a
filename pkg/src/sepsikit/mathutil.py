"""Small numeric helpers shared by the imputation, model, and explanation code."""

from __future__ import annotations

import numpy as np

from .errors import ComputationError, ValidationError

# Probabilities are clamped away from {0, 1} so downstream log-loss stays finite.
PROB_CLAMP = 1e-12


def sigmoid(eta: np.ndarray | float) -> np.ndarray | float:
    """Numerically stable logistic function."""
    eta = np.asarray(eta, dtype=float)
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ez = np.exp(eta[~pos])
    out[~pos] = ez / (1.0 + ez)
    if out.ndim == 0:
        return float(out)
    return out


def logit(p: float) -> float:
    return float(np.log(p) - np.log1p(-p))


def clamp_probability(p: np.ndarray | float) -> np.ndarray | float:
    clamped = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    if np.ndim(clamped) == 0:
        return float(clamped)
    return clamped


def log_loss(y: np.ndarray, p: np.ndarray) -> float:
    """Mean binary cross-entropy; probabilities are clamped first."""
    y = np.asarray(y, dtype=float)
    p = np.asarray(clamp_probability(p), dtype=float)
    if y.shape != p.shape:
        raise ValidationError("log_loss: label and probability lengths differ")
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def ridge_least_squares(
    X: np.ndarray,
    y: np.ndarray,
    *,
    weights: np.ndarray | None = None,
    ridge: float = 0.0,
    context: str = "regression",
) -> tuple[float, np.ndarray]:
    """Solve a (weighted) ridge regression with an unpenalized intercept.

    Returns (intercept, coefficients). Raises ComputationError when the
    normal equations are singular despite the ridge term.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValidationError(f"{context}: design matrix and target shapes are inconsistent")
    if ridge < 0:
        raise ValidationError(f"{context}: ridge must be >= 0")
    n, p = X.shape
    A = np.column_stack([np.ones(n), X])
    if weights is None:
        gram = A.T @ A
        rhs = A.T @ y
    else:
        w = np.asarray(weights, dtype=float)
        Aw = A * w[:, None]
        gram = Aw.T @ A
        rhs = Aw.T @ y
    penalty = np.zeros(p + 1)
    penalty[1:] = ridge
    gram = gram + np.diag(penalty)
    try:
        beta = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise ComputationError(f"{context}: singular system despite ridge={ridge}") from exc
    if not np.all(np.isfinite(beta)):
        raise ComputationError(f"{context}: non-finite solution despite ridge={ridge}")
    return float(beta[0]), beta[1:]
