"""Synthetic clinical tables with a known logistic ground truth.

The real hospital records behind this project are private, so demos and
oracle tests run on generated data: equicorrelated Gaussian features named
after common clinical variables, a linear-logit label with a configurable
prevalence, and MCAR masking applied after the labels are drawn. The
complete (pre-masking) table and the generating parameters are written
alongside the masked file so tests can score imputation and models against
the truth.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import ColumnKind, Dataset, from_columns, save_table
from .errors import ValidationError
from .mathutil import sigmoid
from .stats import CLINICAL_WHITELIST

LABEL_NAME = "sepsis"


@dataclass(frozen=True)
class SynthSpec:
    n_rows: int = 2000
    n_features: int = 10
    missing_fraction: float = 0.10
    prevalence: float = 0.50
    correlation: float = 0.30
    logit_scale: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.n_rows < 10:
            raise ValidationError("synth.n_rows must be >= 10")
        if self.n_features < 1:
            raise ValidationError("synth.n_features must be >= 1")
        if not 0.0 <= self.missing_fraction < 1.0:
            raise ValidationError("synth.missing_fraction must lie in [0, 1)")
        if not 0.0 < self.prevalence < 1.0:
            raise ValidationError("synth.prevalence must lie in (0, 1)")
        if not 0.0 <= self.correlation < 1.0:
            raise ValidationError("synth.correlation must lie in [0, 1)")
        if not self.logit_scale > 0:
            raise ValidationError("synth.logit_scale must be > 0")


def feature_names_for(n_features: int) -> list[str]:
    names = list(CLINICAL_WHITELIST[:n_features])
    while len(names) < n_features:
        names.append(f"lab_{len(names) - len(CLINICAL_WHITELIST) + 1:02d}")
    return names


def _solve_intercept(logits: np.ndarray, target: float) -> float:
    """Bisection on b so that mean(sigmoid(logits + b)) hits the target."""
    lo, hi = -50.0, 50.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(np.mean(sigmoid(logits + mid))) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate(spec: SynthSpec) -> tuple[Dataset, Dataset, dict]:
    """Returns (complete dataset, masked dataset, ground-truth parameters)."""
    rng = np.random.default_rng(spec.seed)
    names = feature_names_for(spec.n_features)
    n, d = spec.n_rows, spec.n_features

    shared = rng.standard_normal((n, 1))
    eps = rng.standard_normal((n, d))
    X = math.sqrt(spec.correlation) * shared + math.sqrt(1.0 - spec.correlation) * eps

    raw_coefs = rng.standard_normal(d)
    raw_logits = X @ raw_coefs
    spread = float(np.std(raw_logits))
    scale = spec.logit_scale / spread if spread > 0 else 1.0
    coefs = raw_coefs * scale
    logits = raw_logits * scale
    intercept = _solve_intercept(logits, spec.prevalence)
    probs = sigmoid(logits + intercept)
    y = (rng.random(n) < probs).astype(np.int64)

    mask = rng.random((n, d)) < spec.missing_fraction

    def build(with_mask: bool) -> Dataset:
        cols = [
            (names[j], ColumnKind.NUMERIC, X[:, j].copy(),
             mask[:, j] if with_mask else np.zeros(n, dtype=bool), ())
            for j in range(d)
        ]
        cols.append((LABEL_NAME, ColumnKind.LABEL, y.copy(), np.zeros(n, dtype=bool), ()))
        return from_columns(cols, n_rows=n, label_column=LABEL_NAME)

    truth = {
        "feature_names": names,
        "coefficients": {name: float(c) for name, c in zip(names, coefs)},
        "intercept": float(intercept),
        "bayes_accuracy": float(np.mean(np.maximum(probs, 1.0 - probs))),
        "label": LABEL_NAME,
        "spec": {
            "n_rows": spec.n_rows,
            "n_features": spec.n_features,
            "missing_fraction": spec.missing_fraction,
            "prevalence": spec.prevalence,
            "correlation": spec.correlation,
            "logit_scale": spec.logit_scale,
            "seed": spec.seed,
        },
    }
    return build(with_mask=False), build(with_mask=True), truth


def write_synthetic(spec: SynthSpec, out_dir: str | Path, format: str = "csv") -> dict[str, Path]:
    """Emit data.<fmt>, complete.<fmt>, and truth.json under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    complete, masked, truth = generate(spec)
    ext = "psv" if format == "psv" else "csv"
    paths = {
        "data": out / f"synthetic.{ext}",
        "complete": out / f"synthetic_complete.{ext}",
        "truth": out / "synthetic_truth.json",
    }
    save_table(masked, paths["data"], format)
    save_table(complete, paths["complete"], format)
    paths["truth"].write_text(json.dumps(truth, indent=2) + "\n", encoding="utf-8")
    return paths
