"""Missing-cell completion by chained equations.

Each incomplete column is visited in ascending order of missingness and
re-imputed from a regression of its observed cells on all other columns'
current values: a ridge-stabilized least squares for numeric columns, the
observed mode for categorical ones. Sweeps repeat until the largest change
of any imputed numeric cell drops below the tolerance.

The default is deterministic regression imputation (no posterior noise), so
completions are reproducible to the bit. A stochastic mode adds seeded
Gaussian residual noise and supports drawing several completed datasets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import ColumnKind, Dataset, from_columns
from .errors import ComputationError, ValidationError
from .mathutil import ridge_least_squares


@dataclass(frozen=True)
class MiceConfig:
    max_iterations: int = 10
    tolerance: float = 1e-4
    ridge: float = 1e-6
    deterministic: bool = True
    seed: int = 0
    imputation_count: int = 1

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValidationError("mice.max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ValidationError("mice.tolerance must be > 0")
        if self.ridge < 0:
            raise ValidationError("mice.ridge must be >= 0")
        if self.imputation_count < 1:
            raise ValidationError("mice.imputation_count must be >= 1")


@dataclass(frozen=True)
class NumericFit:
    predictors: tuple[str, ...]
    coefficients: np.ndarray
    intercept: float
    residual_sd: float


@dataclass(frozen=True)
class CategoricalFit:
    modal_code: int


@dataclass(frozen=True)
class ImputationModel:
    visit_order: tuple[str, ...]
    per_column_fit: dict[str, NumericFit | CategoricalFit]
    initial_values: dict[str, float]
    per_column_delta: dict[str, float]
    iterations_run: int
    converged: bool
    final_delta: float


def _observed_mean(values: np.ndarray, mask: np.ndarray, name: str) -> float:
    observed = values[~mask]
    if observed.size == 0:
        raise ValidationError(f"column '{name}' has zero observed cells; drop it before imputing")
    return float(observed.mean())


def _observed_mode(codes: np.ndarray, mask: np.ndarray, name: str) -> int:
    observed = codes[~mask]
    if observed.size == 0:
        raise ValidationError(f"column '{name}' has zero observed cells; drop it before imputing")
    uniq, counts = np.unique(observed, return_counts=True)
    return int(uniq[counts == counts.max()].min())  # ties resolve to the lowest code


def _check_label_observed(ds: Dataset) -> None:
    if ds.label_column is not None:
        _, _, mask = ds.column(ds.label_column)
        if mask.any():
            raise ValidationError("label column must be fully observed before imputation")


def initial_fill(ds: Dataset) -> Dataset:
    """Replace masked numeric cells with the column mean and masked categorical
    cells with the column mode (ties to the lowest code); masks are retained."""
    _check_label_observed(ds)
    spec = []
    for j, meta in enumerate(ds.columns):
        values = ds.cells[j].copy()
        mask = ds.missing_mask[j]
        if mask.any():
            if meta.kind == ColumnKind.NUMERIC:
                values[mask] = _observed_mean(values, mask, meta.name)
            else:
                values[mask] = _observed_mode(values, mask, meta.name)
        spec.append((meta.name, meta.kind, values, mask, meta.dictionary))
    return from_columns(spec, n_rows=ds.n_rows, label_column=ds.label_column)


def _initial_values(ds: Dataset) -> dict[str, float]:
    out: dict[str, float] = {}
    for j, meta in enumerate(ds.columns):
        values, mask = ds.cells[j], ds.missing_mask[j]
        if meta.kind == ColumnKind.NUMERIC:
            out[meta.name] = _observed_mean(values, mask, meta.name)
        else:
            out[meta.name] = float(_observed_mode(values, mask, meta.name))
    return out


def visit_order_for(ds: Dataset) -> tuple[str, ...]:
    """Names of columns with at least one missing cell, ascending by missingness."""
    incomplete = [c for c in ds.columns if c.missing_fraction > 0.0]
    return tuple(c.name for c in sorted(incomplete, key=lambda c: c.missing_fraction))


def _current_matrix(columns: list[str], current: dict[str, np.ndarray]) -> np.ndarray:
    return np.column_stack([current[name] for name in columns]) if columns else np.zeros((0, 0))


def _run_chain(
    ds: Dataset, cfg: MiceConfig, rng: np.random.Generator | None
) -> tuple[dict[str, np.ndarray], ImputationModel]:
    order = visit_order_for(ds)
    kinds = {c.name: c.kind for c in ds.columns}
    masks = {c.name: ds.missing_mask[j] for j, c in enumerate(ds.columns)}
    current = {c.name: ds.cells[j].astype(float).copy() for j, c in enumerate(ds.columns)}
    for name in order:
        mask = masks[name]
        if kinds[name] == ColumnKind.NUMERIC:
            current[name][mask] = _observed_mean(ds.column(name)[1], mask, name)
        else:
            current[name][mask] = _observed_mode(ds.column(name)[1], mask, name)

    fits: dict[str, NumericFit | CategoricalFit] = {}
    deltas: dict[str, float] = {}
    iterations = 0
    converged = len(order) == 0
    final_delta = 0.0
    all_names = list(ds.column_names)

    for _ in range(cfg.max_iterations):
        if not order:
            break
        sweep_delta = 0.0
        for name in order:
            mask = masks[name]
            others = [c for c in all_names if c != name]
            if kinds[name] == ColumnKind.NUMERIC:
                P = _current_matrix(others, current)
                obs = ~mask
                try:
                    intercept, coefs = ridge_least_squares(
                        P[obs], current[name][obs], ridge=cfg.ridge,
                        context=f"mice column '{name}'",
                    )
                except ComputationError as exc:
                    raise ComputationError(f"singular regression for column '{name}'") from exc
                fitted = intercept + P[obs] @ coefs
                resid = current[name][obs] - fitted
                dof = max(int(obs.sum()) - (len(others) + 1), 1)
                residual_sd = float(np.sqrt((resid @ resid) / dof))
                predictions = intercept + P[mask] @ coefs
                if rng is not None and residual_sd > 0:
                    predictions = predictions + rng.normal(0.0, residual_sd, size=predictions.shape)
                delta = float(np.max(np.abs(predictions - current[name][mask]))) if mask.any() else 0.0
                current[name][mask] = predictions
                fits[name] = NumericFit(
                    predictors=tuple(others), coefficients=coefs,
                    intercept=intercept, residual_sd=residual_sd,
                )
                deltas[name] = delta
                sweep_delta = max(sweep_delta, delta)
            else:
                # Modal refit: the mode is taken over observed cells only, so it
                # is stable across sweeps and never enters the convergence delta.
                modal = _observed_mode(ds.column(name)[1], mask, name)
                current[name][mask] = float(modal)
                fits[name] = CategoricalFit(modal_code=modal)
                deltas[name] = 0.0
        iterations += 1
        final_delta = sweep_delta
        if sweep_delta < cfg.tolerance:
            converged = True
            break

    model = ImputationModel(
        visit_order=order,
        per_column_fit=fits,
        initial_values=_initial_values(ds),
        per_column_delta=deltas,
        iterations_run=iterations,
        converged=converged,
        final_delta=final_delta,
    )
    return current, model


def _completed_dataset(ds: Dataset, current: dict[str, np.ndarray]) -> Dataset:
    spec = []
    for j, meta in enumerate(ds.columns):
        if meta.kind == ColumnKind.NUMERIC:
            values = current[meta.name].copy()
        else:
            values = np.rint(current[meta.name]).astype(np.int64)
        spec.append((meta.name, meta.kind, values, np.zeros(ds.n_rows, dtype=bool), meta.dictionary))
    return from_columns(spec, n_rows=ds.n_rows, label_column=ds.label_column)


def mice_fit_transform(ds: Dataset, cfg: MiceConfig = MiceConfig()) -> tuple[list[Dataset], ImputationModel]:
    """Run chained-equation sweeps and return completed dataset(s) plus the model.

    Originally observed cells are never altered. In deterministic mode the
    imputation_count completions are identical; the stochastic mode draws
    independent seeded chains.
    """
    if len(ds.columns) < 2:
        raise ValidationError("imputation needs at least two columns")
    _check_label_observed(ds)
    if cfg.deterministic:
        current, model = _run_chain(ds, cfg, rng=None)
        completed = _completed_dataset(ds, current)
        return [completed] * cfg.imputation_count, model
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.imputation_count)
    completions = []
    model: ImputationModel | None = None
    for i, seq in enumerate(seeds):
        current, chain_model = _run_chain(ds, cfg, rng=np.random.default_rng(seq))
        if i == 0:
            model = chain_model
        completions.append(_completed_dataset(ds, current))
    assert model is not None
    return completions, model


def apply_imputation(model: ImputationModel, ds: Dataset) -> Dataset:
    """Fill ds's missing cells with the model's frozen fits (one pass, no refit).

    Used to complete validation/test partitions from train-fit regressions so
    no information flows backwards.
    """
    if set(ds.column_names) != set(model.initial_values):
        raise ValidationError("dataset columns do not match the imputation model")
    masks = {c.name: ds.missing_mask[j] for j, c in enumerate(ds.columns)}
    kinds = {c.name: c.kind for c in ds.columns}
    current = {c.name: ds.cells[j].astype(float).copy() for j, c in enumerate(ds.columns)}
    for name, mask in masks.items():
        if mask.any():
            current[name][mask] = model.initial_values[name]
    for name in model.visit_order:
        mask = masks[name]
        if not mask.any():
            continue
        fit = model.per_column_fit[name]
        if isinstance(fit, NumericFit) and kinds[name] == ColumnKind.NUMERIC:
            P = _current_matrix(list(fit.predictors), current)
            current[name][mask] = fit.intercept + P[mask] @ fit.coefficients
        else:
            current[name][mask] = float(fit.modal_code)  # type: ignore[union-attr]
    return _completed_dataset(ds, current)


def imputation_summary(ds: Dataset, model: ImputationModel) -> str:
    """Aligned text: per column the imputed-cell count and last-sweep delta."""
    lines = [
        f"{'column':<24} {'imputed':>8} {'last_delta':>12}",
        f"{'-' * 24} {'-' * 8} {'-' * 12}",
    ]
    for name in model.visit_order:
        _, _, mask = ds.column(name)
        delta = model.per_column_delta.get(name, 0.0)
        lines.append(f"{name:<24} {int(mask.sum()):>8} {delta:>12.3e}")
    lines.append("")
    lines.append(
        f"iterations: {model.iterations_run}   converged: {model.converged}   "
        f"final_delta: {model.final_delta:.3e}"
    )
    return "\n".join(lines) + "\n"
