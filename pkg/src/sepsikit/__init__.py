"""Explainable sepsis risk prediction on tabular clinical records.

The library covers the whole workflow: delimited-table ingestion with
missingness tracking, chained-equation imputation, statistical feature
screening, a logistic GLM and second-order boosted trees behind a common
predictor contract, local surrogate explanations, and an exact
classification-statistics report. `sepsikit.cli` exposes the same stages as
subcommands driven by a JSON configuration.
"""

__version__ = "0.1.0"

from .errors import ComputationError, SepsikitError, ValidationError

__all__ = ["ComputationError", "SepsikitError", "ValidationError", "__version__"]
