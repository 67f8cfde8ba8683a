import numpy as np
import pytest

from sepsikit.dataset import ColumnKind, from_columns


@pytest.fixture
def write_csv(tmp_path):
    def _write(text: str, name: str = "table.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write


def numeric_dataset(columns: dict, label: str | None = None, masks: dict | None = None):
    """Build a Dataset from {name: values} plus optional {name: bool mask}."""
    masks = masks or {}
    n = len(next(iter(columns.values())))
    spec = []
    for name, values in columns.items():
        values = np.asarray(values, dtype=float)
        mask = np.asarray(masks.get(name, np.zeros(n, dtype=bool)), dtype=bool)
        if name == label:
            spec.append((name, ColumnKind.LABEL, values.astype(np.int64), mask, ()))
        else:
            spec.append((name, ColumnKind.NUMERIC, values, mask, ()))
    return from_columns(spec, n_rows=n, label_column=label)
