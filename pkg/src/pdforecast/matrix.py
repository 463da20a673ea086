"""Dense feature matrix with an explicit observedness mask.

Unobserved cells hold NaN as a representation-level sentinel; all logic is
expected to consult ``mask`` rather than testing the sentinel.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch


@dataclass
class FeatureMatrix:
    values: np.ndarray          # float64, rows = visits, cols = features
    mask: np.ndarray            # bool, True = observed
    col_names: list[str]
    row_keys: list[tuple[int, int]] = field(default_factory=list)  # (patient_id, visit_month)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.shape != self.mask.shape:
            raise ShapeMismatch(
                f"values {self.values.shape} vs mask {self.mask.shape}")
        if self.values.ndim != 2 or self.values.shape[1] != len(self.col_names):
            raise ShapeMismatch(
                f"{self.values.shape} incompatible with {len(self.col_names)} column names")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def col_index(self, name: str) -> int:
        return self.col_names.index(name)

    def column(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        j = self.col_index(name)
        return self.values[:, j], self.mask[:, j]

    def observed(self, name: str) -> np.ndarray:
        """Observed values of one column, in row order."""
        v, m = self.column(name)
        return v[m]

    def copy(self) -> "FeatureMatrix":
        return FeatureMatrix(self.values.copy(), self.mask.copy(),
                             list(self.col_names), list(self.row_keys))
