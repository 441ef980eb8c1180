from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np


class DataError(ValueError):
    pass


@dataclass
class DataMatrix:
    """n x d observational sample, the only private input of the pipelines.

    Discrete columns hold their integer codes; ``categories`` keeps the
    original labels for columns that were mapped from strings.
    """

    values: np.ndarray
    names: List[str]
    categories: Dict[str, List[str]] = field(default_factory=dict)
    _codes: Dict[str, np.ndarray] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError(f"expected a 2-D table, got shape {values.shape}")
        if values.shape[0] < 1:
            raise DataError("data matrix has no rows")
        if values.shape[1] != len(self.names):
            raise DataError(f"{values.shape[1]} columns but {len(self.names)} names")
        if not np.all(np.isfinite(values)):
            raise DataError("data matrix contains missing or non-finite values")
        self.values = values
        self.names = list(self.names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_array(cls, values, names: Optional[Sequence[str]] = None) -> "DataMatrix":
        values = np.asarray(values, dtype=float)
        if names is None:
            names = [f"x{j + 1}" for j in range(values.shape[1])]
        return cls(values, list(names))

    def take(self, rows) -> "DataMatrix":
        return DataMatrix(self.values[rows], self.names, dict(self.categories))

    def level_counts(self) -> np.ndarray:
        if "levels" not in self._codes:
            self._codes["levels"] = np.array([len(np.unique(self.values[:, j])) for j in range(self.d)])
        return self._codes["levels"]

    def stratum_codes(self) -> np.ndarray:
        """Integer level codes per column (one level per distinct value)."""
        if "codes" not in self._codes:
            codes = np.empty(self.values.shape, dtype=np.int64)
            for j in range(self.d):
                codes[:, j] = np.unique(self.values[:, j], return_inverse=True)[1].ravel()
            self._codes["codes"] = codes
        return self._codes["codes"]
