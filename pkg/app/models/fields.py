from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .schemas import GridSpec
from ..errors import FieldError


@dataclass(frozen=True)
class ComplexField:
    """Complex samples on a grid, either at the points x_j or on the frequency lattice.

    Values are stored with the grid's shape (row-major axis order). The L2 norm
    carries the cell volume in both spaces, so the unitary transform preserves it.
    """

    grid: GridSpec
    values: np.ndarray
    space: Literal["physical", "frequency"] = "physical"

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=complex)
        if values.size != self.grid.size:
            raise FieldError(f"field has {values.size} values but the grid has {self.grid.size} points")
        if self.space not in ("physical", "frequency"):
            raise FieldError(f"unknown field space '{self.space}'")
        values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise FieldError(f"field has a non-finite entry at index {tuple(int(i) for i in bad)}")
        object.__setattr__(self, "values", values)

    def with_values(self, values: np.ndarray, space: Optional[str] = None) -> "ComplexField":
        return ComplexField(self.grid, values, space or self.space)

    def norm(self) -> float:
        return float(np.sqrt(self.grid.cell_volume * np.sum(np.abs(self.values) ** 2)))

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def __mul__(self, scalar: complex) -> "ComplexField":
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__

    def __add__(self, other: "ComplexField") -> "ComplexField":
        self._check_compatible(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "ComplexField") -> "ComplexField":
        self._check_compatible(other)
        return self.with_values(self.values - other.values)

    def _check_compatible(self, other: "ComplexField") -> None:
        if other.grid != self.grid or other.space != self.space:
            raise FieldError("fields live on different grids or in different spaces")


__all__ = ["ComplexField"]
