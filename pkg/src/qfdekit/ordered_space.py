"""Grid functions on J = [0, T] with the pointwise order, sup norm and product."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels


class GridMismatchError(ValueError):
    pass


class ChainError(ValueError):
    """Raised when a supposed chain holds an incomparable pair."""

    def __init__(self, i: int, j: int):
        super().__init__(f"chain elements {i} and {j} are not comparable")
        self.pair = (i, j)


class Order(enum.Enum):
    EQUAL = "Equal"
    LESS_OR_EQUAL = "LessOrEqual"
    GREATER_OR_EQUAL = "GreaterOrEqual"
    INCOMPARABLE = "Incomparable"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Grid:
    t_end: float
    n_points: int

    def __post_init__(self):
        if not (np.isfinite(self.t_end) and self.t_end > 0):
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValueError(f"n_points must be an integer >= 2, got {self.n_points}")
        object.__setattr__(self, "t_end", float(self.t_end))
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def h(self) -> float:
        return self.t_end / (self.n_points - 1)

    @property
    def t(self) -> np.ndarray:
        t = np.arange(self.n_points) * self.h
        t[-1] = self.t_end
        t.flags.writeable = False
        return t

    def refine(self, factor: int) -> "Grid":
        return Grid(self.t_end, factor * (self.n_points - 1) + 1)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Immutable samples of a continuous function on a uniform grid."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if v.shape[0] != self.grid.n_points:
            raise ValueError(f"expected {self.grid.n_points} values, got {v.shape[0]}")
        if not np.all(np.isfinite(v)):
            bad = int(np.flatnonzero(~np.isfinite(v))[0])
            raise ValueError(f"non-finite value at node {bad}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "GridFunction":
        return cls(grid, np.full(grid.n_points, float(value)))

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "GridFunction":
        return cls(grid, np.broadcast_to(fn(grid.t), (grid.n_points,)))

    @property
    def t(self) -> np.ndarray:
        return self.grid.t

    def _other(self, other) -> np.ndarray:
        if isinstance(other, GridFunction):
            _check_grids(self, other)
            return other.values
        return np.asarray(other, dtype=float)

    def __add__(self, other):
        return GridFunction(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return GridFunction(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return GridFunction(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def __len__(self):
        return self.grid.n_points

    def allclose(self, other: "GridFunction", atol: float = 0.0) -> bool:
        _check_grids(self, other)
        return bool(np.max(np.abs(self.values - other.values)) <= atol)

    def digest(self) -> dict:
        v = self.values
        return {"norm": float(np.max(np.abs(v))), "min": float(v.min()), "max": float(v.max()),
                "first": float(v[0]), "last": float(v[-1])}


def _check_grids(f: GridFunction, g: GridFunction) -> None:
    if f.grid != g.grid:
        raise GridMismatchError(f"grid mismatch: {f.grid} vs {g.grid}")


def partial_leq(f: GridFunction, g: GridFunction, eps: float = 0.0) -> Order:
    """Compare two grid functions in the pointwise order.

    With ``eps > 0`` a node counts as ``f_i <= g_i`` when ``f_i <= g_i + eps``;
    ``eps = 0`` is the exact, bitwise comparison.
    """
    _check_grids(f, g)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    le, ge = _kernels.order_flags(f.values, g.values, eps)
    if le and ge:
        return Order.EQUAL
    if le:
        return Order.LESS_OR_EQUAL
    if ge:
        return Order.GREATER_OR_EQUAL
    return Order.INCOMPARABLE


def sup_norm(f: GridFunction) -> float:
    return float(np.max(np.abs(f.values)))


def pointwise_product(f: GridFunction, g: GridFunction) -> GridFunction:
    _check_grids(f, g)
    return GridFunction(f.grid, f.values * g.values)


@dataclass(frozen=True, eq=False)
class ChainSample:
    elements: tuple

    def __init__(self, elements: Sequence[GridFunction], check: bool = True):
        elements = tuple(elements)
        if not elements:
            raise ValueError("a chain needs at least one element")
        for e in elements[1:]:
            _check_grids(elements[0], e)
        object.__setattr__(self, "elements", elements)
        if check:
            self.assert_chain()

    def stacked(self) -> np.ndarray:
        return np.vstack([e.values for e in self.elements])

    def assert_chain(self, eps: float = 0.0) -> None:
        ok = _kernels.comparable_matrix(self.stacked(), eps)
        if not ok.all():
            i, j = np.argwhere(~ok)[0]
            raise ChainError(int(i), int(j))

    def bottom(self) -> GridFunction:
        return min(self.elements, key=lambda e: float(e.values.sum()))

    def top(self) -> GridFunction:
        return max(self.elements, key=lambda e: float(e.values.sum()))

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)


def chain_diameter(c: ChainSample) -> float:
    """Largest sup-norm distance between two elements of a chain."""
    if not isinstance(c, ChainSample):
        c = ChainSample(c)
    else:
        c.assert_chain()
    return _kernels.chain_diameter_values(c.stacked())
