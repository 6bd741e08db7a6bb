"""Transverse grids, sampled complex fields and trapezoidal inner products."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GridMismatchError(ValueError):
    """Two fields that must share a grid do not."""


class DegenerateFieldError(ValueError):
    """A zero (or numerically zero) field was given where a nonzero one is required."""


@dataclass(frozen=True)
class TransverseGrid:
    """Uniform grid over the transverse coordinate x, in micrometres."""

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError(f"x_min ({self.x_min}) must be below x_max ({self.x_max})")
        if int(self.n_points) != self.n_points or self.n_points < 16:
            raise ValueError(f"n_points must be an integer >= 16, got {self.n_points}")

    @classmethod
    def from_spacing(cls, half_width: float, dx: float) -> "TransverseGrid":
        """Symmetric grid on [-half_width, half_width] with spacing at most ``dx``."""
        n = int(np.ceil(2 * half_width / dx)) + 1
        return cls(-half_width, half_width, n)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def x(self) -> np.ndarray:
        x = np.linspace(self.x_min, self.x_max, self.n_points)
        x.flags.writeable = False
        return x

    @property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights."""
        w = np.full(self.n_points, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w

    def refined(self) -> "TransverseGrid":
        """Same window at half the spacing."""
        return TransverseGrid(self.x_min, self.x_max, 2 * self.n_points - 1)


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Complex samples of a transverse field on a :class:`TransverseGrid`."""

    grid: TransverseGrid
    samples: np.ndarray

    def __post_init__(self):
        s = np.array(self.samples, dtype=complex)
        if s.shape != (self.grid.n_points,):
            raise ValueError(
                f"expected {self.grid.n_points} samples, got shape {s.shape}")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    @classmethod
    def zeros(cls, grid: TransverseGrid) -> "ComplexField":
        return cls(grid, np.zeros(grid.n_points, dtype=complex))

    @classmethod
    def from_function(cls, grid: TransverseGrid, func) -> "ComplexField":
        return cls(grid, func(grid.x))

    def __add__(self, other: "ComplexField") -> "ComplexField":
        _check_grids(self, other)
        return ComplexField(self.grid, self.samples + other.samples)

    def __sub__(self, other: "ComplexField") -> "ComplexField":
        _check_grids(self, other)
        return ComplexField(self.grid, self.samples - other.samples)

    def __mul__(self, scalar) -> "ComplexField":
        return ComplexField(self.grid, self.samples * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "ComplexField":
        return ComplexField(self.grid, self.samples / scalar)

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.samples) ** 2


def _check_grids(f: ComplexField, g: ComplexField) -> None:
    if f.grid != g.grid:
        raise GridMismatchError(f"fields live on different grids: {f.grid} vs {g.grid}")


def overlap(f: ComplexField, g: ComplexField) -> complex:
    """Return the trapezoidal integral of conj(f) * g."""
    _check_grids(f, g)
    return complex(np.sum(f.grid.weights * np.conj(f.samples) * g.samples))


def power(f: ComplexField) -> float:
    """Return the trapezoidal integral of |f|^2."""
    return float(np.sum(f.grid.weights * f.intensity))


def normalize(f: ComplexField) -> ComplexField:
    """Scale ``f`` by a positive real factor so that its power is one."""
    p = power(f)
    if not p > 0.0 or not np.isfinite(p):
        raise DegenerateFieldError("cannot normalize a field with zero power")
    return ComplexField(f.grid, f.samples / np.sqrt(p))
