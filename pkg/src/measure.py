"""Sampled compact measure spaces.

A ``SampleSpace`` is a product of circle, flat-torus and interval factors cut
into uniform cells; every cell is represented by its center and carries a
positive weight (its measure).  Measures absolutely continuous with respect to
the base are stored as densities on the cells (``DensityMeasure``).
"""
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import ShapeMismatchError, ValidationFailure

FACTOR_KINDS = ("circle", "torus", "interval")
SMALL_FRACTION = 0.25


@dataclass(frozen=True)
class Factor:
    """One axis of the domain.

    circle   -> [0, L) with periodic identification
    torus    -> [-L/2, L/2) with periodic identification (flat torus factor)
    interval -> [a, b]
    """
    kind: str
    length: float = 1.0
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        if self.kind not in FACTOR_KINDS:
            raise ValidationFailure(f"unknown domain factor kind '{self.kind}'")
        if self.kind == "interval":
            if not self.lower < self.upper:
                raise ValidationFailure(
                    f"degenerate interval [{self.lower}, {self.upper}]: need a < b")
        elif not self.length > 0:
            raise ValidationFailure(f"{self.kind} factor needs a positive length")

    @property
    def periodic(self) -> bool:
        return self.kind != "interval"

    @property
    def start(self) -> float:
        if self.kind == "circle":
            return 0.0
        if self.kind == "torus":
            return -self.length / 2
        return self.lower

    @property
    def extent(self) -> float:
        return self.length if self.periodic else self.upper - self.lower

    def centers(self, cells: int) -> np.ndarray:
        h = self.extent / cells
        return self.start + (np.arange(cells) + 0.5) * h


@dataclass(frozen=True, eq=False)
class SampleSpace:
    factors: Tuple[Factor, ...]
    shape: Tuple[int, ...]
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if len(self.factors) != len(self.shape):
            raise ShapeMismatchError("one resolution entry is needed per domain factor")
        if self.points.shape != (self.size, len(self.factors)):
            raise ShapeMismatchError("points do not match the grid shape")
        if self.weights.shape != (self.size,):
            raise ShapeMismatchError("weights do not match the grid shape")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights <= 0):
            # no nonempty open set may have measure zero
            raise ValidationFailure("every cell weight must be finite and positive")

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def dim(self) -> int:
        return len(self.factors)

    @property
    def resolution(self) -> Tuple[int, ...]:
        return self.shape

    @cached_property
    def spacing(self) -> np.ndarray:
        return np.array([f.extent / n for f, n in zip(self.factors, self.shape)])

    @property
    def cell_diameter(self) -> float:
        return float(np.sqrt(np.sum(self.spacing ** 2)))

    @cached_property
    def total_measure(self) -> float:
        return float(np.sum(self.weights))

    @property
    def periodic(self) -> Tuple[bool, ...]:
        return tuple(f.periodic for f in self.factors)

    def axis(self, k: int) -> np.ndarray:
        return self.factors[k].centers(self.shape[k])

    def grid_index(self, cell: int) -> Tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(cell, self.shape))

    def coordinate(self, k: int) -> np.ndarray:
        """Coordinate ``x_{k+1}`` at every sample point."""
        return self.points[:, k]


@dataclass(frozen=True, eq=False)
class DensityMeasure:
    base: SampleSpace
    density: np.ndarray

    def __post_init__(self):
        if self.density.shape != (self.base.size,):
            raise ShapeMismatchError("density must have one value per cell")
        if not np.all(np.isfinite(self.density)):
            raise ValidationFailure("density values must be finite")
        if np.any(self.density < 0):
            raise ValidationFailure("density values must be nonnegative")

    @classmethod
    def uniform(cls, space: SampleSpace) -> "DensityMeasure":
        return cls(space, np.ones(space.size))

    @cached_property
    def weights(self) -> np.ndarray:
        """nu-measure of every cell."""
        return self.density * self.base.weights

    @cached_property
    def total(self) -> float:
        return float(np.sum(self.weights))

    @cached_property
    def support(self) -> np.ndarray:
        return self.density > 0


def build_grid(factors: Sequence[Factor], resolution: Union[int, Sequence[int]],
               density: Optional[np.ndarray] = None) -> SampleSpace:
    """Uniform cell-center grid over the product of ``factors``.

    ``density`` (one positive value per cell, C order) rescales the cell
    weights when the base measure is not the uniform one.
    """
    factors = tuple(factors)
    if not factors:
        raise ValidationFailure("the domain needs at least one factor")
    if np.isscalar(resolution):
        resolution = [int(resolution)] * len(factors)
    shape = tuple(int(n) for n in resolution)
    if len(shape) != len(factors):
        raise ShapeMismatchError(
            f"{len(shape)} resolution entries given for {len(factors)} factors")
    if any(n < 1 for n in shape):
        raise ValidationFailure("resolution must be at least 1 cell per axis")

    axes = [f.centers(n) for f, n in zip(factors, shape)]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    cell_volume = float(np.prod([f.extent / n for f, n in zip(factors, shape)]))
    weights = np.full(points.shape[0], cell_volume)
    if density is not None:
        density = np.asarray(density, dtype=float).ravel()
        if density.shape != weights.shape:
            raise ShapeMismatchError("base density must have one value per cell")
        weights = weights * density
    return SampleSpace(factors, shape, points, weights)


def region_mask(space: SampleSpace, lower: Sequence[float],
                upper: Sequence[float]) -> np.ndarray:
    """Cells meeting the box [lower, upper]; partial cells are rounded outward.

    Periodic axes are handled modulo their length, so a box may wrap around.
    """
    if len(lower) != space.dim or len(upper) != space.dim:
        raise ShapeMismatchError("region bounds need one entry per domain factor")
    mask = np.ones(space.shape, dtype=bool)
    for k, (factor, lo, hi) in enumerate(zip(space.factors, lower, upper)):
        if hi < lo:
            raise ValidationFailure(f"region bound {lo} > {hi} on axis {k + 1}")
        h = space.spacing[k]
        tol = 1e-9 * h
        c = space.axis(k)
        if factor.periodic:
            if hi - lo >= factor.length:
                inside = np.ones_like(c, dtype=bool)
            else:
                mid = 0.5 * (lo + hi)
                dist = np.abs((c - mid + factor.length / 2) % factor.length - factor.length / 2)
                inside = dist < 0.5 * (hi - lo) + 0.5 * h - tol
        else:
            inside = (c + 0.5 * h > lo + tol) & (c - 0.5 * h < hi - tol)
        shape = [1] * space.dim
        shape[k] = -1
        mask &= inside.reshape(shape)
    return mask.ravel()


def restrict_measure(space: SampleSpace,
                     indicator_or_density: Union[np.ndarray, Sequence[float]]) -> DensityMeasure:
    """Measure g dmu for a cell indicator (bool) or a density (float) array."""
    values = np.asarray(indicator_or_density)
    if values.dtype == bool:
        values = values.astype(float)
    values = values.astype(float).ravel()
    if values.shape != (space.size,):
        raise ShapeMismatchError("restriction needs one value per cell")
    if np.any(values < 0):
        raise ValidationFailure("restriction density has a negative entry")
    return DensityMeasure(space, values)


def integrate(space: SampleSpace, nu: Optional[DensityMeasure],
              field: np.ndarray) -> complex:
    """Sum of field(xi_j) * g_j * w_j over all cells."""
    field = np.asarray(field)
    if field.shape != (space.size,):
        raise ShapeMismatchError("integrand must have one value per cell")
    if not np.all(np.isfinite(field)):
        raise ValidationFailure("integrand has a non-finite value")
    weights = space.weights if nu is None else nu.weights
    return complex(np.sum(field * weights))


def _neighbours(values: np.ndarray, axis: int, periodic: bool) -> List[np.ndarray]:
    if periodic:
        return [np.roll(values, 1, axis=axis), np.roll(values, -1, axis=axis)]
    pad = [(0, 0)] * values.ndim
    pad[axis] = (1, 1)
    padded = np.pad(values, pad, constant_values=np.inf)
    n = values.shape[axis]
    return [np.take(padded, np.arange(0, n), axis=axis),
            np.take(padded, np.arange(2, n + 2), axis=axis)]


def vanishing_mask(space: SampleSpace, values: np.ndarray, floor: float,
                   c_grid: float = 1.0, relative: float = SMALL_FRACTION) -> np.ndarray:
    """Cells where a nonnegative field vanishes up to the grid resolution.

    A cell is flagged when its value is at most ``floor``, or when it is a
    minimum along some axis, its value is at most ``c_grid`` times the
    largest jump to a neighbour on that axis (so the field may reach zero
    inside the cell) and at most ``relative`` times the field's supremum.
    Non-finite values are never flagged.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (space.size,):
        raise ShapeMismatchError("vanishing test needs one value per cell")
    grid = values.reshape(space.shape)
    finite = np.isfinite(grid)
    flagged = finite & (grid <= floor)
    sup = float(np.max(np.abs(grid[finite]))) if finite.any() else 0.0
    small = finite & (grid <= relative * sup)
    for axis, periodic in enumerate(space.periodic):
        if space.shape[axis] < 2:
            continue
        left, right = _neighbours(grid, axis, periodic)
        with np.errstate(invalid="ignore"):
            is_min = (grid <= left) & (grid <= right)
            jumps = np.stack([np.where(np.isfinite(nb), np.abs(nb - grid), 0.0)
                              for nb in (left, right)])
        jump = np.nanmax(jumps, axis=0)
        flagged |= small & is_min & (grid <= c_grid * jump)
    return flagged.ravel()
