"""Tensor-product phase-space grids, coordinate maps and velocity quadrature."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PERIODIC = "periodic"
BOUNDED = "bounded"


@dataclass(frozen=True)
class AxisSpec:
    """One grid axis.

    Periodic axes store ``count`` nodes at ``lo + i*h`` with ``h = (hi-lo)/count``
    (the right endpoint is not duplicated, matching FFT layout).  Bounded axes
    include both endpoints, ``h = (hi-lo)/(count-1)``.
    """

    lo: float
    hi: float
    count: int
    boundary: str = BOUNDED

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"axis needs hi > lo, got [{self.lo}, {self.hi}]")
        if self.count < 2:
            raise ValueError(f"axis needs count >= 2, got {self.count}")
        if self.boundary not in (PERIODIC, BOUNDED):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    @property
    def periodic(self) -> bool:
        return self.boundary == PERIODIC

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def h(self) -> float:
        if self.periodic:
            return self.length / self.count
        return self.length / (self.count - 1)

    @property
    def ncells(self) -> int:
        """Number of interpolation cells (== count for periodic axes)."""
        return self.count if self.periodic else self.count - 1

    def nodes(self) -> np.ndarray:
        if self.periodic:
            return self.lo + self.h * np.arange(self.count)
        return np.linspace(self.lo, self.hi, self.count)

    def node(self, i: int) -> float:
        if i < 0 or i >= self.count:
            raise IndexError(f"node index {i} out of range for count {self.count}")
        if self.periodic:
            return self.lo + i * self.h
        if i == self.count - 1:
            return self.hi
        return self.lo + i * self.h

    def wrap(self, x):
        """Map x into [lo, hi) modulo the period.  Periodic axes only."""
        if not self.periodic:
            raise ValueError("wrap is only defined for periodic axes")
        return wrap_periodic(x, self)

    def nearest_index(self, x) -> np.ndarray:
        """Index of the closest node (periodic distance for periodic axes)."""
        i = np.rint((np.asarray(x) - self.lo) / self.h).astype(np.int64)
        if self.periodic:
            return i % self.count
        return np.clip(i, 0, self.count - 1)


def wrap_periodic(x, axis: AxisSpec):
    """Wrap coordinate(s) into [axis.lo, axis.hi); total on reals, idempotent."""
    L = axis.length
    y = x - L * np.floor((x - axis.lo) / L)
    # floating fold-down can land exactly on hi; map that representative to lo
    return np.where(y >= axis.hi, y - L, y) if isinstance(y, np.ndarray) else (
        y - L if y >= axis.hi else y
    )


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Spatial x velocity tensor-product grid (1D1V or 2D2V)."""

    spatial: tuple[AxisSpec, ...]
    velocity: tuple[AxisSpec, ...]

    def __post_init__(self):
        if len(self.spatial) != len(self.velocity):
            raise ValueError("spatial and velocity dimensionality must match")
        if len(self.spatial) not in (1, 2):
            raise ValueError("only 1D1V and 2D2V grids are supported")
        for ax in self.velocity:
            if ax.periodic:
                raise ValueError("velocity axes must be bounded")

    @property
    def dim(self) -> int:
        return len(self.spatial)

    @property
    def n_spatial(self) -> int:
        return int(np.prod([ax.count for ax in self.spatial]))

    @property
    def n_velocity(self) -> int:
        return int(np.prod([ax.count for ax in self.velocity]))

    @property
    def total_points(self) -> int:
        return self.n_spatial * self.n_velocity

    @property
    def spatial_cell_volume(self) -> float:
        return float(np.prod([ax.h for ax in self.spatial]))

    def spatial_nodes(self) -> tuple[np.ndarray, ...]:
        """Flattened spatial node coordinates, row-major over the axes."""
        axes = [ax.nodes() for ax in self.spatial]
        if self.dim == 1:
            return (axes[0],)
        X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
        return X.ravel(), Y.ravel()

    def velocity_nodes(self) -> tuple[np.ndarray, ...]:
        """Flattened velocity node coordinates, row-major over the axes."""
        axes = [ax.nodes() for ax in self.velocity]
        if self.dim == 1:
            return (axes[0],)
        U, W = np.meshgrid(axes[0], axes[1], indexing="ij")
        return U.ravel(), W.ravel()


def node_coordinate(grid: PhaseSpaceGrid, multi_index: tuple[int, ...]) -> tuple[float, ...]:
    """Coordinates (x..., v...) of a grid node given its per-axis indices."""
    axes = grid.spatial + grid.velocity
    if len(multi_index) != len(axes):
        raise IndexError(
            f"expected {len(axes)} indices, got {len(multi_index)}"
        )
    return tuple(ax.node(i) for ax, i in zip(axes, multi_index))


def velocity_quadrature_weights(grid: PhaseSpaceGrid, rule: str = "trapezoid") -> np.ndarray:
    """Quadrature weights on the flattened velocity grid.

    ``trapezoid`` (default) halves the endpoint weights, so the weights sum to
    the exact domain measure; ``midpoint`` keeps the bare h_v weight at every
    node for comparison runs against rectangle-rule codes.
    """
    if rule not in ("trapezoid", "midpoint"):
        raise ValueError(f"unknown quadrature rule {rule!r}")
    per_axis = []
    for ax in grid.velocity:
        w = np.full(ax.count, ax.h)
        if rule == "trapezoid":
            w[0] *= 0.5
            w[-1] *= 0.5
        per_axis.append(w)
    if grid.dim == 1:
        return per_axis[0]
    return np.outer(per_axis[0], per_axis[1]).ravel()
