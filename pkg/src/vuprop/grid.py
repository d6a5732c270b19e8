"""Uniform midpoint-rule grids over the joint (x, alpha) input space.

A grid is flattened row-major with the first dimension varying slowest, so
listing data-like dimensions before parameter-like ones gives contiguous
alpha-blocks per x node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GridError


@dataclass(frozen=True)
class Dim:
    """One grid dimension: half-open cells on [lower, upper] with midpoint nodes."""

    name: str
    lower: float
    upper: float
    count: int
    role: str = "x"  # "x" (data-like) or "alpha" (parameter-like)

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise GridError(f"dimension {self.name!r}: bounds must be finite")
        if self.lower >= self.upper:
            raise GridError(
                f"dimension {self.name!r}: lower ({self.lower}) must be < upper ({self.upper})"
            )
        if self.count < 1:
            raise GridError(f"dimension {self.name!r}: count must be >= 1, got {self.count}")
        if self.role not in ("x", "alpha"):
            raise GridError(f"dimension {self.name!r}: role must be 'x' or 'alpha'")

    @property
    def step(self) -> float:
        return (self.upper - self.lower) / self.count

    def nodes(self) -> np.ndarray:
        # Centered construction: node_i = center + (2i + 1 - count) * step/2.
        # Equal to lower + (i + 0.5)*step, but makes symmetric grids exactly
        # antisymmetric about their center in floating point.
        center = 0.5 * (self.lower + self.upper)
        offsets = 2 * np.arange(self.count, dtype=np.int64) + 1 - self.count
        return center + offsets * (self.step / 2.0)


@dataclass(frozen=True)
class GridSpec:
    dims: tuple[Dim, ...]

    def __post_init__(self):
        if not self.dims:
            raise GridError("grid needs at least one dimension")
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise GridError(f"duplicate dimension names: {names}")

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(d.count for d in self.dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts, dtype=np.int64))

    @property
    def ndim(self) -> int:
        return len(self.dims)

    def x_dims(self) -> tuple[Dim, ...]:
        return tuple(d for d in self.dims if d.role == "x")

    def alpha_dims(self) -> tuple[Dim, ...]:
        return tuple(d for d in self.dims if d.role == "alpha")


class Grid:
    """Realized grid: node coordinates, per-dimension steps, cell volume."""

    def __init__(self, spec: GridSpec):
        self.spec = spec
        self.axes = [d.nodes() for d in spec.dims]
        self.steps = np.array([d.step for d in spec.dims])
        self.cell_volume = float(np.prod(self.steps))
        mesh = np.meshgrid(*self.axes, indexing="ij")
        # (N, ndim), row-major: first dimension slowest.
        self.nodes = np.stack([m.ravel() for m in mesh], axis=-1)

    @property
    def size(self) -> int:
        return self.spec.size

    @property
    def ndim(self) -> int:
        return self.spec.ndim

    def column(self, d: int) -> np.ndarray:
        """Coordinate of every node along dimension d, in flat order."""
        return self.nodes[:, d]

    def __repr__(self):
        dims = ", ".join(
            f"{d.name}[{d.lower}, {d.upper}]x{d.count}" for d in self.spec.dims
        )
        return f"Grid({dims})"


def make_grid(spec: GridSpec) -> Grid:
    return Grid(spec)


def flat_index(grid: Grid, multi_index) -> int:
    """Row-major flat index of a multi-index; rejects out-of-range components."""
    counts = grid.spec.counts
    multi = tuple(int(m) for m in multi_index)
    if len(multi) != len(counts):
        raise GridError(f"multi-index has {len(multi)} components, grid has {len(counts)}")
    for d, (m, c) in enumerate(zip(multi, counts)):
        if not 0 <= m < c:
            raise GridError(f"multi-index component {d} = {m} outside [0, {c})")
    return int(np.ravel_multi_index(multi, counts))


def multi_index(grid: Grid, flat: int) -> tuple[int, ...]:
    """Inverse of flat_index."""
    if not 0 <= flat < grid.size:
        raise GridError(f"flat index {flat} outside [0, {grid.size})")
    return tuple(int(i) for i in np.unravel_index(flat, grid.spec.counts))
