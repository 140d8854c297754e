"""Periodic lattice standing in for R^N, geometric masks and quadrature.

All spatial operators act on the trailing ``dim`` axes of an array, so a
stack of fields (paths, time nodes, ...) can be processed in one call.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    dim: int
    extent: float
    points_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise GridError(f"dim must be 1 or 2, got {self.dim}")
        if not self.extent > 0:
            raise GridError(f"extent must be positive, got {self.extent}")
        n = self.points_per_axis
        if n < 8 or n % 2:
            raise GridError(f"points_per_axis must be even and >= 8, got {n}")

    @property
    def spacing(self) -> float:
        return self.extent / self.points_per_axis

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def axis(self) -> np.ndarray:
        """Node coordinates along one axis; index n/2 is the origin."""
        n = self.points_per_axis
        return (np.arange(n) - n // 2) * self.spacing

    @property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis] * self.dim), indexing="ij"))

    def displacement(self, center) -> np.ndarray:
        """Torus displacement x - center, shape (dim, *shape), each component in [-L/2, L/2]."""
        c = np.broadcast_to(np.asarray(center, dtype=float), (self.dim,))
        out = []
        for xi, ci in zip(self.coords, c):
            d = xi - ci
            out.append(d - self.extent * np.round(d / self.extent))
        return np.stack(out)

    def distance(self, center) -> np.ndarray:
        d = self.displacement(center)
        return np.sqrt(np.sum(d * d, axis=0))

    def check_field(self, f: np.ndarray) -> None:
        if np.shape(f)[np.ndim(f) - self.dim:] != self.shape:
            raise GridError(f"field of shape {np.shape(f)} does not live on grid {self.shape}")

    def integrate(self, f, mask: "Mask | None" = None):
        """Sum of values times h^dim over the trailing spatial axes."""
        f = np.asarray(f, dtype=float)
        self.check_field(f)
        if mask is not None:
            if mask.grid != self:
                raise GridError("mask lives on a different grid")
            f = f * mask.values
        axes = tuple(range(f.ndim - self.dim, f.ndim))
        return np.sum(f, axis=axes) * self.cell_volume

    def laplacian(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        self.check_field(f)
        out = np.zeros_like(f)
        for ax in range(f.ndim - self.dim, f.ndim):
            out += np.roll(f, 1, axis=ax) + np.roll(f, -1, axis=ax) - 2.0 * f
        return out / self.spacing**2

    def gradient(self, f) -> np.ndarray:
        """Centered differences, shape (dim, *f.shape)."""
        f = np.asarray(f, dtype=float)
        self.check_field(f)
        comps = [
            (np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2.0 * self.spacing)
            for ax in range(f.ndim - self.dim, f.ndim)
        ]
        return np.stack(comps)

    def laplacian_symbol(self) -> np.ndarray:
        """Eigenvalues of the periodic second-difference Laplacian on the rfftn layout (all <= 0)."""
        n, h = self.points_per_axis, self.spacing
        full = -(2.0 / h**2) * (1.0 - np.cos(2.0 * np.pi * np.fft.fftfreq(n)))
        half = -(2.0 / h**2) * (1.0 - np.cos(2.0 * np.pi * np.fft.rfftfreq(n)))
        axes = [full] * (self.dim - 1) + [half]
        grids = np.meshgrid(*axes, indexing="ij")
        return sum(grids)

    def wavenumber_squared(self) -> np.ndarray:
        """|k|^2 of the continuous Laplacian on the rfftn layout."""
        n, L = self.points_per_axis, self.extent
        full = (2.0 * np.pi * np.fft.fftfreq(n, d=L / n)) ** 2
        half = (2.0 * np.pi * np.fft.rfftfreq(n, d=L / n)) ** 2
        axes = [full] * (self.dim - 1) + [half]
        grids = np.meshgrid(*axes, indexing="ij")
        return sum(grids)

    def full_mask(self) -> "Mask":
        return Mask(self, np.ones(self.shape, dtype=bool))

    def inner_half_mask(self) -> "Mask":
        """Nodes with every coordinate in [-L/4, L/4]; used for mass-leak reporting."""
        inside = np.ones(self.shape, dtype=bool)
        for xi in self.coords:
            inside &= np.abs(xi) <= self.extent / 4
        return Mask(self, inside)


def make_grid(dim: int, extent: float, points_per_axis: int) -> Grid:
    return Grid(int(dim), float(extent), int(points_per_axis))


@dataclass(frozen=True, eq=False)
class Mask:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.shape or self.values.dtype != bool:
            raise GridError("mask must be a boolean array of the grid shape")

    @property
    def count(self) -> int:
        return int(self.values.sum())

    @property
    def measure(self) -> float:
        return self.count * self.grid.cell_volume

    def __or__(self, other: "Mask") -> "Mask":
        if other.grid != self.grid:
            raise GridError("masks live on different grids")
        return Mask(self.grid, self.values | other.values)

    def __and__(self, other: "Mask") -> "Mask":
        if other.grid != self.grid:
            raise GridError("masks live on different grids")
        return Mask(self.grid, self.values & other.values)

    def __invert__(self) -> "Mask":
        return Mask(self.grid, ~self.values)

    def issubset(self, other: "Mask") -> bool:
        return bool(np.all(other.values[self.values]))


# Guards against nodes sitting exactly on a sphere being lost to rounding.
_EDGE = 1e-9


def ball_mask(grid: Grid, center, radius: float) -> Mask:
    if radius < 0 or radius >= grid.extent / 2:
        raise GridError(f"radius must lie in [0, L/2), got {radius}")
    inside = grid.distance(center) <= radius + _EDGE * grid.spacing
    return Mask(grid, inside)


def cube_mask(grid: Grid, center, half_side: float) -> Mask:
    """Closed axis-aligned cube of side 2*half_side, i.e. the smallest cube holding B_half_side."""
    if half_side < 0 or half_side >= grid.extent / 2:
        raise GridError(f"half side must lie in [0, L/2), got {half_side}")
    d = np.abs(grid.displacement(center))
    return Mask(grid, np.all(d <= half_side + _EDGE * grid.spacing, axis=0))


def union(masks: Sequence[Mask]) -> Mask:
    out = masks[0]
    for m in masks[1:]:
        out = out | m
    return out


@dataclass(frozen=True, eq=False)
class Tiling:
    grid: Grid
    half_side: float
    centers: list[tuple[float, ...]]
    masks: list[Mask] = field(repr=False)

    def __len__(self) -> int:
        return len(self.centers)

    def indicator_sum(self) -> np.ndarray:
        return np.sum([m.values.astype(int) for m in self.masks], axis=0)

    def balls(self, radius: float) -> Mask:
        """Union of B_radius(x_i) over all cube centers."""
        return union([ball_mask(self.grid, c, radius) for c in self.centers])


def cube_tiling(grid: Grid, R: float) -> Tiling:
    """Partition the torus into cubes of side 2R centred on the lattice 2R*Z^dim.

    Each node goes to exactly one cube: per axis the cube around c owns [c - R, c + R).
    """
    if R <= 0:
        raise GridError("R must be positive")
    L, h = grid.extent, grid.spacing
    k = int(round(L / (2 * R)))
    if k < 1 or abs(k * 2 * R - L) > h:
        raise GridError(f"cube side 2R={2 * R} is not commensurate with extent {L}")
    side = L / k
    if side / h < 2:
        raise GridError("each cube must contain at least two nodes per axis")
    idx = []
    for xi in grid.coords:
        j = np.floor((xi + side / 2) / side + _EDGE).astype(int) % k
        idx.append(j)
    centers, masks = [], []
    for combo in np.ndindex(*([k] * grid.dim)):
        sel = np.ones(grid.shape, dtype=bool)
        for j, c in zip(idx, combo):
            sel &= j == c
        cen = tuple(float(((c + k // 2) % k - k // 2) * side) for c in combo)
        centers.append(cen)
        masks.append(Mask(grid, sel))
    return Tiling(grid, side / 2, centers, masks)
