"""Domain geometry and the value types shared by every other module.

Natural units throughout: c = mu0 = eps0 = 1, so k0 = 2*pi/wavelength and all
lengths are expressed in grid-length units.  Arrays are row-major with axis 0
as the row (y) index and axis 1 as the column (x) index.  All value objects
are immutable after construction: their numpy buffers are copied on the way
in and marked read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

MIN_CELLS_PER_AXIS = 8


def _frozen(arr: np.ndarray, dtype=None) -> np.ndarray:
    out = np.array(arr, dtype=dtype, order="C", copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class GridSpec:
    """Uniform 2D grid: cell counts per axis, pitch, and physical origin."""

    shape: tuple[int, int]
    spacing: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        if len(shape) != 2:
            raise ValidationError(f"grid shape must have 2 entries, got {len(shape)}")
        if any(n < MIN_CELLS_PER_AXIS for n in shape):
            raise ValidationError(f"every shape entry must be >= {MIN_CELLS_PER_AXIS}, got {shape}")
        if len(self.origin) != 2:
            raise ValidationError("origin must have 2 entries")
        if not (self.spacing > 0):
            raise ValidationError(f"spacing must be > 0, got {self.spacing}")

    @property
    def cell_count(self) -> int:
        return self.shape[0] * self.shape[1]


@dataclass(frozen=True, eq=False)
class DesignGrid:
    """Relative-permittivity distribution over the design region.

    ``eps`` holds one value per masked cell in row-major cell order; cells
    outside ``mask`` are background (eps = 1).  Bounds are inclusive and the
    vacuum floor eps_min >= 1 always applies.
    """

    grid: GridSpec
    eps: np.ndarray
    eps_min: float
    eps_max: float
    mask: np.ndarray

    def __post_init__(self):
        mask = _frozen(self.mask, dtype=bool)
        eps = _frozen(self.eps, dtype=np.float64)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "eps", eps)
        if mask.shape != self.grid.shape:
            raise ValidationError(f"mask shape {mask.shape} != grid shape {self.grid.shape}")
        if eps.ndim != 1 or eps.size != int(mask.sum()):
            raise ValidationError(f"eps length {eps.size} != mask cell count {int(mask.sum())}")
        if self.eps_min < 1.0:
            raise ValidationError(f"eps_min must be >= 1 (vacuum floor), got {self.eps_min}")
        if self.eps_max < self.eps_min:
            raise ValidationError("eps_max must be >= eps_min")

    def in_bounds(self, tol: float = 1e-12) -> bool:
        """True when every eps value lies in [eps_min, eps_max].

        Out-of-range values are representable so that clamp_design can fix
        them; consumers that need the bounds invariant check this flag.
        """
        if self.eps.size == 0:
            return True
        return bool(self.eps.min() >= self.eps_min - tol and self.eps.max() <= self.eps_max + tol)

    def eps_image(self) -> np.ndarray:
        """Full-grid permittivity map with background 1 outside the mask."""
        img = np.ones(self.grid.shape, dtype=np.float64)
        img[self.mask] = self.eps
        return img

    def with_eps(self, eps: np.ndarray) -> "DesignGrid":
        return DesignGrid(self.grid, eps, self.eps_min, self.eps_max, self.mask)


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Complex scalar electric field over all simulation cells at one wavelength."""

    grid: GridSpec
    values: np.ndarray
    wavelength: float

    def __post_init__(self):
        values = _frozen(self.values, dtype=np.complex128)
        object.__setattr__(self, "values", values)
        if values.shape != self.grid.shape:
            raise ValidationError(f"field shape {values.shape} != grid shape {self.grid.shape}")
        if not (self.wavelength > 0):
            raise ValidationError(f"wavelength must be > 0, got {self.wavelength}")


@dataclass(frozen=True, eq=False)
class GradientField:
    """Per-cell objective sensitivity dJ/deps over the design region.

    ``values`` follows the same masked row-major layout as DesignGrid.eps and
    must be finite everywhere.
    """

    grid: GridSpec
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        mask = _frozen(self.mask, dtype=bool)
        values = _frozen(self.values, dtype=np.float64)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "values", values)
        if mask.shape != self.grid.shape:
            raise ValidationError(f"mask shape {mask.shape} != grid shape {self.grid.shape}")
        if values.ndim != 1 or values.size != int(mask.sum()):
            raise ValidationError(f"gradient length {values.size} != mask cell count {int(mask.sum())}")
        if values.size and not np.all(np.isfinite(values)):
            raise ValidationError("gradient contains NaN or Inf")

    def image(self) -> np.ndarray:
        """Full-grid map with zeros outside the design mask."""
        img = np.zeros(self.grid.shape, dtype=np.float64)
        img[self.mask] = self.values
        return img


def clamp_design(design: DesignGrid) -> DesignGrid:
    """Project eps onto [eps_min, eps_max]; in-range values pass through."""
    return design.with_eps(np.clip(design.eps, design.eps_min, design.eps_max))
