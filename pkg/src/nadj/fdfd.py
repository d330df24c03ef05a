"""Frequency-domain solver for the scalar 2D Helmholtz equation (TM analog).

The continuous problem with stretched-coordinate PML is

    (1/sx) d/dx ((1/sx) dE/dx) + (1/sy) d/dy ((1/sy) dE/dy) + k0^2 eps E
        = -i omega J,

with complex stretch s = 1 + i sigma/omega and sigma graded polynomially to
max_conductivity over the PML thickness.  Multiplying each row by sx*sy gives
the divergence form

    d/dx ((sy/sx) dE/dx) + d/dy ((sx/sy) dE/dy) + k0^2 eps sx sy E
        = -i omega sx sy J,

which discretizes on the cell-centered grid to a complex-symmetric 5-point
system A e = b (same solution set; the scaling is unity wherever sources and
design cells are allowed to live).  Natural units: omega = k0 = 2 pi / lambda.

Dirichlet boundaries back the PML.  The linear-solve contract is purely
residual based: any method reaching ||Ae - b|| / ||b|| <= 1e-8 is acceptable;
a sparse direct factorization is used here and reused between the forward and
adjoint right-hand sides of one gradient evaluation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache, cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError, ValidationError
from .grid import ComplexField, DesignGrid, GridSpec, _frozen

RESIDUAL_TOL = 1e-8
# round-trip amplitude reflection targeted by the default PML grading
DEFAULT_PML_REFLECTION = 1e-6
MIN_PML_CELLS = 4
_SPLU_OPTIONS = dict(permc_spec="COLAMD")


def pml_max_conductivity(thickness_cells: int, spacing: float, grading_order: int,
                         reflection: float = DEFAULT_PML_REFLECTION) -> float:
    """Conductivity amplitude giving the target theoretical reflection.

    For sigma(u) = sigma_max * (u/L)^p the round-trip amplitude factor is
    exp(-2 * sigma_max * L / (p + 1)), independent of frequency in natural
    units.
    """
    depth = thickness_cells * spacing
    return -(grading_order + 1) * math.log(reflection) / (2.0 * depth)


@dataclass(frozen=True)
class PmlSpec:
    """Perfectly-matched-layer settings shared by all four domain edges."""

    thickness_cells: int = 10
    max_conductivity: float | None = None
    grading_order: int = 2

    def __post_init__(self):
        if self.thickness_cells < MIN_PML_CELLS:
            raise ValidationError(f"PML thickness must be >= {MIN_PML_CELLS} cells")
        if self.grading_order not in (2, 3):
            raise ValidationError(f"PML grading order must be 2 or 3, got {self.grading_order}")
        if self.max_conductivity is not None and not (self.max_conductivity > 0):
            raise ValidationError("max_conductivity must be positive")

    def conductivity(self, spacing: float) -> float:
        if self.max_conductivity is not None:
            return self.max_conductivity
        return pml_max_conductivity(self.thickness_cells, spacing, self.grading_order)


@dataclass(frozen=True, eq=False)
class SourceSpec:
    """Electric current source: complex amplitudes on a set of grid cells."""

    kind: str
    cells: np.ndarray        # [n, 2] (row, col) indices
    amplitudes: np.ndarray   # [n] complex
    wavelength: float

    def __post_init__(self):
        if self.kind not in ("line-current", "mode-injection"):
            raise ValidationError(f"unknown source kind {self.kind!r}")
        cells = _frozen(np.atleast_2d(self.cells), dtype=np.int64)
        amps = _frozen(np.atleast_1d(self.amplitudes), dtype=np.complex128)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "amplitudes", amps)
        if cells.ndim != 2 or cells.shape[1] != 2 or cells.shape[0] == 0:
            raise ValidationError("source needs at least one (row, col) cell")
        if amps.shape[0] != cells.shape[0]:
            raise ValidationError("amplitudes length must match cell count")
        if not (self.wavelength > 0):
            raise ValidationError("source wavelength must be positive")

    def scaled(self, factor: complex) -> "SourceSpec":
        return SourceSpec(self.kind, self.cells, self.amplitudes * factor, self.wavelength)


@dataclass(frozen=True, eq=False)
class HelmholtzSystem:
    """Assembled complex-symmetric system A e = b on one grid."""

    grid: GridSpec
    matrix: sp.csc_matrix
    rhs: np.ndarray
    wavelength: float

    @cached_property
    def _lu(self):
        return spla.splu(self.matrix, **_SPLU_OPTIONS)


def _interior_slice(n: int, thickness: int) -> range:
    return range(thickness, n - thickness)


def _stretch(points: np.ndarray, n_cells: int, pml: PmlSpec, spacing: float,
             omega: float) -> np.ndarray:
    """Complex stretch factors s = 1 + i sigma/omega at the given coordinates.

    ``points`` are in cell units; depth ramps from 0 at the PML interface to 1
    at the outermost cell center on each side.
    """
    t = float(pml.thickness_cells)
    depth = np.maximum(t - points, points - (n_cells - 1 - t)) / t
    depth = np.clip(depth, 0.0, 1.0)
    sigma = pml.conductivity(spacing) * depth ** pml.grading_order
    return 1.0 + 1j * sigma / omega


@lru_cache(maxsize=64)
def _static_parts(grid: GridSpec, pml: PmlSpec, wavelength: float):
    """Geometry-only pieces of the system matrix, reused across designs."""
    height, width = grid.shape
    d2 = grid.spacing ** 2
    omega = 2.0 * math.pi / wavelength
    sx_c = _stretch(np.arange(width, dtype=np.float64), width, pml, grid.spacing, omega)
    sy_c = _stretch(np.arange(height, dtype=np.float64), height, pml, grid.spacing, omega)
    sx_h = _stretch(np.arange(width + 1) - 0.5, width, pml, grid.spacing, omega)
    sy_h = _stretch(np.arange(height + 1) - 0.5, height, pml, grid.spacing, omega)

    # edge weights; wx[i, j] couples cells (i, j-1) <-> (i, j)
    wx = (sy_c[:, None] / sx_h[None, :]) / d2          # [H, W+1]
    wy = (sx_c[None, :] / sy_h[:, None]) / d2          # [H+1, W]

    east = wx[:, 1:].copy()
    east[:, -1] = 0.0                                   # no neighbor past the last column
    east = east.ravel()
    south = wy[1:, :].copy()
    south[-1, :] = 0.0
    south = south.ravel()

    lap_diag = -(wx[:, :-1] + wx[:, 1:] + wy[:-1, :] + wy[1:, :]).ravel()
    sxsy = (sy_c[:, None] * sx_c[None, :]).ravel()
    return east, south, lap_diag, sxsy, omega


def _check_cells_in_interior(cells: np.ndarray, grid: GridSpec, pml: PmlSpec, what: str):
    height, width = grid.shape
    t = pml.thickness_cells
    rows, cols = cells[:, 0], cells[:, 1]
    if rows.min() < 0 or rows.max() >= height or cols.min() < 0 or cols.max() >= width:
        raise ValidationError(f"{what} cells outside grid")
    if rows.min() < t or rows.max() >= height - t or cols.min() < t or cols.max() >= width - t:
        raise ValidationError(f"{what} cells inside PML region")


def assemble(design: DesignGrid, src: SourceSpec, pml: PmlSpec) -> HelmholtzSystem:
    """Build the PML-stretched Helmholtz system for one design and source."""
    grid = design.grid
    height, width = grid.shape
    if 2 * pml.thickness_cells >= min(height, width):
        raise ValidationError("PML layers overlap: grid too small for thickness")
    lam = src.wavelength
    if lam <= 2.0 * grid.spacing:
        raise ValidationError(
            f"wavelength {lam} under-resolved: need > 2 cells per wavelength"
        )
    if lam < 10.0 * grid.spacing:
        warnings.warn(
            f"wavelength {lam} resolved by fewer than 10 cells; expect dispersion error",
            stacklevel=2,
        )
    # design region must live strictly inside the PML frame
    if design.mask.any():
        mask_cells = np.argwhere(design.mask)
        _check_cells_in_interior(mask_cells, grid, pml, "design mask")
    _check_cells_in_interior(src.cells, grid, pml, "source")

    east, south, lap_diag, sxsy, omega = _static_parts(grid, pml, lam)
    k0sq = omega * omega
    diag = lap_diag + k0sq * sxsy * design.eps_image().ravel()

    n = grid.cell_count
    matrix = sp.diags(
        [diag, east[:-1], east[:-1], south[:-width], south[:-width]],
        [0, 1, -1, width, -width],
        shape=(n, n),
        format="csc",
        dtype=np.complex128,
    )
    rhs = np.zeros(n, dtype=np.complex128)
    flat = src.cells[:, 0] * width + src.cells[:, 1]
    rhs[flat] = -1j * omega * sxsy[flat] * src.amplitudes
    return HelmholtzSystem(grid, matrix, rhs, lam)


def solve(system: HelmholtzSystem, rhs: np.ndarray | None = None) -> ComplexField:
    """Solve A e = b to a relative residual of 1e-8 or raise SolverError."""
    b = system.rhs if rhs is None else np.asarray(rhs, dtype=np.complex128)
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        values = np.zeros(system.grid.shape, dtype=np.complex128)
        return ComplexField(system.grid, values, system.wavelength)
    e = system._lu.solve(b)
    residual = np.linalg.norm(system.matrix @ e - b) / b_norm
    if not (residual <= RESIDUAL_TOL):
        raise SolverError(
            f"linear solve did not reach residual {RESIDUAL_TOL:g}; achieved {residual:.3e}",
            residual=float(residual),
        )
    return ComplexField(system.grid, e.reshape(system.grid.shape), system.wavelength)


def plane_wave_source(grid: GridSpec, row: int, wavelength: float, pml: PmlSpec) -> SourceSpec:
    """Uniform line current across the interior width of one row."""
    height, width = grid.shape
    t = pml.thickness_cells
    if not (t <= row < height - t):
        raise ValidationError(f"source row {row} inside PML (thickness {t})")
    cols = np.arange(t, width - t)
    cells = np.stack([np.full_like(cols, row), cols], axis=1)
    return SourceSpec("line-current", cells, np.ones(cols.size, dtype=np.complex128), wavelength)


def mode_injection_source(grid: GridSpec, row: int, profile: np.ndarray,
                          wavelength: float, pml: PmlSpec) -> SourceSpec:
    """Line current shaped like a transverse mode profile on one interior row."""
    height, width = grid.shape
    t = pml.thickness_cells
    if not (t <= row < height - t):
        raise ValidationError(f"source row {row} inside PML (thickness {t})")
    profile = np.asarray(profile, dtype=np.complex128)
    cols = np.arange(t, width - t)
    if profile.shape[0] != cols.size:
        raise ValidationError(
            f"mode profile length {profile.shape[0]} != interior width {cols.size}"
        )
    cells = np.stack([np.full_like(cols, row), cols], axis=1)
    return SourceSpec("mode-injection", cells, profile, wavelength)


def system_to_tensors(system: HelmholtzSystem) -> dict[str, np.ndarray]:
    """COO-triplet view of the system for .nadj serialization."""
    coo = system.matrix.tocoo()
    return {
        "rows": coo.row.astype(np.float64),
        "cols": coo.col.astype(np.float64),
        "values": coo.data.astype(np.complex128),
        "rhs": system.rhs.astype(np.complex128),
    }
