"""Figure-of-merit definitions and their adjoint current sources.

Three objective families over the solved field E:

* Focus:       J = sum_{r in V_f} |E(r)|^2 * dA            (single wavelength)
* Sort:        J = sum_k sum_{r in R_k} |E(r; lam_k)|^2 * dA
* ModeOverlap: J = |sum_{r in S_out} E(r) psi*(r) * dx|^2

Discrete sums weight by the cell area dA = spacing^2 (2D regions) or by the
spacing (line cross-sections).

Adjoint sources: for A e = b with b = -i omega J_src, the sensitivity chain
requires the adjoint field u = A^{-1} (dJ/dE).  Driving the solver with a
current of amplitude

    a(r) = dJ/dE(r) * i / omega

produces exactly u, so the gradient combiner in the adjoint engine can use a
single real constant per wavelength.  dJ/dE is conj(E) * dA on the region for
intensity objectives and conj(overlap) * psi* * dx on the cross-section for
mode overlap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ValidationError
from .fdfd import SourceSpec
from .grid import ComplexField, _frozen
from .modes import ModeProfile


def _check_region(cells: np.ndarray, what: str) -> np.ndarray:
    cells = _frozen(np.atleast_2d(cells), dtype=np.int64)
    if cells.ndim != 2 or cells.shape[1] != 2 or cells.shape[0] == 0:
        raise ValidationError(f"{what} must be a nonempty list of (row, col) cells")
    return cells


@dataclass(frozen=True, eq=False)
class FocusFom:
    """Field intensity integrated over a focal region at one wavelength."""

    region: np.ndarray
    wavelength: float

    kind = "Focus"

    def __post_init__(self):
        object.__setattr__(self, "region", _check_region(self.region, "focal region"))

    def wavelengths(self) -> tuple[float, ...]:
        return (self.wavelength,)


@dataclass(frozen=True, eq=False)
class SortFom:
    """Per-wavelength intensity in wavelength-specific target regions."""

    channels: tuple[tuple[float, np.ndarray], ...]

    kind = "Sort"

    def __post_init__(self):
        channels = tuple(
            (float(lam), _check_region(region, f"channel {k} region"))
            for k, (lam, region) in enumerate(self.channels)
        )
        object.__setattr__(self, "channels", channels)
        lams = [lam for lam, _ in channels]
        if len(set(lams)) != len(lams):
            raise ValidationError("sort channels must have pairwise-distinct wavelengths")
        if not channels:
            raise ValidationError("sort objective needs at least one channel")

    def wavelengths(self) -> tuple[float, ...]:
        return tuple(lam for lam, _ in self.channels)


@dataclass(frozen=True, eq=False)
class ModeOverlapFom:
    """Squared modal overlap with a target profile on a cross-section line."""

    cross_section: np.ndarray
    target_mode_index: int
    wavelength: float
    mode: ModeProfile

    kind = "ModeOverlap"

    def __post_init__(self):
        cells = _check_region(self.cross_section, "cross-section")
        object.__setattr__(self, "cross_section", cells)
        rows, cols = cells[:, 0], cells[:, 1]
        if not (np.all(rows == rows[0]) or np.all(cols == cols[0])):
            raise ValidationError("cross-section cells must be collinear")
        if self.target_mode_index < 0:
            raise ValidationError("target_mode_index must be >= 0")
        if self.mode.values.shape[0] != cells.shape[0]:
            raise ValidationError("mode profile length must match cross-section length")

    def wavelengths(self) -> tuple[float, ...]:
        return (self.wavelength,)


FomSpec = Union[FocusFom, SortFom, ModeOverlapFom]


def _field_at(fields: dict[float, ComplexField], lam: float) -> ComplexField:
    if lam not in fields:
        raise ValidationError(f"missing field for wavelength {lam}")
    return fields[lam]


def _region_values(field: ComplexField, cells: np.ndarray) -> np.ndarray:
    height, width = field.grid.shape
    rows, cols = cells[:, 0], cells[:, 1]
    if rows.min() < 0 or rows.max() >= height or cols.min() < 0 or cols.max() >= width:
        raise ValidationError("region outside grid")
    return field.values[rows, cols]


def evaluate_fom(fom: FomSpec, fields: dict[float, ComplexField]) -> float:
    """Evaluate the objective on the given per-wavelength fields."""
    if isinstance(fom, FocusFom):
        field = _field_at(fields, fom.wavelength)
        d_area = field.grid.spacing ** 2
        e = _region_values(field, fom.region)
        return float(np.sum(np.abs(e) ** 2) * d_area)
    if isinstance(fom, SortFom):
        total = 0.0
        for lam, region in fom.channels:
            field = _field_at(fields, lam)
            e = _region_values(field, region)
            total += float(np.sum(np.abs(e) ** 2) * field.grid.spacing ** 2)
        return total
    if isinstance(fom, ModeOverlapFom):
        field = _field_at(fields, fom.wavelength)
        e = _region_values(field, fom.cross_section)
        overlap = np.sum(e * np.conj(fom.mode.values)) * field.grid.spacing
        return float(np.abs(overlap) ** 2)
    raise ValidationError(f"unknown objective {type(fom).__name__}")


def adjoint_source(fom: FomSpec, fields: dict[float, ComplexField]) -> dict[float, SourceSpec]:
    """Current sources whose solved fields backpropagate dJ/dE per wavelength."""
    sources: dict[float, SourceSpec] = {}
    if isinstance(fom, FocusFom):
        channels = [(fom.wavelength, fom.region)]
    elif isinstance(fom, SortFom):
        channels = list(fom.channels)
    elif isinstance(fom, ModeOverlapFom):
        channels = [(fom.wavelength, fom.cross_section)]
    else:
        raise ValidationError(f"unknown objective {type(fom).__name__}")

    for lam, cells in channels:
        field = _field_at(fields, lam)
        omega = 2.0 * math.pi / lam
        e = _region_values(field, cells)
        if isinstance(fom, ModeOverlapFom):
            dx = field.grid.spacing
            overlap = np.sum(e * np.conj(fom.mode.values)) * dx
            djde = np.conj(overlap) * np.conj(fom.mode.values) * dx
        else:
            djde = np.conj(e) * field.grid.spacing ** 2
        amplitudes = djde * (1j / omega)
        sources[lam] = SourceSpec("line-current", cells, amplitudes, lam)
    return sources
