"""1D slab-waveguide mode solver.

Guided modes of a permittivity line eps(x) satisfy the transverse eigenproblem

    (d^2/dx^2 + k0^2 eps(x)) psi = beta^2 psi,

discretized with centered differences and Dirichlet ends, which yields a real
symmetric tridiagonal matrix.  A mode is guided when beta^2 exceeds
k0^2 * eps_cladding, i.e. it decays into the cladding instead of radiating.
Profiles come out orthogonal and are returned unit-normalized with the phase
fixed so the largest-magnitude sample is real and positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ValidationError
from .grid import _frozen

MIN_LINE_CELLS = 16


@dataclass(frozen=True, eq=False)
class ModeProfile:
    """Transverse mode field psi along a cross-section line."""

    values: np.ndarray   # complex, unit L2 norm
    beta: float          # propagation constant, 1/grid-length

    def __post_init__(self):
        values = _frozen(self.values, dtype=np.complex128)
        object.__setattr__(self, "values", values)
        norm = np.linalg.norm(values)
        if abs(norm - 1.0) > 1e-12:
            raise ValidationError(f"mode profile must be unit-normalized, |psi| = {norm}")

    @property
    def effective_index(self) -> float:
        return self.beta  # divided by k0 by the caller that knows the wavelength


def solve_slab_modes(eps_line: np.ndarray, wavelength: float, count: int,
                     spacing: float = 1.0) -> list[ModeProfile]:
    """Return the ``count`` most-confined guided modes, sorted by decreasing beta."""
    eps_line = np.asarray(eps_line, dtype=np.float64)
    if eps_line.ndim != 1 or eps_line.size < MIN_LINE_CELLS:
        raise ValidationError(f"eps_line must have >= {MIN_LINE_CELLS} entries")
    if count < 1:
        raise ValidationError("count must be >= 1")
    if not (wavelength > 0):
        raise ValidationError("wavelength must be positive")

    k0 = 2.0 * math.pi / wavelength
    inv_d2 = 1.0 / spacing ** 2
    diag = -2.0 * inv_d2 + k0 * k0 * eps_line
    off = np.full(eps_line.size - 1, inv_d2)
    eigvals, eigvecs = eigh_tridiagonal(diag, off)

    eps_clad = max(eps_line[0], eps_line[-1])
    cutoff = k0 * k0 * eps_clad
    guided = np.flatnonzero(eigvals > cutoff)
    if guided.size == 0:
        raise ValidationError("no guided modes")
    if guided.size < count:
        raise ValidationError(f"only {guided.size} guided modes exist, {count} requested")

    # eigenvalues ascend; the most-confined (largest beta) come last
    order = guided[np.argsort(eigvals[guided])[::-1]][:count]
    profiles = []
    for idx in order:
        psi = eigvecs[:, idx]
        peak = np.argmax(np.abs(psi))
        if psi[peak] < 0:
            psi = -psi
        psi = psi / np.linalg.norm(psi)
        profiles.append(ModeProfile(psi.astype(np.complex128), beta=float(math.sqrt(eigvals[idx]))))
    return profiles
