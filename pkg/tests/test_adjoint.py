import numpy as np
import pytest

from conftest import masked_values, small_focus_setup
from nadj.adjoint import (compute_adjoint_gradient, evaluate_design,
                          finite_difference_gradient)
from nadj.errors import ValidationError
from nadj.fdfd import PmlSpec, plane_wave_source
from nadj.grid import DesignGrid, GridSpec
from nadj.objectives import FocusFom, SortFom


def cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


class TestAdjointGradient:
    def test_focus_oracle_full_region_sweep(self):
        design, fom, src, pml = small_focus_setup(design_rows=(12, 20),
                                                  design_cols=(8, 32), seed=3)
        # 8x24 region keeps the full sweep fast; the 32x32 version runs in acceptance
        result = compute_adjoint_gradient(design, fom, src, pml)
        cells = np.argwhere(design.mask)
        fd = finite_difference_gradient(design, fom, src, pml, cells, 1e-4)
        adj = masked_values(result.gradient.values, design.mask, cells)
        assert cosine(adj, fd) >= 0.999
        assert np.linalg.norm(adj - fd) / np.linalg.norm(fd) <= 1e-3

    def test_sort_gradient_is_sum_of_channel_gradients(self):
        grid = GridSpec((40, 40))
        pml = PmlSpec(thickness_cells=5)
        mask = np.zeros(grid.shape, dtype=bool)
        mask[14:22, 10:30] = True
        rng = np.random.default_rng(5)
        design = DesignGrid(grid, 1 + 3 * rng.random(int(mask.sum())), 1.0, 4.0, mask)
        lam1, lam2 = 11.0, 13.0
        sources = {lam1: plane_wave_source(grid, 7, lam1, pml),
                   lam2: plane_wave_source(grid, 7, lam2, pml)}
        r1 = np.array([[28, c] for c in range(12, 16)])
        r2 = np.array([[28, c] for c in range(24, 28)])
        combined = compute_adjoint_gradient(
            design, SortFom(((lam1, r1), (lam2, r2))), sources, pml).gradient.values
        g1 = compute_adjoint_gradient(design, FocusFom(r1, lam1), sources, pml).gradient.values
        g2 = compute_adjoint_gradient(design, FocusFom(r2, lam2), sources, pml).gradient.values
        assert np.abs(combined - (g1 + g2)).max() <= 1e-10

    def test_zero_amplitude_source_gives_zero_gradient(self):
        design, fom, src, pml = small_focus_setup()
        lam = fom.wavelength
        src = {lam: src[lam].scaled(0.0)}
        result = compute_adjoint_gradient(design, fom, src, pml)
        assert np.all(result.gradient.values == 0.0)
        assert result.fom_value == 0.0

    def test_solve_count_is_two_per_wavelength(self):
        design, fom, src, pml = small_focus_setup()
        assert compute_adjoint_gradient(design, fom, src, pml).solver_stats.solve_count == 2

        grid = GridSpec((40, 40))
        pml2 = PmlSpec(thickness_cells=5)
        mask = np.zeros(grid.shape, dtype=bool)
        mask[14:20, 10:30] = True
        design2 = DesignGrid(grid, np.full(int(mask.sum()), 2.0), 1.0, 4.0, mask)
        sources = {lam: plane_wave_source(grid, 7, lam, pml2) for lam in (11.0, 13.0)}
        fom2 = SortFom(((11.0, np.array([[28, 14]])), (13.0, np.array([[28, 26]]))))
        assert compute_adjoint_gradient(design2, fom2, sources, pml2).solver_stats.solve_count == 4

    def test_deterministic_bit_for_bit(self):
        design, fom, src, pml = small_focus_setup(seed=9)
        g1 = compute_adjoint_gradient(design, fom, src, pml).gradient.values
        g2 = compute_adjoint_gradient(design, fom, src, pml).gradient.values
        assert g1.tobytes() == g2.tobytes()

    def test_missing_source_wavelength(self):
        design, fom, src, pml = small_focus_setup()
        with pytest.raises(ValidationError, match="no source"):
            compute_adjoint_gradient(design, fom, {}, pml)

    def test_result_carries_fields_and_fom(self):
        design, fom, src, pml = small_focus_setup()
        result = compute_adjoint_gradient(design, fom, src, pml)
        lam = fom.wavelength
        assert lam in result.forward_fields and lam in result.adjoint_fields
        assert result.fom_value == pytest.approx(
            evaluate_design(design, fom, src, pml), rel=1e-12)


class TestFiniteDifference:
    def test_single_cell_returns_length_one(self):
        design, fom, src, pml = small_focus_setup()
        cell = np.argwhere(design.mask)[:1]
        assert finite_difference_gradient(design, fom, src, pml, cell, 1e-4).shape == (1,)

    def test_cells_outside_mask_rejected(self):
        design, fom, src, pml = small_focus_setup()
        with pytest.raises(ValidationError, match="outside design mask"):
            finite_difference_gradient(design, fom, src, pml, np.array([[0, 0]]), 1e-4)

    def test_positive_delta_required(self):
        design, fom, src, pml = small_focus_setup()
        with pytest.raises(ValidationError, match="delta"):
            finite_difference_gradient(design, fom, src, pml,
                                       np.argwhere(design.mask)[:1], 0.0)

    def test_richardson_second_order_convergence(self):
        design, fom, src, pml = small_focus_setup(seed=13)
        cells = np.argwhere(design.mask)[:4]
        exact = masked_values(
            compute_adjoint_gradient(design, fom, src, pml).gradient.values,
            design.mask, cells)
        delta = 2e-3
        err_coarse = np.abs(
            finite_difference_gradient(design, fom, src, pml, cells, delta) - exact)
        err_fine = np.abs(
            finite_difference_gradient(design, fom, src, pml, cells, delta / 2) - exact)
        # central differences: halving delta shrinks truncation error ~4x
        ratio = err_coarse.sum() / err_fine.sum()
        assert 2.5 < ratio < 6.0
