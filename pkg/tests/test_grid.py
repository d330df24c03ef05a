import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nadj.errors import ValidationError
from nadj.grid import ComplexField, DesignGrid, GradientField, GridSpec, clamp_design


def make_design(eps, bounds=(1.0, 4.0)):
    grid = GridSpec((8, 8))
    mask = np.zeros(grid.shape, dtype=bool)
    mask.ravel()[: len(eps)] = True
    return DesignGrid(grid, np.asarray(eps, dtype=float), bounds[0], bounds[1], mask)


class TestGridSpec:
    def test_structural_equality(self):
        assert GridSpec((16, 16), 0.5) == GridSpec((16, 16), 0.5)
        assert GridSpec((16, 16)) != GridSpec((16, 32))
        assert GridSpec((16, 16), 1.0) != GridSpec((16, 16), 2.0)

    def test_minimum_cells(self):
        with pytest.raises(ValidationError, match=">= 8"):
            GridSpec((4, 16))

    def test_positive_spacing(self):
        with pytest.raises(ValidationError, match="spacing"):
            GridSpec((16, 16), 0.0)

    def test_two_axes_only(self):
        with pytest.raises(ValidationError, match="2 entries"):
            GridSpec((16, 16, 16))

    def test_cell_count(self):
        assert GridSpec((12, 9)).cell_count == 108


class TestDesignGrid:
    def test_eps_length_must_match_mask(self):
        grid = GridSpec((8, 8))
        mask = np.zeros(grid.shape, dtype=bool)
        mask[2, 2:6] = True
        with pytest.raises(ValidationError, match="mask cell count"):
            DesignGrid(grid, np.ones(3), 1.0, 4.0, mask)

    def test_vacuum_floor(self):
        with pytest.raises(ValidationError, match="vacuum floor"):
            make_design([1.0], bounds=(0.5, 4.0))

    def test_eps_image_background_is_one(self):
        design = make_design([2.0, 3.0])
        img = design.eps_image()
        assert img[0, 0] == 2.0 and img[0, 1] == 3.0
        assert np.all(img.ravel()[2:] == 1.0)

    def test_values_frozen(self):
        design = make_design([2.0])
        with pytest.raises(ValueError):
            design.eps[0] = 3.0


class TestClampDesign:
    def test_clamp_example(self):
        design = make_design([0.5, 2.0, 9.0])
        out = clamp_design(design)
        np.testing.assert_allclose(out.eps, [1.0, 2.0, 4.0])

    def test_in_range_unchanged(self):
        design = make_design([1.5, 2.5, 3.5])
        out = clamp_design(design)
        np.testing.assert_array_equal(out.eps, design.eps)

    def test_idempotent(self):
        design = make_design([0.2, 5.0, 2.2])
        once = clamp_design(design)
        twice = clamp_design(once)
        np.testing.assert_array_equal(once.eps, twice.eps)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-10, 20, allow_nan=False), min_size=1, max_size=16))
    def test_bounds_invariant_property(self, values):
        out = clamp_design(make_design(values))
        assert out.in_bounds()
        assert out.eps.min() >= 1.0 and out.eps.max() <= 4.0


class TestFields:
    def test_complex_field_shape_checked(self):
        grid = GridSpec((8, 8))
        with pytest.raises(ValidationError, match="shape"):
            ComplexField(grid, np.zeros((4, 4), dtype=complex), 10.0)

    def test_complex_field_positive_wavelength(self):
        grid = GridSpec((8, 8))
        with pytest.raises(ValidationError, match="wavelength"):
            ComplexField(grid, np.zeros(grid.shape, dtype=complex), -1.0)

    def test_gradient_rejects_nonfinite(self):
        grid = GridSpec((8, 8))
        mask = np.zeros(grid.shape, dtype=bool)
        mask[0, :2] = True
        with pytest.raises(ValidationError, match="NaN or Inf"):
            GradientField(grid, np.array([1.0, np.nan]), mask)

    def test_gradient_image_zero_outside_mask(self):
        grid = GridSpec((8, 8))
        mask = np.zeros(grid.shape, dtype=bool)
        mask[3, 4] = True
        field = GradientField(grid, np.array([2.5]), mask)
        img = field.image()
        assert img[3, 4] == 2.5
        assert img.sum() == 2.5
