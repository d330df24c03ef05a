import numpy as np
import pytest
from scipy.optimize import brentq

from nadj.errors import ValidationError
from nadj.modes import ModeProfile, solve_slab_modes


def symmetric_slab(n_cells=256, core_eps=12.25, half_width=16):
    x = np.arange(n_cells)
    center = (n_cells - 1) / 2
    return np.where(np.abs(x - center) <= half_width - 0.5, core_eps, 1.0)


class TestSlabModes:
    def test_fundamental_even_second_odd(self):
        eps = symmetric_slab()
        modes = solve_slab_modes(eps, 64.0, 2)
        m0 = modes[0].values.real
        m1 = modes[1].values.real
        assert np.allclose(m0, m0[::-1], atol=1e-9)          # even
        assert np.allclose(m1, -m1[::-1], atol=1e-9)         # odd
        big = np.abs(m1) > 1e-6 * np.abs(m1).max()
        signs = np.sign(m1[big])
        assert np.sum(np.abs(np.diff(signs)) > 0) == 1       # exactly one node

    def test_uniform_line_has_no_guided_modes(self):
        with pytest.raises(ValidationError, match="no guided modes"):
            solve_slab_modes(np.ones(64), 16.0, 1)

    def test_effective_index_matches_analytic_dispersion(self):
        # core eps 12.25 (n=3.5), cladding 1, core width 0.5 lambda
        lam = 64.0
        half_width = 16
        k0 = 2 * np.pi / lam
        eps = symmetric_slab(256, 12.25, half_width)
        mode = solve_slab_modes(eps, lam, 1)[0]
        n_core, n_clad = 3.5, 1.0
        a = half_width

        def even_dispersion(neff):
            kt = k0 * np.sqrt(n_core ** 2 - neff ** 2)
            kappa = k0 * np.sqrt(neff ** 2 - n_clad ** 2)
            return np.tan(kt * a) - kappa / kt

        lower = np.sqrt(n_core ** 2 - (np.pi / (2 * a * k0)) ** 2) + 1e-9
        analytic = brentq(even_dispersion, lower, n_core - 1e-9, xtol=1e-12)
        assert abs(mode.beta / k0 - analytic) < 1e-3

    def test_unit_norm_and_positive_peak(self):
        modes = solve_slab_modes(symmetric_slab(), 64.0, 2)
        for mode in modes:
            assert abs(np.linalg.norm(mode.values) - 1.0) < 1e-12
            peak = np.argmax(np.abs(mode.values))
            assert mode.values[peak].real > 0

    def test_pairwise_orthogonality(self):
        modes = solve_slab_modes(symmetric_slab(128, 12.25, 12), 32.0, 3)
        for i in range(len(modes)):
            for j in range(i + 1, len(modes)):
                assert abs(np.vdot(modes[i].values, modes[j].values)) <= 1e-8

    def test_sorted_by_decreasing_beta(self):
        modes = solve_slab_modes(symmetric_slab(), 64.0, 3)
        betas = [m.beta for m in modes]
        assert betas == sorted(betas, reverse=True)

    def test_too_many_modes_requested(self):
        with pytest.raises(ValidationError, match="guided modes exist"):
            solve_slab_modes(symmetric_slab(64, 2.25, 6), 16.0, 5)

    def test_line_length_minimum(self):
        with pytest.raises(ValidationError, match=">= 16"):
            solve_slab_modes(np.ones(8), 16.0, 1)

    def test_profile_requires_unit_norm(self):
        with pytest.raises(ValidationError, match="unit-normalized"):
            ModeProfile(np.array([1.0, 1.0], dtype=complex), 1.0)
