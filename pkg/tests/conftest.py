import numpy as np
import pytest

from nadj.datagen import StructureGenConfig, generate_structure
from nadj.fdfd import PmlSpec, plane_wave_source
from nadj.grid import DesignGrid, GridSpec
from nadj.objectives import FocusFom


def small_focus_setup(design_rows=(14, 22), design_cols=(10, 30), shape=(40, 40),
                      pml_cells=5, wavelength=12.0, seed=7):
    """Compact single-wavelength focusing problem for oracle-style tests."""
    grid = GridSpec(shape)
    pml = PmlSpec(thickness_cells=pml_cells)
    mask = np.zeros(grid.shape, dtype=bool)
    mask[design_rows[0]:design_rows[1], design_cols[0]:design_cols[1]] = True
    rng = np.random.default_rng(seed)
    eps = 1.0 + 3.0 * rng.random(int(mask.sum()))
    design = DesignGrid(grid, eps, 1.0, 4.0, mask)
    sources = {wavelength: plane_wave_source(grid, pml_cells + 2, wavelength, pml)}
    focal = np.array([[shape[0] - pml_cells - 8, c] for c in range(18, 22)])
    fom = FocusFom(focal, wavelength)
    return design, fom, sources, pml


def random_design(task, seed, index=0, smoothness=None):
    gen = StructureGenConfig(task.grid, task.mask, task.eps_min, task.eps_max,
                             smoothness or task.smoothness, seed, index + 1)
    return generate_structure(gen, index)


def masked_values(values_vector, mask, cells):
    index_map = np.full(mask.shape, -1, dtype=int)
    index_map[mask] = np.arange(int(mask.sum()))
    return values_vector[index_map[cells[:, 0], cells[:, 1]]]


@pytest.fixture(scope="session")
def tiny_lens_dataset(tmp_path_factory):
    """Small single-wavelength lens dataset shared by training-path tests."""
    from nadj.datagen import generate_structures, label_dataset
    from nadj.tasks import build_task, task_defaults

    cfg = task_defaults("lens2d")
    cfg["wavelengths"] = [16.0]
    task = build_task(cfg)
    gen = StructureGenConfig(task.grid, task.mask, task.eps_min, task.eps_max,
                             4.0, 321, 30)
    designs = generate_structures(gen)
    dataset = label_dataset(designs, "lens2d", task.fom, task.sources, task.pml,
                            seed=321, generator_config=gen.to_dict())
    return task, dataset
