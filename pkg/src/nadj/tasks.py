"""Ready-made 2D design tasks: spectral router, broadband lens, mode converter.

All three share one scene layout on a square grid: illumination enters on a
row near the top PML edge, the design region sits mid-domain, and the
objective region lives below it.

* ``router2d``   two wavelengths sorted into left/right bottom regions (Sort).
* ``lens2d``     plane-wave focusing to a shared interior spot; the default
                 wavelength triple makes it a broadband (RGB-like) analog and
                 a single wavelength reduces it to plain Focus.
* ``modeconv2d`` slab-waveguide fundamental-to-second-mode conversion: the
                 fundamental mode of a nominal slab is injected above the
                 design box and the overlap with the second mode is measured
                 on a cross-section below it (ModeOverlap).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .fdfd import PmlSpec, SourceSpec, mode_injection_source, plane_wave_source
from .grid import DesignGrid, GridSpec
from .modes import solve_slab_modes
from .objectives import FocusFom, FomSpec, ModeOverlapFom, SortFom

TASK_NAMES = ("router2d", "lens2d", "modeconv2d")


def _box_cells(r0: int, r1: int, c0: int, c1: int) -> np.ndarray:
    rows, cols = np.mgrid[r0:r1, c0:c1]
    return np.stack([rows.ravel(), cols.ravel()], axis=1)


@dataclass(eq=False)
class TaskSetup:
    """Everything a pipeline stage needs to run one task."""

    name: str
    grid: GridSpec
    pml: PmlSpec
    mask: np.ndarray
    eps_min: float
    eps_max: float
    wavelengths: tuple[float, ...]
    sources: dict[float, SourceSpec]
    fom: FomSpec
    initial_eps_image: np.ndarray
    smoothness: float = 4.0
    extras: dict = field(default_factory=dict)

    def initial_design(self) -> DesignGrid:
        return DesignGrid(self.grid, self.initial_eps_image[self.mask],
                          self.eps_min, self.eps_max, self.mask)

    def design_from_eps(self, eps: np.ndarray) -> DesignGrid:
        return DesignGrid(self.grid, eps, self.eps_min, self.eps_max, self.mask)


def task_defaults(name: str) -> dict:
    """Default geometry/config for one task on a 64x64 grid."""
    common = dict(
        grid=dict(shape=[64, 64], spacing=1.0),
        pml=dict(thickness_cells=10, max_conductivity=None, grading_order=2),
        smoothness=4.0,
    )
    if name == "router2d":
        return dict(common, task="router2d",
                    design=dict(eps_min=1.0, eps_max=4.0, region=[18, 34, 14, 50]),
                    source=dict(row=13),
                    wavelengths=[13.0, 19.0],
                    fom=dict(channel_regions=[[42, 48, 15, 25], [42, 48, 39, 49]]))
    if name == "lens2d":
        return dict(common, task="lens2d",
                    design=dict(eps_min=1.0, eps_max=4.0, region=[20, 36, 14, 50]),
                    source=dict(row=13),
                    wavelengths=[12.0, 16.0, 20.0],
                    fom=dict(focal_region=[43, 46, 30, 34]))
    if name == "modeconv2d":
        return dict(common, task="modeconv2d",
                    design=dict(eps_min=1.0, eps_max=6.25, region=[20, 44, 12, 52]),
                    source=dict(row=17),
                    wavelengths=[16.0],
                    fom=dict(cross_section_row=46, target_mode_index=1,
                             core_cols=[27, 37], core_eps=6.25))
    raise ValidationError(f"unknown task {name!r}; expected one of {TASK_NAMES}")


def build_task(config: dict) -> TaskSetup:
    """Construct a TaskSetup from a (defaults-merged) task config dict."""
    name = config["task"]
    grid = GridSpec(tuple(config["grid"]["shape"]), config["grid"]["spacing"])
    pml_cfg = config["pml"]
    pml = PmlSpec(pml_cfg["thickness_cells"], pml_cfg.get("max_conductivity"),
                  pml_cfg["grading_order"])
    height, width = grid.shape
    t = pml.thickness_cells

    r0, r1, c0, c1 = config["design"]["region"]
    mask = np.zeros(grid.shape, dtype=bool)
    mask[r0:r1, c0:c1] = True
    eps_min = float(config["design"]["eps_min"])
    eps_max = float(config["design"]["eps_max"])
    wavelengths = tuple(float(lam) for lam in config["wavelengths"])
    if not wavelengths:
        raise ValidationError("need at least one wavelength")
    src_row = int(config["source"]["row"])
    mid_eps = 0.5 * (eps_min + eps_max)
    initial = np.full(grid.shape, mid_eps)
    extras: dict = {}

    if name == "router2d":
        regions = config["fom"]["channel_regions"]
        if len(regions) != len(wavelengths):
            raise ValidationError("router needs one channel region per wavelength")
        channels = tuple(
            (lam, _box_cells(*region)) for lam, region in zip(wavelengths, regions)
        )
        fom: FomSpec = SortFom(channels)
        sources = {lam: plane_wave_source(grid, src_row, lam, pml) for lam in wavelengths}
    elif name == "lens2d":
        region = _box_cells(*config["fom"]["focal_region"])
        if len(wavelengths) == 1:
            fom = FocusFom(region, wavelengths[0])
        else:
            fom = SortFom(tuple((lam, region) for lam in wavelengths))
        sources = {lam: plane_wave_source(grid, src_row, lam, pml) for lam in wavelengths}
    elif name == "modeconv2d":
        if len(wavelengths) != 1:
            raise ValidationError("mode conversion uses a single wavelength")
        lam = wavelengths[0]
        cc0, cc1 = config["fom"]["core_cols"]
        core_eps = float(config["fom"]["core_eps"])
        interior = np.arange(t, width - t)
        eps_line = np.where((interior >= cc0) & (interior < cc1), core_eps, 1.0)
        target_index = int(config["fom"]["target_mode_index"])
        modes = solve_slab_modes(eps_line, lam, target_index + 1, spacing=grid.spacing)
        inject = modes[0]
        target = modes[target_index]
        xs_row = int(config["fom"]["cross_section_row"])
        cross = np.stack([np.full(interior.size, xs_row), interior], axis=1)
        fom = ModeOverlapFom(cross, target_index, lam, target)
        sources = {lam: mode_injection_source(grid, src_row, inject.values, lam, pml)}
        # straight slab through the design box as the optimization start
        initial = np.ones(grid.shape)
        initial[:, cc0:cc1] = core_eps
        extras = dict(eps_line=eps_line, modes=modes)
    else:
        raise ValidationError(f"unknown task {name!r}; expected one of {TASK_NAMES}")

    setup = TaskSetup(name=name, grid=grid, pml=pml, mask=mask, eps_min=eps_min,
                      eps_max=eps_max, wavelengths=wavelengths, sources=sources,
                      fom=fom, initial_eps_image=np.clip(initial, eps_min, eps_max),
                      smoothness=float(config.get("smoothness", 4.0)), extras=extras)
    _validate_geometry(setup)
    return setup


def _validate_geometry(setup: TaskSetup):
    height, width = setup.grid.shape
    t = setup.pml.thickness_cells
    if not setup.mask.any():
        raise ValidationError("design region is empty")
    rows, cols = np.nonzero(setup.mask)
    if rows.min() < t or rows.max() >= height - t or cols.min() < t or cols.max() >= width - t:
        raise ValidationError("design region overlaps the PML frame")
    for lam in setup.wavelengths:
        if lam <= 2.0 * setup.grid.spacing:
            raise ValidationError(f"wavelength {lam} under-resolved for spacing {setup.grid.spacing}")


def default_task(name: str, **overrides) -> TaskSetup:
    cfg = task_defaults(name)
    cfg.update(overrides)
    return build_task(cfg)
