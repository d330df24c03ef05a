"""Synthetic structure generation and solver labeling.

Structures are band-limited Gaussian random fields: white noise on the design
region's bounding box, Fourier coefficients zeroed above the cutoff implied by
the requested correlation length, then mapped through a sigmoid into the
permittivity range.  Every sample is a pure function of (seed, index), and so
is split membership, which makes rerun datasets byte-identical.

Labels are adjoint gradients from paired forward/adjoint solves.  Records
whose gradient fails the finite check are rejected and logged; a solver
failure rate above 5% aborts the run.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .adjoint import compute_adjoint_gradient
from .errors import SolverError, StorageError, ValidationError
from .fdfd import PmlSpec, SourceSpec
from .grid import DesignGrid, GradientField, GridSpec, clamp_design
from .objectives import FomSpec
from .tensorio import read_tensor, write_tensor

# gentle gain keeps the sigmoid's harmonic distortion under ~0.7% of the
# field energy, preserving the band limit of the pre-sigmoid noise
SIGMOID_GAIN = 0.8
MAX_FAILURE_RATE = 0.05
DATASET_VERSION = 1
_SPLIT_SALT = 7919


@dataclass(frozen=True, eq=False)
class StructureGenConfig:
    """Random-structure family: grid, mask, eps range, feature scale, seed."""

    grid: GridSpec
    mask: np.ndarray
    eps_min: float
    eps_max: float
    smoothness: float
    seed: int
    count: int

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        object.__setattr__(self, "mask", mask)
        if mask.shape != self.grid.shape or not mask.any():
            raise ValidationError("mask must be a nonempty boolean map over the grid")
        if self.smoothness < 2.0:
            raise ValidationError("smoothness must be >= 2 cells")
        if self.count < 1:
            raise ValidationError("count must be >= 1")
        if self.eps_min < 1.0 or self.eps_max < self.eps_min:
            raise ValidationError("invalid eps bounds")

    def to_dict(self) -> dict:
        return dict(eps_min=self.eps_min, eps_max=self.eps_max,
                    smoothness=self.smoothness, seed=self.seed, count=self.count)


def band_limit_cutoff(smoothness: float) -> float:
    """Radial cutoff in cycles/cell for a given correlation length in cells."""
    return 1.0 / (2.0 * smoothness)


def _mask_bbox(mask: np.ndarray) -> tuple[int, int, int, int]:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return rows[0], rows[-1] + 1, cols[0], cols[-1] + 1


def generate_structure(cfg: StructureGenConfig, index: int) -> DesignGrid:
    """One design, reproducible from (cfg.seed, index)."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, index]))
    r0, r1, c0, c1 = _mask_bbox(cfg.mask)
    box = (r1 - r0, c1 - c0)
    noise = rng.standard_normal(box)
    spectrum = np.fft.fft2(noise)
    fy = np.fft.fftfreq(box[0])[:, None]
    fx = np.fft.fftfreq(box[1])[None, :]
    spectrum[np.hypot(fy, fx) > band_limit_cutoff(cfg.smoothness)] = 0.0
    field = np.real(np.fft.ifft2(spectrum))
    std = field.std()
    if std > 1e-12:
        field = field / std
    span = cfg.eps_max - cfg.eps_min
    eps_box = cfg.eps_min + span / (1.0 + np.exp(-SIGMOID_GAIN * field))
    eps_img = np.full(cfg.grid.shape, cfg.eps_min)
    eps_img[r0:r1, c0:c1] = eps_box
    design = DesignGrid(cfg.grid, eps_img[cfg.mask], cfg.eps_min, cfg.eps_max, cfg.mask)
    return clamp_design(design)


def generate_structures(cfg: StructureGenConfig) -> list[DesignGrid]:
    return [generate_structure(cfg, i) for i in range(cfg.count)]


@dataclass(frozen=True, eq=False)
class DatasetRecord:
    design: DesignGrid
    gradient: GradientField
    task: str
    sample_seed: int


@dataclass(eq=False)
class LabeledDataset:
    records: list[DatasetRecord]
    splits: dict[str, list[int]]
    manifest: dict

    def __len__(self):
        return len(self.records)


def assign_splits(n: int, seed: int) -> dict[str, list[int]]:
    """Disjoint, covering 80/10/10 split from a seeded shuffle."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, _SPLIT_SALT]))
    perm = rng.permutation(n)
    n_train = int(n * 0.8)
    n_val = int(n * 0.1)
    return dict(
        train=sorted(int(i) for i in perm[:n_train]),
        val=sorted(int(i) for i in perm[n_train:n_train + n_val]),
        test=sorted(int(i) for i in perm[n_train + n_val:]),
    )


def _label_one(args):
    index, design, fom, src, pml, task_id = args
    result = compute_adjoint_gradient(design, fom, src, pml)
    return index, result.gradient


def label_dataset(designs: list[DesignGrid], task_id: str, fom: FomSpec,
                  src: dict[float, SourceSpec], pml: PmlSpec, seed: int,
                  generator_config: dict | None = None, workers: int = 1,
                  log=None) -> LabeledDataset:
    """Adjoint-label a batch of designs sharing one grid."""
    if not designs:
        raise ValidationError("no designs to label")
    grid = designs[0].grid
    for d in designs:
        if d.grid != grid:
            raise ValidationError("all designs must share one grid")
        if not d.in_bounds():
            raise ValidationError("design eps outside bounds; clamp before labeling")

    jobs = [(i, d, fom, src, pml, task_id) for i, d in enumerate(designs)]
    results: dict[int, GradientField] = {}
    failures: list[tuple[int, str]] = []

    def handle(index, worker):
        try:
            idx, gradient = worker()
            results[idx] = gradient
        except (SolverError, ValidationError) as exc:
            failures.append((index, str(exc)))
            if log:
                log(f"sample {index} rejected: {exc}")

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [(job[0], pool.submit(_label_one, job)) for job in jobs]
            for index, future in futures:
                handle(index, future.result)
    else:
        for job in jobs:
            handle(job[0], lambda job=job: _label_one(job))

    if len(failures) > MAX_FAILURE_RATE * len(designs):
        raise SolverError(
            f"{len(failures)}/{len(designs)} samples failed labeling (> {MAX_FAILURE_RATE:.0%})"
        )

    kept = sorted(results)
    records = [DatasetRecord(designs[i], results[i], task_id, sample_seed=i) for i in kept]
    splits = assign_splits(len(records), seed)

    train_values = (np.concatenate([records[i].gradient.values for i in splits["train"]])
                    if splits["train"] else np.zeros(1))
    manifest = dict(
        format_version=DATASET_VERSION,
        task=task_id,
        code_version=__version__,
        grid=dict(shape=list(grid.shape), spacing=grid.spacing, origin=list(grid.origin)),
        eps_min=designs[0].eps_min,
        eps_max=designs[0].eps_max,
        seed=seed,
        count=len(records),
        rejected=[dict(index=i, reason=r) for i, r in failures],
        splits=splits,
        generator=generator_config or {},
        solver=dict(
            pml=dict(thickness_cells=pml.thickness_cells,
                     max_conductivity=pml.conductivity(grid.spacing),
                     grading_order=pml.grading_order),
            wavelengths=sorted(float(l) for l in src),
            source_digest=_sources_digest(src),
        ),
        label_stats=dict(mean=float(train_values.mean()), std=float(train_values.std())),
    )
    return LabeledDataset(records, splits, manifest)


def _sources_digest(src: dict[float, SourceSpec]) -> str:
    digest = hashlib.sha256()
    for lam in sorted(src):
        s = src[lam]
        digest.update(f"{lam!r}|{s.kind}".encode())
        digest.update(np.ascontiguousarray(s.cells).tobytes())
        digest.update(np.ascontiguousarray(s.amplitudes).tobytes())
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# On-disk layout: manifest.json + mask.nadj + per-record design/gradient .nadj.


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save_dataset(dataset: LabeledDataset, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}
    mask = dataset.records[0].design.mask if dataset.records else None
    if mask is None:
        raise ValidationError("cannot save an empty dataset")
    write_tensor(path / "mask.nadj", mask.astype(np.float64))
    files["mask.nadj"] = _sha256(path / "mask.nadj")
    record_entries = []
    for i, rec in enumerate(dataset.records):
        dname, gname = f"design_{i:05d}.nadj", f"grad_{i:05d}.nadj"
        write_tensor(path / dname, rec.design.eps)
        write_tensor(path / gname, rec.gradient.values)
        files[dname] = _sha256(path / dname)
        files[gname] = _sha256(path / gname)
        record_entries.append(dict(design=dname, gradient=gname, sample_seed=rec.sample_seed))
    manifest = dict(dataset.manifest)
    manifest["records"] = record_entries
    manifest["files"] = files
    (path / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def load_dataset(path) -> LabeledDataset:
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise StorageError(f"missing manifest in {path}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format_version") != DATASET_VERSION:
        raise StorageError(f"unsupported dataset version {manifest.get('format_version')}")
    for name, expected in manifest["files"].items():
        target = path / name
        if not target.exists():
            raise StorageError(f"dataset corrupted: missing file {name}")
        if _sha256(target) != expected:
            raise StorageError(f"dataset corrupted: hash mismatch in {name}")
    grid = GridSpec(tuple(manifest["grid"]["shape"]), manifest["grid"]["spacing"],
                    tuple(manifest["grid"]["origin"]))
    mask = read_tensor(path / "mask.nadj").astype(bool)
    records = []
    for entry in manifest["records"]:
        eps = read_tensor(path / entry["design"])
        grad = read_tensor(path / entry["gradient"])
        design = DesignGrid(grid, eps, manifest["eps_min"], manifest["eps_max"], mask)
        gradient = GradientField(grid, grad, mask)
        records.append(DatasetRecord(design, gradient, manifest["task"], entry["sample_seed"]))
    splits = {k: list(v) for k, v in manifest["splits"].items()}
    return LabeledDataset(records, splits, manifest)


def dataset_arrays(dataset: LabeledDataset, model):
    """(eps_norm [N,H,W], raw labels [N,H,W], splits) in the model's dtype."""
    if not dataset.records:
        raise ValidationError("empty dataset")
    grid = dataset.records[0].design.grid
    if grid != model.grid:
        raise ValidationError(f"dataset grid {grid.shape} != model grid {model.grid.shape}")
    n = len(dataset.records)
    eps_norm = np.empty((n,) + grid.shape, dtype=model.dtype)
    labels = np.empty((n,) + grid.shape, dtype=model.dtype)
    for i, rec in enumerate(dataset.records):
        eps_norm[i] = model.normalize_eps(rec.design.eps_image())
        labels[i] = rec.gradient.image().astype(model.dtype)
    return eps_norm, labels, dataset.splits
