"""Stage-wise Fourier neural operator for dense gradient-field prediction.

The model is a cascade of S FNO blocks with nondecreasing Fourier-mode
budgets.  Stage 1 maps [eps_norm, y, x] to a coarse estimate g1; every later
stage s sees the cumulative estimate as an extra input channel and predicts a
residual correction dg_s, so the final prediction is g1 + dg2 + ... + dgS
(fixed accumulation order, summed exactly).  Training is sequential: a stage
is fit to the residual left by the frozen earlier stages, whose outputs are
precomputed once and treated as constants.

Internally the network lives in scaled-label space (labels divided by the
dataset std); ``label_scale`` converts predictions back to raw sensitivity
units at the output boundary.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from . import autodiff as ad
from .errors import TrainingError, ValidationError
from .grid import DesignGrid, GradientField, GridSpec
from .tensorio import read_tensor, write_tensor

_GELU_C = math.sqrt(2.0 / math.pi)
BASE_CHANNELS = 3            # eps_norm + 2 coordinate channels
ESTIMATE_CHANNELS = 1        # cumulative estimate fed to stages >= 2
NORM_FLOOR = 1e-8            # rel-L2 denominators fall back to absolute below this


@dataclass(frozen=True)
class FnoBlockConfig:
    """One stage: channel widths, depth, and per-axis retained-mode budget."""

    in_channels: int
    width: int
    out_channels: int
    layers: int
    modes: tuple[int, int]

    def __post_init__(self):
        if min(self.in_channels, self.width, self.out_channels) < 1:
            raise ValidationError("channel counts must be positive")
        if self.layers < 1:
            raise ValidationError("layers must be >= 1")
        m1, m2 = self.modes
        if m1 < 2 or m1 % 2 != 0 or m2 < 1:
            raise ValidationError(f"invalid mode budget {self.modes}")

    def param_count(self) -> int:
        w, m1, m2 = self.width, self.modes[0], self.modes[1]
        lift = w * self.in_channels + w
        per_layer = w * w + w + w * w * m1 * m2 * 2
        proj = (w * w + w) + (self.out_channels * w + self.out_channels)
        return lift + self.layers * per_layer + proj


def default_mode_budgets(grid_size: int, stages: int) -> list[int]:
    """Low-to-high budgets: (m, 2m, 4m) for 3 stages, (m, 1.5m, 3m, 4m) for 4."""
    base = max(2, grid_size // 8)
    base += base % 2
    if stages == 1:
        ladder = [base]
    elif stages == 2:
        ladder = [base, 4 * base]
    elif stages == 3:
        ladder = [base, 2 * base, 4 * base]
    elif stages == 4:
        ladder = [base, round(1.5 * base), 3 * base, 4 * base]
    else:
        raise ValidationError("stage count must be 1..4")
    cap = grid_size
    return [min(cap, b + (b % 2)) for b in ladder]


def width_for_param_budget(target: int, in_channels: int, layers: int,
                           modes: tuple[int, int], out_channels: int = 1) -> int:
    """Smallest width whose block parameter count reaches ``target``."""
    width = 1
    while FnoBlockConfig(in_channels, width, out_channels, layers, modes).param_count() < target:
        width += 1
        if width > 4096:
            raise ValidationError("parameter budget unreachable")
    return width


def _xavier(rng: np.random.Generator, fan_out: int, fan_in: int, dtype) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in)).astype(dtype)


def _init_stage(cfg: FnoBlockConfig, rng: np.random.Generator, dtype) -> dict[str, ad.DiffTensor]:
    params: dict[str, ad.DiffTensor] = {}

    def par(name, arr):
        params[name] = ad.DiffTensor(arr, requires_grad=True)

    w = cfg.width
    par("lift_w", _xavier(rng, w, cfg.in_channels, dtype))
    par("lift_b", np.zeros(w, dtype))
    m1, m2 = cfg.modes
    spec_scale = 1.0 / (w * w)
    for layer in range(cfg.layers):
        par(f"layer{layer}_spec_w",
            rng.uniform(0.0, spec_scale, size=(w, w, m1, m2, 2)).astype(dtype))
        par(f"layer{layer}_pw_w", _xavier(rng, w, w, dtype))
        par(f"layer{layer}_pw_b", np.zeros(w, dtype))
    par("proj1_w", _xavier(rng, w, w, dtype))
    par("proj1_b", np.zeros(w, dtype))
    par("proj2_w", _xavier(rng, cfg.out_channels, w, dtype))
    par("proj2_b", np.zeros(cfg.out_channels, dtype))
    return params


def _band_pass_mask(modes: tuple[int, int], prev: tuple[int, int] | None, height: int):
    """1 outside the previous stage's retained block, 0 inside (band-pass)."""
    if prev is None:
        return None
    m1, m2 = modes
    mask = np.ones((m1, m2), dtype=np.float64)
    ph, pm2 = prev[0] // 2, prev[1]
    mask[:ph, :pm2] = 0.0
    mask[m1 - ph:, :pm2] = 0.0
    return mask


class SwfnoModel:
    """Stage-wise FNO bound to one grid and design mask."""

    def __init__(self, grid: GridSpec, mask: np.ndarray, eps_min: float, eps_max: float,
                 configs: list[FnoBlockConfig], dtype=np.float32, seed: int = 0,
                 band_pass: bool = False, label_scale: float = 1.0):
        height, width = grid.shape
        if not 1 <= len(configs) <= 4:
            raise ValidationError("stage count must be in 1..4")
        budgets = [c.modes for c in configs]
        for (a1, a2), (b1, b2) in zip(budgets, budgets[1:]):
            if b1 < a1 or b2 < a2:
                raise ValidationError("mode budgets must be nondecreasing across stages")
        for c in configs:
            if c.modes[0] > height or c.modes[1] > width // 2 + 1:
                raise ValidationError(f"mode budget {c.modes} exceeds Nyquist for {grid.shape}")
        if configs[0].in_channels != BASE_CHANNELS:
            raise ValidationError(f"stage 1 must take {BASE_CHANNELS} input channels")
        for c in configs[1:]:
            if c.in_channels != BASE_CHANNELS + ESTIMATE_CHANNELS:
                raise ValidationError("stages >= 2 must take exactly one estimate channel")

        self.grid = grid
        self.mask = np.asarray(mask, dtype=bool)
        if self.mask.shape != grid.shape:
            raise ValidationError("mask shape must match grid")
        self.eps_min = float(eps_min)
        self.eps_max = float(eps_max)
        self.configs = list(configs)
        self.dtype = np.dtype(dtype)
        self.seed = int(seed)
        self.band_pass = bool(band_pass)
        self.label_scale = float(label_scale)

        self.stage_params: list[dict[str, ad.DiffTensor]] = []
        for s, cfg in enumerate(configs):
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, s]))
            self.stage_params.append(_init_stage(cfg, rng, self.dtype))
        self.mode_masks = [None] + [
            _band_pass_mask(configs[s].modes, configs[s - 1].modes, height) if band_pass else None
            for s in range(1, len(configs))
        ]

        ys = ((np.arange(height) + 0.5) / height).astype(self.dtype)
        xs = ((np.arange(width) + 0.5) / width).astype(self.dtype)
        self.coords = np.stack(np.broadcast_arrays(ys[:, None], xs[None, :])).astype(self.dtype)
        self._mask_f = self.mask.astype(self.dtype)

    # -- construction helpers -------------------------------------------------

    @classmethod
    def build(cls, grid: GridSpec, mask: np.ndarray, eps_min: float, eps_max: float,
              stages: int = 3, width: int = 16, layers: int = 2,
              mode_budgets: list[int] | None = None, dtype=np.float32, seed: int = 0,
              band_pass: bool = False, label_scale: float = 1.0) -> "SwfnoModel":
        height, w_cells = grid.shape
        if mode_budgets is None:
            mode_budgets = default_mode_budgets(min(grid.shape), stages)
        if len(mode_budgets) != stages:
            raise ValidationError("need one mode budget per stage")
        configs = []
        for s, budget in enumerate(mode_budgets):
            cin = BASE_CHANNELS if s == 0 else BASE_CHANNELS + ESTIMATE_CHANNELS
            modes = (min(budget, height), min(budget, w_cells // 2 + 1))
            configs.append(FnoBlockConfig(cin, width, 1, layers, modes))
        return cls(grid, mask, eps_min, eps_max, configs, dtype=dtype, seed=seed,
                   band_pass=band_pass, label_scale=label_scale)

    def param_count(self) -> int:
        return sum(cfg.param_count() for cfg in self.configs)

    def parameters(self, stage: int | None = None) -> list[ad.DiffTensor]:
        if stage is None:
            return [p for st in self.stage_params for p in st.values()]
        return list(self.stage_params[stage].values())

    def parameter_checksum(self, stage: int) -> str:
        import hashlib

        digest = hashlib.sha256()
        for name in sorted(self.stage_params[stage]):
            digest.update(name.encode())
            digest.update(np.ascontiguousarray(self.stage_params[stage][name].data).tobytes())
        return digest.hexdigest()

    # -- forward passes --------------------------------------------------------

    def normalize_eps(self, eps_image: np.ndarray) -> np.ndarray:
        span = max(self.eps_max - self.eps_min, 1e-12)
        return ((eps_image - self.eps_min) / span).astype(self.dtype)

    def _stage_input(self, stage: int, eps_norm: np.ndarray,
                     cumulative: np.ndarray | None) -> np.ndarray:
        """[B, C, H, W] input batch for one stage; eps_norm is [B, H, W]."""
        batch = eps_norm.shape[0]
        coords = np.broadcast_to(self.coords, (batch,) + self.coords.shape)
        channels = [eps_norm[:, None], coords]
        if stage > 0:
            channels.append(cumulative[:, None])
        return np.concatenate(channels, axis=1).astype(self.dtype, copy=False)

    def _run_stage_fast(self, stage: int, x: np.ndarray) -> np.ndarray:
        """Inference path, no graph recording; x is [B, C, H, W] -> [B, H, W]."""
        params = self.stage_params[stage]
        cfg = self.configs[stage]
        height, width = self.grid.shape
        m1, m2 = cfg.modes
        half = m1 // 2
        cdtype = np.complex64 if self.dtype == np.float32 else np.complex128
        batch = x.shape[0]

        def pw(arr, w, b):
            out = (w @ arr.reshape(batch, arr.shape[1], -1))
            return out.reshape(batch, w.shape[0], height, width) + b[None, :, None, None]

        def act(arr):
            inner = _GELU_C * (arr + 0.044715 * arr * arr * arr)
            return 0.5 * arr * (1.0 + np.tanh(inner))

        v = pw(x, params["lift_w"].data, params["lift_b"].data)
        for layer in range(cfg.layers):
            r_c = (params[f"layer{layer}_spec_w"].data[..., 0]
                   + 1j * params[f"layer{layer}_spec_w"].data[..., 1])
            if self.mode_masks[stage] is not None:
                r_c = r_c * self.mode_masks[stage].astype(r_c.dtype)
            spectrum = sfft.rfft2(v, axes=(-2, -1))
            block = np.concatenate(
                [spectrum[:, :, :half, :m2], spectrum[:, :, height - half:, :m2]], axis=2
            )
            mixed = ad.mix_modes(r_c, block)
            out_ft = np.zeros((batch, cfg.width, height, width // 2 + 1), dtype=cdtype)
            out_ft[:, :, :half, :m2] = mixed[:, :, :half]
            out_ft[:, :, height - half:, :m2] = mixed[:, :, half:]
            sp = sfft.irfft2(out_ft, s=(height, width), axes=(-2, -1))
            v = act(sp + pw(v, params[f"layer{layer}_pw_w"].data,
                            params[f"layer{layer}_pw_b"].data))
        u = act(pw(v, params["proj1_w"].data, params["proj1_b"].data))
        out = pw(u, params["proj2_w"].data, params["proj2_b"].data)
        return out[:, 0] * self._mask_f

    def _run_stage_graph(self, stage: int, x: np.ndarray) -> ad.DiffTensor:
        """Training path; x is a constant [B, C, H, W], output [B, H, W] masked."""
        params = self.stage_params[stage]
        cfg = self.configs[stage]
        v = ad.pointwise_linear(ad.DiffTensor(x), params["lift_w"], params["lift_b"])
        for layer in range(cfg.layers):
            sp = ad.spectral_conv(v, params[f"layer{layer}_spec_w"], self.mode_masks[stage])
            pw = ad.pointwise_linear(v, params[f"layer{layer}_pw_w"], params[f"layer{layer}_pw_b"])
            v = ad.gelu(ad.add(sp, pw))
        u = ad.gelu(ad.pointwise_linear(v, params["proj1_w"], params["proj1_b"]))
        out = ad.pointwise_linear(u, params["proj2_w"], params["proj2_b"])
        return ad.scale(out, self._mask_f[None, None])

    def stage_outputs(self, eps_norm: np.ndarray, upto: int | None = None,
                      chunk: int = 64) -> list[np.ndarray]:
        """Scaled-space outputs of stages 0..upto on a batch of inputs."""
        upto = len(self.configs) - 1 if upto is None else upto
        n = eps_norm.shape[0]
        outputs = []
        cumulative = np.zeros_like(eps_norm)
        for stage in range(upto + 1):
            out = np.empty_like(eps_norm)
            for lo in range(0, n, chunk):
                hi = min(lo + chunk, n)
                x = self._stage_input(stage, eps_norm[lo:hi],
                                      cumulative[lo:hi] if stage > 0 else None)
                out[lo:hi] = self._run_stage_fast(stage, x)
            outputs.append(out)
            cumulative = cumulative + out
        return outputs

    def forward(self, design: DesignGrid) -> "StagePrediction":
        """Full prediction with per-stage decomposition, in raw gradient units."""
        if design.grid != self.grid:
            raise ValidationError(f"design grid {design.grid.shape} != model grid {self.grid.shape}")
        if not np.array_equal(design.mask, self.mask):
            raise ValidationError("design mask differs from the mask the model was built for")
        eps_norm = self.normalize_eps(design.eps_image())[None]
        scaled = self.stage_outputs(eps_norm)
        raw = [out[0] * self.label_scale for out in scaled]
        cumulative = []
        total = np.zeros_like(raw[0])
        for out in raw:
            total = total + out
            cumulative.append(total)
        return StagePrediction(self.grid, self.mask, raw, cumulative)

    def predict(self, design: DesignGrid) -> GradientField:
        """Single-design inference on the hot path of the optimization loop."""
        if design.grid != self.grid:
            raise ValidationError(f"design grid {design.grid.shape} != model grid {self.grid.shape}")
        eps_norm = self.normalize_eps(design.eps_image())[None]
        cumulative = np.zeros_like(eps_norm)
        for stage in range(len(self.configs)):
            x = self._stage_input(stage, eps_norm, cumulative if stage > 0 else None)
            cumulative = cumulative + self._run_stage_fast(stage, x)
        values = cumulative[0][self.mask] * self.label_scale
        return GradientField(self.grid, values.astype(np.float64), self.mask)


@dataclass(frozen=True, eq=False)
class StagePrediction:
    """Per-stage outputs (g1, dg2, ...), their running sums, and the total."""

    grid: GridSpec
    mask: np.ndarray
    stage_outputs: list[np.ndarray]
    cumulative: list[np.ndarray]

    @property
    def final(self) -> np.ndarray:
        return self.cumulative[-1]

    def final_field(self) -> GradientField:
        return GradientField(self.grid, self.final[self.mask], self.mask)

    def stage_field(self, stage: int) -> GradientField:
        return GradientField(self.grid, self.cumulative[stage][self.mask], self.mask)


def cosine_similarity(a: GradientField, b: GradientField) -> float:
    """<a, b> / (|a| |b|) over masked cells; 0 when either norm is ~0."""
    if not np.array_equal(a.mask, b.mask):
        raise ValidationError("gradient fields have different masks")
    na, nb = np.linalg.norm(a.values), np.linalg.norm(b.values)
    if na < 1e-12 or nb < 1e-12:
        return 0.0
    return float(np.dot(a.values, b.values) / (na * nb))


def _cosine_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    denom = na * nb
    out = np.zeros(a.shape[0])
    ok = denom > 1e-24
    out[ok] = np.einsum("ij,ij->i", a[ok], b[ok]) / denom[ok]
    return out


# ---------------------------------------------------------------------------
# Stage-wise training.


@dataclass
class TrainSchedule:
    """Per-stage epoch budget (int applies to every stage), batch size, lr."""

    epochs_per_stage: int | tuple[int, ...] = 40
    batch_size: int = 16
    lr: float = 2e-3
    seed: int | None = None

    def __post_init__(self):
        if isinstance(self.epochs_per_stage, (list, tuple)):
            self.epochs_per_stage = tuple(int(e) for e in self.epochs_per_stage)
            if any(e < 1 for e in self.epochs_per_stage):
                raise ValidationError("invalid training schedule")
        else:
            self.epochs_per_stage = int(self.epochs_per_stage)
            if self.epochs_per_stage < 1:
                raise ValidationError("invalid training schedule")
        self.batch_size = int(self.batch_size)
        self.lr = float(self.lr)
        if self.batch_size < 1 or self.lr <= 0:
            raise ValidationError("invalid training schedule")

    def epochs_for(self, stage: int, total_stages: int) -> int:
        if isinstance(self.epochs_per_stage, tuple):
            if len(self.epochs_per_stage) != total_stages:
                raise ValidationError("need one epoch count per stage")
            return self.epochs_per_stage[stage]
        return self.epochs_per_stage


@dataclass
class TrainReport:
    rows: list[dict] = field(default_factory=list)
    stage_val_cosine: list[float] = field(default_factory=list)
    stage_val_rel_l2: list[float] = field(default_factory=list)

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["stage", "epoch", "train_loss",
                                                    "val_rel_l2", "val_cosine"])
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: (f"{v:.8f}" if isinstance(v, float) else v)
                                 for k, v in row.items()})


def _rel_l2_rows(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    num = np.linalg.norm(pred - target, axis=1)
    den = np.linalg.norm(target, axis=1)
    den = np.where(den > NORM_FLOOR, den, 1.0)
    return num / den


def train_stagewise(model: SwfnoModel, dataset, schedule: TrainSchedule,
                    checkpoint_dir=None, resume: bool = False,
                    start_stage: int = 0, log=None) -> TrainReport:
    """Sequential residual training with earlier stages frozen.

    ``dataset`` is a datagen.LabeledDataset; the train split fits each stage,
    the val split is scored after every epoch.  When ``checkpoint_dir`` is
    given the model is saved at every stage boundary and ``resume`` restarts
    from the first incomplete stage.
    """
    from .datagen import dataset_arrays

    eps_norm, labels_raw, splits = dataset_arrays(dataset, model)
    if labels_raw.shape[0] == 0 or len(splits["train"]) == 0:
        raise ValidationError("empty dataset")
    sigma = float(dataset.manifest["label_stats"]["std"])
    model.label_scale = sigma if sigma > 0 else 1.0
    labels = (labels_raw / model.label_scale).astype(model.dtype)

    mask_flat = model.mask.ravel()
    train_idx = np.asarray(splits["train"], dtype=np.int64)
    val_idx = np.asarray(splits["val"], dtype=np.int64)
    label_rows = labels.reshape(labels.shape[0], -1)[:, mask_flat]
    norms = np.linalg.norm(label_rows, axis=1)
    inv_norms = 1.0 / np.where(norms > NORM_FLOOR, norms, 1.0)

    report = TrainReport()
    completed = 0
    if resume and checkpoint_dir is not None and Path(checkpoint_dir, "manifest.json").exists():
        saved = load_checkpoint(checkpoint_dir)
        completed = min(int(json.loads(Path(checkpoint_dir, "manifest.json")
                                       .read_text())["completed_stages"]), len(model.configs))
        for s in range(completed):
            for name, tensor in saved.stage_params[s].items():
                model.stage_params[s][name].data = tensor.data.copy()
        if log:
            log(f"resumed after {completed} completed stage(s)")

    cumulative = np.zeros_like(eps_norm)
    if completed:
        outs = model.stage_outputs(eps_norm, upto=completed - 1)
        cumulative = np.sum(outs, axis=0).astype(model.dtype)

    seed = schedule.seed if schedule.seed is not None else model.seed
    for stage in range(completed, len(model.configs)):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1000 + stage]))
        params = model.parameters(stage)
        opt = ad.AdamState.for_params(params, lr=schedule.lr)
        x_train = model._stage_input(stage, eps_norm[train_idx],
                                     cumulative[train_idx] if stage > 0 else None)
        g_train = labels[train_idx]
        cum_train = cumulative[train_idx]
        inv_train = inv_norms[train_idx].astype(model.dtype)

        for epoch in range(schedule.epochs_for(stage, len(model.configs))):
            perm = rng.permutation(len(train_idx))
            epoch_loss = 0.0
            for lo in range(0, len(perm), schedule.batch_size):
                sel = perm[lo:lo + schedule.batch_size]
                out = model._run_stage_graph(stage, x_train[sel])
                cum = ad.add_const(out, cum_train[sel][:, None])
                diff = ad.sub(cum, g_train[sel][:, None])
                ssum = ad.sum_axes(ad.mul(diff, diff), axes=(1, 2, 3))
                rel = ad.scale(ad.sqrt(ssum), inv_train[sel])
                loss = ad.scale(ad.sum_axes(rel), 1.0 / len(sel))
                loss_val = float(loss.data)
                if not math.isfinite(loss_val):
                    raise TrainingError(
                        f"non-finite loss at stage {stage + 1}, epoch {epoch + 1}",
                        stage=stage + 1, epoch=epoch + 1,
                    )
                ad.zero_grads(params)
                loss.backward()
                ad.adam_step(params, opt)
                epoch_loss += loss_val * len(sel)
            epoch_loss /= len(train_idx)

            val_metrics = _validate(model, stage, eps_norm, cumulative, labels,
                                    val_idx, mask_flat)
            report.rows.append(dict(stage=stage + 1, epoch=epoch + 1,
                                    train_loss=epoch_loss, **val_metrics))
            if log:
                log(f"stage {stage + 1} epoch {epoch + 1}: "
                    f"loss {epoch_loss:.4f} val_rel_l2 {val_metrics['val_rel_l2']:.4f} "
                    f"val_cosine {val_metrics['val_cosine']:.4f}")

        report.stage_val_rel_l2.append(report.rows[-1]["val_rel_l2"])
        report.stage_val_cosine.append(report.rows[-1]["val_cosine"])

        stage_out = np.empty_like(eps_norm)
        for lo in range(0, eps_norm.shape[0], 64):
            hi = min(lo + 64, eps_norm.shape[0])
            x = model._stage_input(stage, eps_norm[lo:hi],
                                   cumulative[lo:hi] if stage > 0 else None)
            stage_out[lo:hi] = model._run_stage_fast(stage, x)
        cumulative = (cumulative + stage_out).astype(model.dtype)

        if checkpoint_dir is not None:
            save_checkpoint(model, checkpoint_dir, completed_stages=stage + 1)
    return report


def _validate(model, stage, eps_norm, cumulative, labels, val_idx, mask_flat):
    if len(val_idx) == 0:
        return dict(val_rel_l2=float("nan"), val_cosine=float("nan"))
    x_val = model._stage_input(stage, eps_norm[val_idx],
                               cumulative[val_idx] if stage > 0 else None)
    pred = cumulative[val_idx] + model._run_stage_fast(stage, x_val)
    pred_rows = pred.reshape(pred.shape[0], -1)[:, mask_flat]
    tgt_rows = labels[val_idx].reshape(len(val_idx), -1)[:, mask_flat]
    return dict(
        val_rel_l2=float(np.mean(_rel_l2_rows(pred_rows, tgt_rows))),
        val_cosine=float(np.mean(_cosine_rows(pred_rows, tgt_rows))),
    )


# ---------------------------------------------------------------------------
# Checkpoints: directory of .nadj parameter tensors plus a manifest.


def save_checkpoint(model: SwfnoModel, path, completed_stages: int | None = None):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    params_entry = {}
    for s, stage in enumerate(model.stage_params):
        for name, tensor in stage.items():
            fname = f"stage{s}_{name}.nadj"
            data = tensor.data
            if data.ndim > 4:
                # tensor files cap at rank 4; fold trailing axes, manifest keeps shape
                data = data.reshape(data.shape[:3] + (-1,))
            write_tensor(path / fname, data)
            params_entry[f"{s}/{name}"] = dict(file=fname, shape=list(tensor.data.shape),
                                               dtype=str(tensor.data.dtype))
    write_tensor(path / "mask.nadj", model.mask.astype(np.float64))
    manifest = dict(
        format_version=1,
        kind="swfno-checkpoint",
        grid=dict(shape=list(model.grid.shape), spacing=model.grid.spacing,
                  origin=list(model.grid.origin)),
        eps_min=model.eps_min,
        eps_max=model.eps_max,
        dtype="f64" if model.dtype == np.float64 else "f32",
        seed=model.seed,
        band_pass=model.band_pass,
        label_scale=model.label_scale,
        stages=[dict(in_channels=c.in_channels, width=c.width, out_channels=c.out_channels,
                     layers=c.layers, modes=list(c.modes)) for c in model.configs],
        completed_stages=len(model.configs) if completed_stages is None else completed_stages,
        params=params_entry,
    )
    (path / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def load_checkpoint(path) -> SwfnoModel:
    from .errors import StorageError

    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise StorageError(f"missing manifest in {path}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format_version") != 1 or manifest.get("kind") != "swfno-checkpoint":
        raise StorageError(f"unsupported checkpoint manifest in {path}")
    grid = GridSpec(tuple(manifest["grid"]["shape"]), manifest["grid"]["spacing"],
                    tuple(manifest["grid"]["origin"]))
    mask = read_tensor(path / "mask.nadj").astype(bool)
    configs = [FnoBlockConfig(c["in_channels"], c["width"], c["out_channels"], c["layers"],
                              tuple(c["modes"])) for c in manifest["stages"]]
    dtype = np.float64 if manifest["dtype"] == "f64" else np.float32
    model = SwfnoModel(grid, mask, manifest["eps_min"], manifest["eps_max"], configs,
                       dtype=dtype, seed=manifest["seed"], band_pass=manifest["band_pass"],
                       label_scale=manifest["label_scale"])
    for key, entry in manifest["params"].items():
        s, name = key.split("/", 1)
        data = read_tensor(path / entry["file"]).reshape(entry["shape"])
        model.stage_params[int(s)][name].data = data.astype(dtype)
    return model
