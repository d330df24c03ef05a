import numpy as np
import pytest

import nadj.autodiff as ad
from nadj.datagen import dataset_arrays
from nadj.errors import TrainingError, ValidationError
from nadj.grid import GradientField, GridSpec
from nadj.swfno import (FnoBlockConfig, SwfnoModel, TrainSchedule, cosine_similarity,
                        default_mode_budgets, load_checkpoint, save_checkpoint,
                        train_stagewise, width_for_param_budget)

GRID = GridSpec((32, 32))
MASK = np.zeros(GRID.shape, dtype=bool)
MASK[10:20, 8:24] = True


def small_model(stages=3, width=6, layers=1, seed=0, **kw):
    return SwfnoModel.build(GRID, MASK, 1.0, 4.0, stages=stages, width=width,
                            layers=layers, mode_budgets=[4, 8, 16][:stages],
                            seed=seed, **kw)


def random_design(seed=0):
    from nadj.grid import DesignGrid

    rng = np.random.default_rng(seed)
    return DesignGrid(GRID, 1 + 3 * rng.random(int(MASK.sum())), 1.0, 4.0, MASK)


class TestForward:
    def test_single_stage_final_equals_stage_one(self):
        model = small_model(stages=1)
        pred = model.forward(random_design())
        np.testing.assert_array_equal(pred.final, pred.stage_outputs[0])

    def test_three_stage_decomposition_exact(self):
        model = small_model(stages=3)
        pred = model.forward(random_design(1))
        total = (pred.stage_outputs[0] + pred.stage_outputs[1]) + pred.stage_outputs[2]
        assert np.array_equal(pred.final, total)
        np.testing.assert_array_equal(pred.cumulative[1],
                                      pred.stage_outputs[0] + pred.stage_outputs[1])

    def test_zero_final_projection_gives_zero_output(self):
        model = small_model(stages=2)
        for stage in model.stage_params:
            stage["proj2_w"].data[:] = 0.0
            stage["proj2_b"].data[:] = 0.0
        pred = model.forward(random_design(2))
        assert np.all(pred.final == 0.0)

    def test_output_masked_to_design_region(self):
        model = small_model(stages=2, seed=3)
        pred = model.forward(random_design(3))
        assert np.all(pred.final[~MASK] == 0.0)

    def test_grid_mismatch_rejected(self):
        model = small_model(stages=1)
        other = GridSpec((64, 64))
        from nadj.grid import DesignGrid

        mask = np.zeros(other.shape, dtype=bool)
        mask[20:30, 20:30] = True
        design = DesignGrid(other, np.ones(100) * 2, 1.0, 4.0, mask)
        with pytest.raises(ValidationError, match="grid"):
            model.forward(design)

    def test_graph_and_fast_paths_agree_exactly(self):
        model = small_model(stages=2, layers=2, seed=4)
        design = random_design(4)
        eps_norm = model.normalize_eps(design.eps_image())[None]
        x = model._stage_input(0, eps_norm, None)
        fast = model._run_stage_fast(0, x)
        graph = model._run_stage_graph(0, x)
        assert np.array_equal(fast, graph.data[:, 0])

    def test_stage_spectral_paths_band_limited(self):
        # each stage's spectral-conv path keeps zero energy above its budget
        model = small_model(stages=3, width=4, seed=5)
        rng = np.random.default_rng(0)
        for stage, cfg in enumerate(model.configs):
            v = ad.DiffTensor(rng.standard_normal((1, cfg.width, 32, 32)))
            out = ad.spectral_conv(v, model.stage_params[stage]["layer0_spec_w"]).data
            energy = np.abs(np.fft.rfft2(out)) ** 2
            m1, m2 = cfg.modes
            half = m1 // 2
            rows = np.r_[0:half, 32 - half:32]
            in_band = np.zeros(energy.shape[2:], dtype=bool)
            in_band[rows, :m2] = True
            in_band[(32 - rows) % 32, 0] = True
            in_band[(32 - rows) % 32, -1] = True
            assert energy[:, :, ~in_band].sum() / energy.sum() <= 1e-5


class TestConfigValidation:
    def test_mode_budgets_must_be_nondecreasing(self):
        with pytest.raises(ValidationError, match="nondecreasing"):
            SwfnoModel.build(GRID, MASK, 1.0, 4.0, stages=2, width=4, layers=1,
                             mode_budgets=[8, 4])

    def test_budget_capped_by_nyquist(self):
        configs = [FnoBlockConfig(3, 4, 1, 1, (64, 4))]
        with pytest.raises(ValidationError, match="Nyquist"):
            SwfnoModel(GRID, MASK, 1.0, 4.0, configs)

    def test_stage_one_channel_count_enforced(self):
        configs = [FnoBlockConfig(4, 4, 1, 1, (4, 4))]
        with pytest.raises(ValidationError, match="stage 1"):
            SwfnoModel(GRID, MASK, 1.0, 4.0, configs)

    def test_later_stages_take_one_estimate_channel(self):
        configs = [FnoBlockConfig(3, 4, 1, 1, (4, 4)), FnoBlockConfig(3, 4, 1, 1, (8, 8))]
        with pytest.raises(ValidationError, match="estimate channel"):
            SwfnoModel(GRID, MASK, 1.0, 4.0, configs)

    def test_default_budget_ladders(self):
        assert default_mode_budgets(64, 3) == [8, 16, 32]
        assert default_mode_budgets(64, 4) == [8, 12, 24, 32]
        assert default_mode_budgets(64, 1) == [8]

    def test_width_for_param_budget(self):
        target = FnoBlockConfig(3, 12, 1, 2, (8, 8)).param_count()
        width = width_for_param_budget(target, 3, 2, (4, 4))
        got = FnoBlockConfig(3, width, 1, 2, (4, 4)).param_count()
        assert got >= target
        below = FnoBlockConfig(3, width - 1, 1, 2, (4, 4)).param_count()
        assert below < target


class TestCosineSimilarity:
    def make(self, values):
        return GradientField(GRID, np.asarray(values, dtype=float), MASK)

    def test_self_is_one_and_negation_minus_one(self):
        rng = np.random.default_rng(6)
        g = self.make(rng.standard_normal(int(MASK.sum())))
        neg = self.make(-g.values)
        assert cosine_similarity(g, g) == pytest.approx(1.0)
        assert cosine_similarity(g, neg) == pytest.approx(-1.0)

    def test_orthogonal_equal_norm_perturbation(self):
        rng = np.random.default_rng(7)
        a = rng.standard_normal(int(MASK.sum()))
        noise = rng.standard_normal(int(MASK.sum()))
        noise -= (noise @ a) / (a @ a) * a
        noise *= np.linalg.norm(a) / np.linalg.norm(noise)
        value = cosine_similarity(self.make(a), self.make(a + noise))
        assert value == pytest.approx(1 / np.sqrt(2), rel=1e-9)

    def test_zero_norm_returns_zero(self):
        g = self.make(np.ones(int(MASK.sum())))
        z = self.make(np.zeros(int(MASK.sum())))
        assert cosine_similarity(g, z) == 0.0

    def test_mask_mismatch_rejected(self):
        other_mask = np.zeros(GRID.shape, dtype=bool)
        other_mask[0:10, 0:16] = True
        a = GradientField(GRID, np.ones(int(MASK.sum())), MASK)
        b = GradientField(GRID, np.ones(int(other_mask.sum())), other_mask)
        with pytest.raises(ValidationError, match="mask"):
            cosine_similarity(a, b)


class TestTraining:
    def test_zero_labels_drive_loss_down_and_residuals_small(self, tiny_lens_dataset):
        task, dataset = tiny_lens_dataset
        import copy

        zeroed = copy.copy(dataset)
        zeroed.records = [
            type(r)(r.design, GradientField(r.design.grid,
                                            np.zeros_like(r.gradient.values),
                                            r.design.mask), r.task, r.sample_seed)
            for r in dataset.records
        ]
        zeroed.manifest = dict(dataset.manifest)
        zeroed.manifest["label_stats"] = dict(mean=0.0, std=0.0)
        model = SwfnoModel.build(task.grid, task.mask, task.eps_min, task.eps_max,
                                 stages=1, width=6, layers=1, mode_budgets=[4], seed=1)
        report = train_stagewise(model, zeroed, TrainSchedule(40, 8, 3e-2))
        first, last = report.rows[0]["train_loss"], report.rows[-1]["train_loss"]
        assert last < 0.06 * first
        # residual target a second stage would see is g - g1 = -g1 ~ 0
        pred = model.forward(dataset.records[0].design)
        residual = np.abs(pred.cumulative[0][task.mask]).max()
        assert residual < 0.05

    def test_frozen_stage_checksums_stable(self, tiny_lens_dataset):
        task, dataset = tiny_lens_dataset
        model = SwfnoModel.build(task.grid, task.mask, task.eps_min, task.eps_max,
                                 stages=3, width=6, layers=1, mode_budgets=[4, 8, 16],
                                 seed=2)
        checks = {}

        original_range = range

        # capture checksums between stages by training stage-by-stage via resume
        import tempfile

        with tempfile.TemporaryDirectory() as ckpt:
            train_stagewise(model, dataset, TrainSchedule(2, 8, 2e-3),
                            checkpoint_dir=ckpt)
            sum1 = model.parameter_checksum(0)
            sum2 = model.parameter_checksum(1)
            model2 = load_checkpoint(ckpt)
            assert model2.parameter_checksum(0) == sum1
            assert model2.parameter_checksum(1) == sum2

    def test_stage_two_not_worse_than_stage_one(self, tiny_lens_dataset):
        task, dataset = tiny_lens_dataset
        model = SwfnoModel.build(task.grid, task.mask, task.eps_min, task.eps_max,
                                 stages=2, width=8, layers=2, mode_budgets=[8, 16],
                                 seed=3)
        report = train_stagewise(model, dataset, TrainSchedule(12, 8, 3e-3))
        assert report.stage_val_rel_l2[1] <= 1.05 * report.stage_val_rel_l2[0]

    def test_nan_loss_aborts_with_stage_and_epoch(self, tiny_lens_dataset):
        task, dataset = tiny_lens_dataset
        model = SwfnoModel.build(task.grid, task.mask, task.eps_min, task.eps_max,
                                 stages=1, width=4, layers=1, mode_budgets=[4], seed=4)
        model.stage_params[0]["lift_w"].data[:] = np.float32(1e30)
        with pytest.raises(TrainingError) as err:
            train_stagewise(model, dataset, TrainSchedule(1, 8, 1e30))
        assert err.value.stage == 1
        assert err.value.epoch is not None

    def test_resume_from_stage_boundary_matches_uninterrupted(self, tiny_lens_dataset, tmp_path):
        task, dataset = tiny_lens_dataset
        schedule = TrainSchedule(2, 8, 2e-3)

        def fresh():
            return SwfnoModel.build(task.grid, task.mask, task.eps_min, task.eps_max,
                                    stages=2, width=6, layers=1, mode_budgets=[4, 8],
                                    seed=5)

        full = fresh()
        train_stagewise(full, dataset, schedule, checkpoint_dir=tmp_path / "full")

        part = fresh()

        class StopAfterStageOne(Exception):
            pass

        # simulate an interruption right after the first stage checkpoint
        from nadj import swfno as swfno_mod

        real_save = swfno_mod.save_checkpoint
        calls = {"n": 0}

        def interrupting_save(model, path, completed_stages=None):
            real_save(model, path, completed_stages)
            calls["n"] += 1
            if calls["n"] == 1:
                raise StopAfterStageOne

        swfno_mod.save_checkpoint = interrupting_save
        try:
            with pytest.raises(StopAfterStageOne):
                train_stagewise(part, dataset, schedule, checkpoint_dir=tmp_path / "part")
        finally:
            swfno_mod.save_checkpoint = real_save

        resumed = fresh()
        train_stagewise(resumed, dataset, schedule, checkpoint_dir=tmp_path / "part",
                        resume=True)
        for stage in range(2):
            assert (resumed.parameter_checksum(stage)
                    == full.parameter_checksum(stage)), f"stage {stage} differs"

    def test_empty_dataset_rejected(self, tiny_lens_dataset):
        task, dataset = tiny_lens_dataset
        import copy

        empty = copy.copy(dataset)
        empty.records = []
        empty.splits = dict(train=[], val=[], test=[])
        model = small_model(stages=1)
        with pytest.raises(ValidationError):
            train_stagewise(model, empty, TrainSchedule(1, 4, 1e-3))


class TestCheckpoint:
    def test_roundtrip_preserves_predictions(self, tmp_path):
        model = small_model(stages=3, width=5, layers=2, seed=8)
        model.label_scale = 0.37
        design = random_design(8)
        before = model.forward(design).final
        save_checkpoint(model, tmp_path / "ckpt")
        loaded = load_checkpoint(tmp_path / "ckpt")
        after = loaded.forward(design).final
        np.testing.assert_array_equal(before, after)
        assert loaded.label_scale == model.label_scale

    def test_missing_manifest(self, tmp_path):
        from nadj.errors import StorageError

        with pytest.raises(StorageError, match="missing manifest"):
            load_checkpoint(tmp_path)

    def test_save_is_deterministic(self, tmp_path):
        model = small_model(stages=1, seed=9)
        save_checkpoint(model, tmp_path / "a")
        save_checkpoint(model, tmp_path / "b")
        for name in sorted(p.name for p in (tmp_path / "a").iterdir()):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
