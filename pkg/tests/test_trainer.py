"""Tests for source pretraining, adaptation and run-directory handling."""

import os
import shutil
import sys
import tempfile
import unittest
from dataclasses import replace
from unittest import mock

import torch

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

import dataset
from checkpoint import PHASE_ADAPT, PHASE_SOURCE, load_checkpoint
from config import CHECKPOINT_FINAL, TRAIN_LOG_NAME
from dataset import GeneratorConfig, build_dataset
from errors import ConfigInvalid, PhaseMismatch, RunLocked
from log_utils import RunLogger, TrainLog
from losses import LossWeights
from model import ModelConfig
from trainer import (
    EarlyStopper,
    TrainConfig,
    adapt_domain,
    discriminator_accuracy,
    finetune_source_only,
    run_lock,
    train_source,
    validation_metrics,
)

TINY_COUNTS = {
    "source": {"train": 4, "val": 2, "test": 2},
    "target": {"train": 4, "val": 0, "test": 2},
}
TINY_MODEL = ModelConfig(base_width=4, n_downsample=2, n_res_blocks=1, disc_hidden=8, image_size=16)
QUIET = RunLogger(quiet=True)


def tiny_train_config(**overrides):
    values = dict(batch_size=2, pretrain_epochs=2, adapt_epochs=2, early_stop_patience=2, seed=0, learning_rate=1e-3)
    values.update(overrides)
    return TrainConfig(**values)


def log_records(run_dir, kind=None):
    records = TrainLog(os.path.join(run_dir, TRAIN_LOG_NAME)).read()
    return [r for r in records if kind is None or r["kind"] == kind]


def val_sequence(values):
    return [{"val_rmse_mm": float(v), "val_delta1": 0.5} for v in values]


class TinyDataMixin:
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cfg = GeneratorConfig(counts=TINY_COUNTS, image_size=16, seed=5, workers=2)
        cls.manifest = build_dataset(cfg, os.path.join(cls.tmp.name, "data"), logger=QUIET)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def run_dir(self, name):
        return os.path.join(self.tmp.name, self.id().rsplit(".", 1)[-1], name)


class TestEarlyStopper(unittest.TestCase):
    def test_stops_after_patience_without_improvement(self):
        stopper = EarlyStopper(patience=2)
        stopped_at = None
        for epoch, value in enumerate([5, 4, 3, 3, 3, 2], start=1):
            stopper.update(epoch, value)
            if stopper.should_stop:
                stopped_at = epoch
                break
        self.assertEqual(stopped_at, 5)
        self.assertEqual(stopper.best_epoch, 3)
        self.assertEqual(stopper.best_value, 3)

    def test_improvement_resets_counter(self):
        stopper = EarlyStopper(patience=2)
        for epoch, value in enumerate([5, 6, 4, 7], start=1):
            stopper.update(epoch, value)
        self.assertFalse(stopper.should_stop)
        self.assertEqual(stopper.best_epoch, 3)


class TestTrainConfig(unittest.TestCase):
    def test_batch_must_split_in_half(self):
        with self.assertRaises(ConfigInvalid):
            tiny_train_config(batch_size=1).validate()

    def test_bad_betas(self):
        with self.assertRaises(ConfigInvalid):
            tiny_train_config(betas=(0.9, 1.0)).validate()

    def test_desk_overrides(self):
        cfg = TrainConfig.desk(adapt_epochs=3)
        self.assertEqual(cfg.adapt_epochs, 3)
        self.assertLess(cfg.pretrain_epochs, TrainConfig().pretrain_epochs)

    def test_frame_cache_only_on_desk(self):
        self.assertFalse(TrainConfig().cache_frames)
        self.assertTrue(TrainConfig.desk().cache_frames)

    def test_training_datasets_follow_cache_setting(self):
        seen = []
        real = dataset.DepthFrameDataset.from_manifest

        def record_cache(*args, **kwargs):
            seen.append(kwargs.get("cache"))
            return real(*args, **kwargs)

        with tempfile.TemporaryDirectory() as tmp:
            manifest = build_dataset(GeneratorConfig(counts=TINY_COUNTS, image_size=16, seed=5, workers=2),
                                     os.path.join(tmp, "data"), logger=QUIET)
            with mock.patch("trainer.DepthFrameDataset.from_manifest", side_effect=record_cache):
                train_source(manifest, tiny_train_config(max_steps=1), TINY_MODEL, logger=QUIET)
                train_source(manifest, tiny_train_config(max_steps=1, cache_frames=True), TINY_MODEL, logger=QUIET)
        self.assertEqual(seen, [False, False, True, True])


class TestTrainSource(TinyDataMixin, unittest.TestCase):
    def test_early_stop_and_log_lines(self):
        run = self.run_dir("pretrain")
        cfg = tiny_train_config(pretrain_epochs=10, early_stop_patience=2)
        with mock.patch("trainer.validation_metrics", side_effect=val_sequence([5, 4, 3, 3, 3])):
            ckpt = train_source(self.manifest, cfg, TINY_MODEL, run_dir=run, logger=QUIET)
        self.assertEqual(ckpt.phase, PHASE_SOURCE)
        self.assertEqual(ckpt.best_epoch, 3)
        self.assertEqual(ckpt.epoch, 3)
        self.assertEqual(ckpt.provenance["stopped_epoch"], 5)
        steps = log_records(run, "step")
        epochs = log_records(run, "epoch")
        self.assertEqual(len(steps), 5 * 2)
        self.assertEqual([r["epoch"] for r in epochs], [1, 2, 3, 4, 5])
        self.assertEqual(len(log_records(run)), len(steps) + len(epochs))
        self.assertTrue(os.path.isdir(os.path.join(run, CHECKPOINT_FINAL)))
        self.assertTrue(os.path.isfile(os.path.join(run, "config.json")))
        final = load_checkpoint(os.path.join(run, CHECKPOINT_FINAL))
        self.assertEqual(final.epoch, 3)

    def test_step_zero_loss_is_deterministic(self):
        cfg = tiny_train_config(max_steps=1)
        first, second = self.run_dir("a"), self.run_dir("b")
        train_source(self.manifest, cfg, TINY_MODEL, run_dir=first, logger=QUIET)
        train_source(self.manifest, cfg, TINY_MODEL, run_dir=second, logger=QUIET)
        self.assertEqual(log_records(first, "step")[0]["l_d"], log_records(second, "step")[0]["l_d"])
        self.assertEqual(len(log_records(first, "step")), 1)

    def test_completed_run_is_skipped(self):
        run = self.run_dir("pretrain")
        cfg = tiny_train_config(pretrain_epochs=1)
        first = train_source(self.manifest, cfg, TINY_MODEL, run_dir=run, logger=QUIET)
        lines = len(log_records(run))
        again = train_source(self.manifest, cfg, TINY_MODEL, run_dir=run, logger=QUIET)
        self.assertEqual(len(log_records(run)), lines)
        for name, tensor in first.model_state.items():
            self.assertTrue(torch.equal(tensor, again.model_state[name]), name)

    def test_resume_continues_after_last_saved_epoch(self):
        cfg = tiny_train_config(pretrain_epochs=3, early_stop_patience=5)
        reference = train_source(self.manifest, cfg, TINY_MODEL, run_dir=self.run_dir("full"), logger=QUIET)

        run = self.run_dir("interrupted")
        train_source(self.manifest, cfg, TINY_MODEL, run_dir=run, logger=QUIET)
        # simulate a crash after epoch 2 was saved
        shutil.rmtree(os.path.join(run, "ckpt_3"))
        shutil.rmtree(os.path.join(run, CHECKPOINT_FINAL))
        resumed = train_source(self.manifest, cfg, TINY_MODEL, run_dir=run, logger=QUIET)

        self.assertEqual([r["epoch"] for r in log_records(run, "epoch")], [1, 2, 3])
        self.assertEqual(resumed.best_epoch, reference.best_epoch)
        for name, tensor in reference.model_state.items():
            self.assertTrue(torch.equal(tensor, resumed.model_state[name]), name)

    def test_locked_run_dir(self):
        run = self.run_dir("locked")
        with run_lock(run):
            with self.assertRaises(RunLocked):
                train_source(self.manifest, tiny_train_config(), TINY_MODEL, run_dir=run, logger=QUIET)

    def test_image_size_mismatch(self):
        with self.assertRaises(ConfigInvalid):
            train_source(self.manifest, tiny_train_config(), replace(TINY_MODEL, image_size=32), logger=QUIET)

    def test_validation_metrics_keys(self):
        ckpt = train_source(self.manifest, tiny_train_config(max_steps=1), TINY_MODEL, logger=QUIET)
        model = ckpt.build_model()
        model.eval()
        val = dataset.DepthFrameDataset.from_manifest(self.manifest, "source", "val", True, TINY_MODEL.max_depth_mm)
        metrics = validation_metrics(model, val, tiny_train_config())
        self.assertGreaterEqual(metrics["val_rmse_mm"], 0.0)
        self.assertTrue(0.0 <= metrics["val_delta1"] <= 1.0)


class TestFineTuning(TinyDataMixin, unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.pretrained = train_source(cls.manifest, tiny_train_config(pretrain_epochs=1), TINY_MODEL, logger=QUIET)

    def test_adapt_log_satisfies_weighted_sum(self):
        run = self.run_dir("adapt")
        ckpt = adapt_domain(self.pretrained, self.manifest, self.manifest, tiny_train_config(), run_dir=run,
                            logger=QUIET)
        self.assertEqual(ckpt.phase, PHASE_ADAPT)
        self.assertEqual(ckpt.provenance["variant"], "adapted")
        steps = log_records(run, "step")
        self.assertEqual(len(steps), 2 * 4)
        for r in steps:
            self.assertEqual(r["gamma"], 0.1)
            expected = r["l_d"] + r["gamma"] * r["l_adv"]
            self.assertLessEqual(abs(r["l_total"] - expected), 1e-6 * max(abs(expected), 1e-12))
        for r in log_records(run, "epoch"):
            self.assertIn("disc_acc_start", r)
            self.assertIn("disc_acc_end", r)

    def test_adapt_rejects_adapted_checkpoint(self):
        adapted = replace(self.pretrained, phase=PHASE_ADAPT)
        with self.assertRaises(PhaseMismatch):
            adapt_domain(adapted, self.manifest, self.manifest, tiny_train_config(), logger=QUIET)
        with self.assertRaises(PhaseMismatch):
            finetune_source_only(adapted, self.manifest, tiny_train_config(), logger=QUIET)

    def test_gamma_zero_matches_source_only(self):
        cfg = tiny_train_config(weights=LossWeights(gamma=0.0), probe=False)
        adapted = adapt_domain(self.pretrained, self.manifest, self.manifest, cfg, logger=QUIET)
        baseline = finetune_source_only(self.pretrained, self.manifest, cfg, logger=QUIET)
        self.assertEqual(adapted.global_step, baseline.global_step)
        compared = 0
        for name, tensor in baseline.model_state.items():
            if name.startswith("discriminator."):
                continue
            self.assertTrue(torch.equal(tensor, adapted.model_state[name]), name)
            compared += 1
        self.assertGreater(compared, 0)

    def test_source_only_logs_zero_adversarial_term(self):
        run = self.run_dir("baseline")
        ckpt = finetune_source_only(self.pretrained, self.manifest, tiny_train_config(), run_dir=run,
                                    logger=QUIET, tgt_manifest=self.manifest)
        self.assertEqual(ckpt.phase, PHASE_SOURCE)
        self.assertEqual(ckpt.provenance["variant"], "source_only")
        for r in log_records(run, "step"):
            self.assertEqual((r["gamma"], r["l_adv"], r["grl_lambda"]), (0.0, 0.0, 0.0))
            self.assertEqual(r["l_total"], r["l_d"])

    def test_target_training_labels_are_never_read(self):
        with mock.patch("dataset.load_depth", wraps=dataset.load_depth) as load:
            adapt_domain(self.pretrained, self.manifest, self.manifest, tiny_train_config(adapt_epochs=1),
                         logger=QUIET)
        self.assertGreater(load.call_count, 0)
        for call in load.call_args_list:
            record = call.args[1]
            self.assertFalse(record.domain == "target" and record.split == "train", record.id)

    def test_ramp_starts_at_zero(self):
        run = self.run_dir("ramp")
        adapt_domain(self.pretrained, self.manifest, self.manifest, tiny_train_config(grl_ramp=True),
                     run_dir=run, logger=QUIET)
        lams = [r["grl_lambda"] for r in log_records(run, "step")]
        self.assertEqual(lams[0], 0.0)
        self.assertEqual(lams, sorted(lams))

    def test_discriminator_probe_is_a_fraction(self):
        model = self.pretrained.build_model()
        model.eval()
        src = dataset.DepthFrameDataset.from_manifest(self.manifest, "source", "val", False, 100.0)
        tgt = dataset.DepthFrameDataset.from_manifest(self.manifest, "target", "test", False, 100.0)
        acc = discriminator_accuracy(model, src, tgt, tiny_train_config())
        self.assertTrue(0.0 <= acc <= 1.0)


@unittest.skipUnless(os.environ.get("LUMEN_DA_SLOW"), "500 optimizer steps on the desk model")
class TestOverfit(unittest.TestCase):
    def test_desk_model_memorizes_eight_frames(self):
        counts = {"source": {"train": 8, "val": 1, "test": 0}, "target": {"train": 0, "val": 0, "test": 0}}
        model_cfg = ModelConfig.desk()
        with tempfile.TemporaryDirectory() as tmp:
            manifest = build_dataset(GeneratorConfig(counts=counts, image_size=model_cfg.image_size, seed=1),
                                     os.path.join(tmp, "data"), logger=QUIET)
            cfg = TrainConfig(batch_size=8, pretrain_epochs=500, early_stop_patience=500, seed=0, save_every=500)
            run = os.path.join(tmp, "overfit")
            train_source(manifest, cfg, model_cfg, run_dir=run, logger=QUIET)
            steps = log_records(run, "step")
            last = load_checkpoint(os.path.join(run, "ckpt_500"), with_optimizer=False)
            train = dataset.DepthFrameDataset.from_manifest(manifest, "source", "train", True, model_cfg.max_depth_mm)
            model = last.build_model()
            model.eval()
            metrics = validation_metrics(model, train, cfg)
        self.assertEqual(len(steps), 500)
        self.assertLess(steps[-1]["l_d"], 0.05)
        self.assertEqual(metrics["val_delta1"], 1.0)


if __name__ == "__main__":
    unittest.main()
