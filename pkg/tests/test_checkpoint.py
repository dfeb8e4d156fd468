"""Tests for checkpoint save/load."""

import os
import sys
import tempfile
import unittest

import torch

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from checkpoint import PHASE_ADAPT, PHASE_SOURCE, Checkpoint, load_checkpoint, save_checkpoint
from errors import ConfigInvalid, IoError
from model import DepthAdaptNet, ModelConfig

TINY = ModelConfig(base_width=4, n_downsample=2, n_res_blocks=1, disc_hidden=8, image_size=16)


def _train_one_step(model, optimizer, image):
    loss = model(image).mean() + model.discriminate(model.pool_bottleneck(model.forward_features(image))).mean()
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()


class TestCheckpointRoundTrip(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "ckpt_3")
        torch.manual_seed(0)
        self.model = DepthAdaptNet(TINY)
        self.image = torch.randn(2, 3, 16, 16)

    def tearDown(self):
        self.tmp.cleanup()

    def test_forward_outputs_identical_after_reload(self):
        ckpt = Checkpoint.capture(self.model, PHASE_SOURCE, epoch=3, seed=5, best_epoch=2,
                                  metric_history=[{"epoch": 1, "val_rmse_mm": 4.0}])
        save_checkpoint(ckpt, self.path)
        loaded = load_checkpoint(self.path)
        self.assertEqual(loaded.phase, PHASE_SOURCE)
        self.assertEqual((loaded.epoch, loaded.seed, loaded.best_epoch), (3, 5, 2))
        self.assertEqual(loaded.metric_history, [{"epoch": 1, "val_rmse_mm": 4.0}])
        self.assertEqual(loaded.model_config, TINY)
        self.assertEqual(set(loaded.model_state), set(self.model.state_dict()))
        restored = loaded.build_model()
        with torch.no_grad():
            self.assertTrue(torch.equal(restored(self.image), self.model(self.image)))

    def test_tensor_files_are_raw_float32(self):
        save_checkpoint(Checkpoint.capture(self.model, PHASE_SOURCE), self.path)
        weight = self.model.discriminator.final.weight
        size = os.path.getsize(os.path.join(self.path, "params", "discriminator.net.4.weight.f32"))
        self.assertEqual(size, 4 * weight.numel())

    def test_optimizer_state_resumes_identically(self):
        optimizer = torch.optim.Adam(self.model.parameters(), lr=1e-3)
        _train_one_step(self.model, optimizer, self.image)
        save_checkpoint(Checkpoint.capture(self.model, PHASE_ADAPT, optimizer=optimizer, global_step=1), self.path)

        loaded = load_checkpoint(self.path)
        self.assertEqual(loaded.global_step, 1)
        restored = loaded.build_model()
        restored_opt = torch.optim.Adam(restored.parameters(), lr=1e-3)
        restored_opt.load_state_dict(loaded.optimizer_state)

        _train_one_step(self.model, optimizer, self.image)
        _train_one_step(restored, restored_opt, self.image)
        for (name, a), b in zip(self.model.state_dict().items(), restored.state_dict().values()):
            self.assertTrue(torch.equal(a, b), name)

    def test_without_optimizer(self):
        optimizer = torch.optim.Adam(self.model.parameters(), lr=1e-3)
        _train_one_step(self.model, optimizer, self.image)
        save_checkpoint(Checkpoint.capture(self.model, PHASE_SOURCE, optimizer=optimizer), self.path)
        self.assertIsNone(load_checkpoint(self.path, with_optimizer=False).optimizer_state)

    def test_overwrite_in_place(self):
        save_checkpoint(Checkpoint.capture(self.model, PHASE_SOURCE, epoch=1), self.path)
        save_checkpoint(Checkpoint.capture(self.model, PHASE_SOURCE, epoch=2), self.path)
        self.assertEqual(load_checkpoint(self.path).epoch, 2)
        self.assertFalse(os.path.exists(self.path + ".tmp"))

    def test_unknown_phase_rejected(self):
        ckpt = Checkpoint.capture(self.model, PHASE_SOURCE)
        ckpt.phase = "warmup"
        with self.assertRaises(ConfigInvalid):
            save_checkpoint(ckpt, self.path)

    def test_missing_checkpoint(self):
        with self.assertRaises(IoError):
            load_checkpoint(os.path.join(self.tmp.name, "nope"))

    def test_truncated_tensor(self):
        save_checkpoint(Checkpoint.capture(self.model, PHASE_SOURCE), self.path)
        with open(os.path.join(self.path, "params", "discriminator.net.4.bias.f32"), "wb") as f:
            f.write(b"")
        with self.assertRaises(IoError):
            load_checkpoint(self.path)


if __name__ == "__main__":
    unittest.main()
