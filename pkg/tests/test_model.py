"""Tests for the depth network and its domain discriminator."""

import os
import sys
import unittest

import torch
from torch import nn

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from errors import ConfigInvalid, ShapeMismatch
from losses import adversarial_loss
from model import DepthAdaptNet, ModelConfig, parameter_counts


def tiny_model_config(**overrides):
    values = dict(base_width=4, n_downsample=2, n_res_blocks=1, disc_hidden=8, image_size=16)
    values.update(overrides)
    return ModelConfig(**values)


class TestShapes(unittest.TestCase):
    def test_desk_feature_shape(self):
        torch.manual_seed(0)
        model = DepthAdaptNet(ModelConfig.desk())
        features = model.forward_features(torch.randn(8, 3, 64, 64))
        self.assertEqual(tuple(features.shape), (8, 64, 16, 16))
        self.assertEqual(tuple(model.pool_bottleneck(features).shape), (8, 64))

    @unittest.skipUnless(os.environ.get("LUMEN_DA_SLOW"), "full-size forward pass")
    def test_default_feature_shape(self):
        model = DepthAdaptNet(ModelConfig())
        with torch.no_grad():
            features = model.forward_features(torch.randn(1, 3, 256, 256))
        self.assertEqual(tuple(features.shape), (1, 256, 64, 64))

    def test_depth_matches_input_size_and_range(self):
        torch.manual_seed(0)
        model = DepthAdaptNet(tiny_model_config())
        depth = model(torch.randn(3, 3, 16, 16))
        self.assertEqual(tuple(depth.shape), (3, 1, 16, 16))
        self.assertTrue(bool(((depth > 0) & (depth < 1)).all()))
        mm = model.predict_mm(torch.randn(1, 3, 16, 16))
        self.assertLessEqual(float(mm.max()), 100.0)
        self.assertFalse(mm.requires_grad)

    def test_identical_inputs_give_identical_features(self):
        torch.manual_seed(0)
        model = DepthAdaptNet(tiny_model_config())
        image = torch.randn(1, 3, 16, 16)
        features = model.forward_features(torch.cat([image, image]))
        self.assertTrue(torch.equal(features[0], features[1]))

    def test_wrong_input_shape(self):
        model = DepthAdaptNet(tiny_model_config())
        with self.assertRaises(ShapeMismatch):
            model.forward_features(torch.randn(1, 3, 32, 32))
        with self.assertRaises(ShapeMismatch):
            model.forward_features(torch.randn(3, 16, 16))

    def test_parameter_counts_desk(self):
        counts = parameter_counts(DepthAdaptNet(ModelConfig.desk()))
        self.assertEqual(counts["features"], 320928)
        self.assertEqual(counts["regressor"], 23873)
        self.assertEqual(counts["discriminator"], 24961)
        self.assertEqual(counts["total"], 369762)

    def test_config_validation(self):
        with self.assertRaises(ConfigInvalid):
            tiny_model_config(image_size=18).validate()
        with self.assertRaises(ConfigInvalid):
            tiny_model_config(max_depth_mm=0.0).validate()


class TestPoolAndDiscriminator(unittest.TestCase):
    def setUp(self):
        torch.manual_seed(1)
        self.model = DepthAdaptNet(tiny_model_config())
        self.channels = self.model.cfg.bottleneck_channels

    def test_pool_of_constant_map(self):
        pooled = DepthAdaptNet.pool_bottleneck(torch.full((2, self.channels, 4, 4), 0.75))
        self.assertTrue(torch.equal(pooled, torch.full((2, self.channels), 0.75)))

    def test_zero_final_layer_gives_half(self):
        nn.init.zeros_(self.model.discriminator.final.weight)
        nn.init.zeros_(self.model.discriminator.final.bias)
        prob = self.model.discriminate(torch.randn(5, self.channels))
        self.assertTrue(torch.equal(prob, torch.full((5,), 0.5)))

    def test_outputs_are_probabilities(self):
        prob = self.model.discriminate(torch.randn(6, self.channels) * 50)
        self.assertEqual(tuple(prob.shape), (6,))
        self.assertTrue(bool(((prob >= 0) & (prob <= 1)).all()))

    def test_wrong_pooled_width(self):
        with self.assertRaises(ShapeMismatch):
            self.model.discriminate(torch.randn(2, self.channels + 1))

    def test_reversal_flips_feature_gradient(self):
        pooled = torch.randn(4, self.channels, requires_grad=True)
        self.model.discriminate(pooled).sum().backward()
        plain = pooled.grad.clone()
        pooled.grad = None
        self.model.discriminate(pooled, grl_lambda=0.5).sum().backward()
        self.assertTrue(torch.allclose(pooled.grad, -0.5 * plain, atol=1e-7))

    def test_separable_features_are_learned(self):
        torch.manual_seed(2)
        source = torch.randn(64, self.channels) + 2.0
        target = torch.randn(64, self.channels) - 2.0
        optimizer = torch.optim.Adam(self.model.discriminator.parameters(), lr=1e-2)
        for _ in range(200):
            d_s = self.model.discriminate(source)
            d_t = self.model.discriminate(target)
            loss = adversarial_loss(d_s, d_t)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        with torch.no_grad():
            correct = int((self.model.discriminate(source) > 0.5).sum() + (self.model.discriminate(target) < 0.5).sum())
        self.assertGreater(correct / 128, 0.95)


if __name__ == "__main__":
    unittest.main()
