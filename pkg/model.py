"""
Depth network with a domain discriminator on its bottleneck.

Feature extractor: 7×7 conv block, stride-2 downsampling, residual blocks.
Depth regressor: transposed-conv upsampling back to input size, sigmoid output.
Discriminator: three-layer MLP on average-pooled bottleneck features.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
from torch import nn

from config import (
    DEFAULT_IMAGE_SIZE,
    DESK_BASE_WIDTH,
    DESK_DISC_HIDDEN,
    DESK_IMAGE_SIZE,
    DESK_N_RES_BLOCKS,
    DISC_LEAKY_SLOPE,
    INIT_STD,
    MODEL_BASE_WIDTH,
    MODEL_DISC_HIDDEN,
    MODEL_MAX_DEPTH_MM,
    MODEL_N_DOWNSAMPLE,
    MODEL_N_RES_BLOCKS,
)
from errors import ConfigInvalid, ShapeMismatch
from losses import grad_reverse


@dataclass
class ModelConfig:
    in_channels: int = 3
    base_width: int = MODEL_BASE_WIDTH
    n_downsample: int = MODEL_N_DOWNSAMPLE
    n_res_blocks: int = MODEL_N_RES_BLOCKS
    disc_hidden: int = MODEL_DISC_HIDDEN
    image_size: int = DEFAULT_IMAGE_SIZE
    max_depth_mm: float = MODEL_MAX_DEPTH_MM

    @classmethod
    def desk(cls) -> "ModelConfig":
        return cls(
            base_width=DESK_BASE_WIDTH,
            n_res_blocks=DESK_N_RES_BLOCKS,
            disc_hidden=DESK_DISC_HIDDEN,
            image_size=DESK_IMAGE_SIZE,
        )

    @property
    def bottleneck_channels(self) -> int:
        return self.base_width * 2 ** self.n_downsample

    def validate(self) -> None:
        for name in ("in_channels", "base_width", "disc_hidden", "image_size"):
            if getattr(self, name) < 1:
                raise ConfigInvalid(f"model.{name} must be >= 1")
        if self.n_downsample < 0 or self.n_res_blocks < 0:
            raise ConfigInvalid("model.n_downsample and model.n_res_blocks must be >= 0")
        if self.image_size % (2 ** self.n_downsample):
            raise ConfigInvalid(
                f"image_size {self.image_size} not divisible by 2^{self.n_downsample}"
            )
        if self.max_depth_mm <= 0:
            raise ConfigInvalid("model.max_depth_mm must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


class ResidualBlock(nn.Module):
    """Two 3×3 convs with instance norm and an additive skip."""

    def __init__(self, dim: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(dim, dim, kernel_size=3),
            nn.InstanceNorm2d(dim),
            nn.ReLU(),
            nn.ReflectionPad2d(1),
            nn.Conv2d(dim, dim, kernel_size=3),
            nn.InstanceNorm2d(dim),
        )

    def forward(self, x):
        return x + self.block(x)


class FeatureExtractor(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        layers = [
            nn.ReflectionPad2d(3),
            nn.Conv2d(cfg.in_channels, cfg.base_width, kernel_size=7),
            nn.InstanceNorm2d(cfg.base_width),
            nn.ReLU(),
        ]
        width = cfg.base_width
        for _ in range(cfg.n_downsample):
            layers += [
                nn.Conv2d(width, width * 2, kernel_size=3, stride=2, padding=1),
                nn.InstanceNorm2d(width * 2),
                nn.ReLU(),
            ]
            width *= 2
        layers += [ResidualBlock(width) for _ in range(cfg.n_res_blocks)]
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


class DepthRegressor(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        width = cfg.bottleneck_channels
        layers = []
        for _ in range(cfg.n_downsample):
            layers += [
                nn.ConvTranspose2d(width, width // 2, kernel_size=3, stride=2, padding=1, output_padding=1),
                nn.InstanceNorm2d(width // 2),
                nn.ReLU(),
            ]
            width //= 2
        layers += [
            nn.ReflectionPad2d(3),
            nn.Conv2d(width, 1, kernel_size=7),
            nn.Sigmoid(),
        ]
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


class DomainDiscriminator(nn.Module):
    def __init__(self, in_features: int, hidden: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(in_features, hidden),
            nn.LeakyReLU(DISC_LEAKY_SLOPE),
            nn.Linear(hidden, hidden),
            nn.LeakyReLU(DISC_LEAKY_SLOPE),
            nn.Linear(hidden, 1),
        )

    @property
    def final(self) -> nn.Linear:
        return self.net[-1]

    def forward(self, x):
        return torch.sigmoid(self.net(x)).squeeze(1)


def init_weights(module: nn.Module) -> None:
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
        nn.init.normal_(module.weight, 0.0, INIT_STD)
        if module.bias is not None:
            nn.init.zeros_(module.bias)


class DepthAdaptNet(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.features = FeatureExtractor(cfg)
        self.regressor = DepthRegressor(cfg)
        self.discriminator = DomainDiscriminator(cfg.bottleneck_channels, cfg.disc_hidden)
        self.apply(init_weights)

    def forward_features(self, image: torch.Tensor) -> torch.Tensor:
        expected = (self.cfg.in_channels, self.cfg.image_size, self.cfg.image_size)
        if image.dim() != 4 or tuple(image.shape[1:]) != expected:
            raise ShapeMismatch(f"expected (batch, {expected[0]}, {expected[1]}, {expected[2]}), got {tuple(image.shape)}")
        return self.features(image)

    def forward_depth(self, features: torch.Tensor) -> torch.Tensor:
        """Normalized depth in [0,1]; multiply by max_depth_mm for millimeters."""
        return self.regressor(features)

    @staticmethod
    def pool_bottleneck(features: torch.Tensor) -> torch.Tensor:
        return features.mean(dim=(2, 3))

    def discriminate(self, pooled: torch.Tensor, grl_lambda: float | None = None) -> torch.Tensor:
        """Source-domain probability per row; reverses gradients into `pooled` when grl_lambda is set."""
        if pooled.dim() != 2 or pooled.shape[1] != self.cfg.bottleneck_channels:
            raise ShapeMismatch(
                f"discriminator expects (batch, {self.cfg.bottleneck_channels}), got {tuple(pooled.shape)}"
            )
        if grl_lambda is not None:
            pooled = grad_reverse(pooled, grl_lambda)
        return self.discriminator(pooled)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        return self.forward_depth(self.forward_features(image))

    @torch.no_grad()
    def predict_mm(self, image: torch.Tensor) -> torch.Tensor:
        return self.forward(image) * self.cfg.max_depth_mm


def parameter_counts(model: DepthAdaptNet) -> dict:
    def count(module):
        return sum(p.numel() for p in module.parameters())

    return {
        "features": count(model.features),
        "regressor": count(model.regressor),
        "discriminator": count(model.discriminator),
        "total": count(model),
    }
