"""
Training objectives: scale-and-shift invariant depth loss, L1, the domain
adversarial loss, their weighted total, and the gradient reversal layer.

All functions accept a single map (H×W or flat) or a batch whose first
dimension indexes images. Batched losses are computed per image and averaged.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import torch
from torch import nn

from config import (
    GRL_LAMBDA,
    GRL_RAMP_STEEPNESS,
    LOSS_ALPHA,
    LOSS_BETA,
    LOSS_GAMMA,
    PROB_EPS,
    SSI_VAR_EPS,
)
from errors import ConfigInvalid, DegenerateInput, EmptyBatch, ShapeMismatch


@dataclass
class LossWeights:
    alpha: float = LOSS_ALPHA
    beta: float = LOSS_BETA
    gamma: float = LOSS_GAMMA
    grl_lambda: float = GRL_LAMBDA

    def validate(self) -> None:
        for name, value in asdict(self).items():
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value < 0:
                raise ConfigInvalid(f"loss weight {name} must be finite and >= 0, got {value!r}")


class AlignmentParams(NamedTuple):
    s: torch.Tensor
    t: torch.Tensor


def _as_float(x) -> torch.Tensor:
    x = torch.as_tensor(x)
    return x if x.is_floating_point() else x.to(torch.float64)


def _as_batch(pred, gt, mask):
    pred = _as_float(pred)
    gt = torch.as_tensor(gt, dtype=pred.dtype)
    mask = torch.as_tensor(mask, dtype=torch.bool)
    if pred.shape != gt.shape or pred.shape != mask.shape:
        raise ShapeMismatch(f"pred {tuple(pred.shape)}, gt {tuple(gt.shape)}, mask {tuple(mask.shape)}")
    if pred.dim() <= 2:
        return pred.reshape(1, -1), gt.reshape(1, -1), mask.reshape(1, -1)
    n = pred.shape[0]
    return pred.reshape(n, -1), gt.reshape(n, -1), mask.reshape(n, -1)


def _masked_mean(values, mask, count):
    return torch.where(mask, values, torch.zeros_like(values)).sum(dim=1) / count


def _align_rows(pred, gt, mask):
    count = mask.sum(dim=1)
    if torch.any(count < 2):
        raise DegenerateInput("scale-and-shift alignment needs at least 2 masked pixels per image")
    n = count.to(pred.dtype)
    mean_p = _masked_mean(pred, mask, n)
    mean_g = _masked_mean(gt, mask, n)
    dp = torch.where(mask, pred - mean_p[:, None], torch.zeros_like(pred))
    dg = torch.where(mask, gt - mean_g[:, None], torch.zeros_like(gt))
    var = (dp * dp).sum(dim=1) / n
    if torch.any(var.detach() <= SSI_VAR_EPS):
        raise DegenerateInput("masked prediction variance is zero; scale is undefined")
    cov = (dp * dg).sum(dim=1) / n
    s = cov / var
    t = mean_g - s * mean_p
    return s, t, n


def align_scale_shift(pred, gt, mask) -> AlignmentParams:
    """Least-squares (s, t) minimizing Σ_mask (s·pred + t − gt)².

    Returns scalars for a single map, or per-image vectors for a batch.
    """
    single = torch.as_tensor(pred).dim() <= 2
    p, g, m = _as_batch(pred, gt, mask)
    s, t, _ = _align_rows(p, g, m)
    if single:
        return AlignmentParams(s[0], t[0])
    return AlignmentParams(s, t)


def ssi_loss(pred, gt, mask) -> torch.Tensor:
    """Mean squared residual after per-image scale-and-shift alignment."""
    p, g, m = _as_batch(pred, gt, mask)
    s, t, n = _align_rows(p, g, m)
    residual = s[:, None] * p + t[:, None] - g
    per_image = _masked_mean(residual * residual, m, n)
    return per_image.mean()


def l1_loss(pred, gt, mask) -> torch.Tensor:
    """Mean absolute difference over masked pixels (unaligned)."""
    p, g, m = _as_batch(pred, gt, mask)
    count = m.sum(dim=1)
    if torch.any(count < 1):
        raise DegenerateInput("L1 loss needs at least one masked pixel per image")
    per_image = _masked_mean((p - g).abs(), m, count.to(p.dtype))
    return per_image.mean()


def depth_loss(pred, gt, mask, w: LossWeights) -> torch.Tensor:
    """alpha · SSI + beta · L1."""
    return w.alpha * ssi_loss(pred, gt, mask) + w.beta * l1_loss(pred, gt, mask)


def adversarial_loss(d_source, d_target) -> torch.Tensor:
    """−mean log D(source) − mean log(1 − D(target)); source is labeled 1."""
    d_source = _as_float(d_source)
    d_target = torch.as_tensor(d_target, dtype=d_source.dtype)
    if d_source.numel() == 0 or d_target.numel() == 0:
        raise EmptyBatch("adversarial loss needs discriminator outputs from both domains")
    d_source = d_source.clamp(PROB_EPS, 1.0 - PROB_EPS)
    d_target = d_target.clamp(PROB_EPS, 1.0 - PROB_EPS)
    return -torch.log(d_source).mean() - torch.log1p(-d_target).mean()


def total_loss(l_d, l_adv, w: LossWeights):
    """l_d + gamma · l_adv; an absent l_d counts as zero."""
    if l_d is None:
        return w.gamma * l_adv
    return l_d + w.gamma * l_adv


# ── Gradient reversal ───────────────────────────────────────────────

def reverse_gradient(upstream_gradient: torch.Tensor, lam: float) -> torch.Tensor:
    """Backward transform of the reversal layer: −lam × upstream."""
    return upstream_gradient.neg() * lam


class GradientReversal(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, lam):
        ctx.lam = float(lam)
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad_output):
        return reverse_gradient(grad_output, ctx.lam), None


def grad_reverse(x: torch.Tensor, lam: float = GRL_LAMBDA) -> torch.Tensor:
    return GradientReversal.apply(x, lam)


class GradientReversalLayer(nn.Module):
    def __init__(self, lam: float = GRL_LAMBDA):
        super().__init__()
        self.lam = lam

    def forward(self, x):
        return grad_reverse(x, self.lam)


def grl_ramp(progress: float, steepness: float = GRL_RAMP_STEEPNESS) -> float:
    """Adaptation strength schedule 2/(1+e^(−k·p)) − 1 over progress p in [0,1]."""
    p = min(max(float(progress), 0.0), 1.0)
    return 2.0 / (1.0 + math.exp(-steepness * p)) - 1.0
