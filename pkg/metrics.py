"""
Depth evaluation: median scaling, SSIM / MAE / RMSE / δ1, aggregate reports
and absolute-error heatmaps.

Metric functions work on numpy arrays in float64. Depth arguments are in
millimeters unless noted.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import torch
from matplotlib.colors import LinearSegmentedColormap
from numpy.lib.stride_tricks import sliding_window_view

from config import (
    DELTA_THRESHOLD,
    HEATMAP_DIR,
    REPORT_JSON,
    REPORT_MD,
    SSIM_K1,
    SSIM_K2,
    SSIM_SIGMA,
    SSIM_WINDOW,
)
from dataset import image_to_tensor, load_depth, load_rgb
from errors import ConfigInvalid, DegenerateInput, EmptyDataset, MissingLabels, ShapeMismatch
from log_utils import RunLogger
from output import read_json, write_json, write_rgb_png, write_text
from report import format_table

METRIC_KEYS = ("ssim", "mae_mm", "rmse_mm", "delta1")
SSIM_OPERAND = "depth / max_depth_mm"

ERROR_CMAP = LinearSegmentedColormap.from_list("abs_error", [(0.0, 0.0, 1.0), (1.0, 0.0, 0.0)])


def _check(pred, gt, mask=None):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    if mask is None:
        mask = np.ones(pred.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != pred.shape:
        raise ShapeMismatch(f"mask {mask.shape} vs maps {pred.shape}")
    return pred, gt, mask


def median_scale(pred, gt, mask=None) -> np.ndarray:
    """pred × median(gt)/median(pred), medians over the mask."""
    pred, gt, mask = _check(pred, gt, mask)
    if not mask.any():
        raise DegenerateInput("median scaling needs at least one masked pixel")
    med_pred = np.median(pred[mask])
    med_gt = np.median(gt[mask])
    if med_pred <= 0 or med_gt <= 0:
        raise DegenerateInput(f"masked medians must be positive (pred {med_pred}, gt {med_gt})")
    return pred * (med_gt / med_pred)


def mae(pred, gt, mask=None) -> float:
    pred, gt, mask = _check(pred, gt, mask)
    if not mask.any():
        raise DegenerateInput("MAE needs at least one masked pixel")
    return float(np.mean(np.abs(pred[mask] - gt[mask])))


def rmse(pred, gt, mask=None) -> float:
    pred, gt, mask = _check(pred, gt, mask)
    if not mask.any():
        raise DegenerateInput("RMSE needs at least one masked pixel")
    return float(np.sqrt(np.mean((pred[mask] - gt[mask]) ** 2)))


def delta1(pred, gt, mask=None, threshold: float = DELTA_THRESHOLD) -> float:
    """Fraction of masked pixels with max(pred/gt, gt/pred) < threshold."""
    pred, gt, mask = _check(pred, gt, mask)
    if not mask.any():
        raise DegenerateInput("δ1 needs at least one masked pixel")
    p, g = pred[mask], gt[mask]
    if np.any(p <= 0) or np.any(g <= 0):
        raise DegenerateInput("δ1 is undefined for nonpositive depths")
    ratio = np.maximum(p / g, g / p)
    return float(np.count_nonzero(ratio < threshold) / ratio.size)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 1D Gaussian; the 2D window is its outer product."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable: the window axis is appended last by sliding_window_view
    rows = sliding_window_view(x, g.size, axis=1) @ g
    return sliding_window_view(rows, g.size, axis=0) @ g


def ssim(a, b, window: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA,
         k1: float = SSIM_K1, k2: float = SSIM_K2, data_range: float = 1.0) -> float:
    """Mean SSIM over all fully-contained Gaussian windows."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeMismatch(f"ssim needs two equal 2D maps, got {a.shape} and {b.shape}")
    if min(a.shape) < window:
        raise ShapeMismatch(f"maps {a.shape} are smaller than the {window}×{window} window")
    g = gaussian_window(window, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def error_heatmap(pred, gt, mask=None) -> np.ndarray:
    """|pred − gt| through a blue→red map scaled to the image's max error; masked-out pixels black."""
    pred, gt, mask = _check(pred, gt, mask)
    err = np.abs(pred - gt)
    peak = err[mask].max() if mask.any() else 0.0
    norm = err / peak if peak > 0 else np.zeros_like(err)
    rgb = ERROR_CMAP(np.clip(norm, 0.0, 1.0))[..., :3]
    rgb[~mask] = 0.0
    return rgb


def frame_metrics(pred_mm, gt_mm, mask, max_depth_mm: float,
                  threshold: float = DELTA_THRESHOLD, median_scaling: bool = True):
    """All four metrics for one frame. Returns (metrics dict, evaluated prediction)."""
    pred_mm, gt_mm, mask = _check(pred_mm, gt_mm, mask)
    if median_scaling:
        pred_mm = median_scale(pred_mm, gt_mm, mask)
    a = np.where(mask, pred_mm / max_depth_mm, 0.0)
    b = np.where(mask, gt_mm / max_depth_mm, 0.0)
    values = {
        "ssim": ssim(a, b),
        "mae_mm": mae(pred_mm, gt_mm, mask),
        "rmse_mm": rmse(pred_mm, gt_mm, mask),
        "delta1": delta1(pred_mm, gt_mm, mask, threshold),
    }
    return values, pred_mm


@dataclass
class EvalConfig:
    median_scaling: bool = True
    delta_threshold: float = DELTA_THRESHOLD
    heatmaps: bool = True
    workers: int = 1

    def validate(self) -> None:
        if self.delta_threshold <= 1.0:
            raise ConfigInvalid("eval.delta_threshold must be > 1")
        if self.workers < 1:
            raise ConfigInvalid("eval.workers must be >= 1")


@dataclass
class MetricsReport:
    method_label: str
    per_frame: list
    aggregate: dict = field(default_factory=dict)
    n_frames: int = 0
    eval_config: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @classmethod
    def from_frames(cls, method_label: str, per_frame: list, eval_config: dict | None = None,
                    provenance: dict | None = None) -> "MetricsReport":
        frames = sorted(per_frame, key=lambda f: f["id"])
        return cls(
            method_label=method_label,
            per_frame=frames,
            aggregate=aggregate_frames(frames),
            n_frames=len(frames),
            eval_config=dict(eval_config or {}),
            provenance=dict(provenance or {}),
        )

    def to_dict(self) -> dict:
        return {
            "method_label": self.method_label,
            "n_frames": self.n_frames,
            "aggregate": self.aggregate,
            "eval_config": self.eval_config,
            "provenance": self.provenance,
            "per_frame": self.per_frame,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "MetricsReport":
        try:
            return cls(
                method_label=payload["method_label"],
                per_frame=payload.get("per_frame", []),
                aggregate=payload["aggregate"],
                n_frames=payload.get("n_frames", len(payload.get("per_frame", []))),
                eval_config=payload.get("eval_config", {}),
                provenance=payload.get("provenance", {}),
            )
        except KeyError as exc:
            raise ConfigInvalid(f"report is missing {exc}") from exc


def aggregate_frames(frames: list) -> dict:
    """Mean and population std of each metric over frames."""
    out = {}
    for key in METRIC_KEYS:
        values = np.array([f[key] for f in frames], dtype=np.float64)
        if values.size == 0:
            out[key] = {"mean": None, "std": None}
            continue
        out[key] = {"mean": float(values.mean()), "std": float(values.std())}
    return out


def evaluate_predictor(predict_fn, manifest, split: str = "test", label: str = "model",
                       domain: str | None = "target", max_depth_mm: float = 100.0,
                       eval_cfg: EvalConfig | None = None, heatmap_dir: str | None = None,
                       logger: RunLogger | None = None) -> MetricsReport:
    """Evaluate `predict_fn(record, rgb) -> depth_mm` on a manifest split.

    Frames are independent and run on `eval_cfg.workers` threads; the report
    is ordered by sample id.
    """
    eval_cfg = eval_cfg or EvalConfig()
    eval_cfg.validate()
    logger = logger or RunLogger(quiet=True)
    records = manifest.select(domain, split)
    if not records:
        raise EmptyDataset(f"no {domain or 'any'}/{split} samples to evaluate")
    missing = [r.id for r in records if not r.has_depth]
    if missing:
        raise MissingLabels(f"{len(missing)} {split} samples lack depth, e.g. {missing[0]}")

    def run(record):
        rgb = load_rgb(manifest, record)
        gt, valid = load_depth(manifest, record)
        pred = np.asarray(predict_fn(record, rgb), dtype=np.float64)
        values, scaled = frame_metrics(pred, gt, valid, max_depth_mm,
                                       eval_cfg.delta_threshold, eval_cfg.median_scaling)
        if heatmap_dir:
            write_rgb_png(os.path.join(heatmap_dir, f"{record.id}.png"), error_heatmap(scaled, gt, valid))
        return {"id": record.id, **values}

    if eval_cfg.workers == 1:
        frames = [run(r) for r in records]
    else:
        with ThreadPoolExecutor(max_workers=eval_cfg.workers) as executor:
            frames = list(executor.map(run, records))
    logger.add_frames(len(frames))

    report = MetricsReport.from_frames(
        label,
        frames,
        eval_config={
            "split": split,
            "domain": domain,
            "median_scaling": eval_cfg.median_scaling,
            "delta_threshold": eval_cfg.delta_threshold,
            "ssim_operand": SSIM_OPERAND,
            "max_depth_mm": max_depth_mm,
        },
        provenance={"manifest_hash": manifest.content_hash()},
    )
    agg = report.aggregate
    logger.ok(label, f"{report.n_frames} frames, RMSE {agg['rmse_mm']['mean']:.3f} mm, δ1 {agg['delta1']['mean']:.3f}")
    return report


def model_predictor(model):
    """Wrap a DepthAdaptNet as a `predict_fn` for evaluate_predictor."""
    def predict(record, rgb):
        with torch.no_grad():
            image = image_to_tensor(rgb).unsqueeze(0)
            return model.predict_mm(image)[0, 0].double().numpy()

    return predict


def evaluate(ckpt, manifest, split: str = "test", label: str | None = None,
             domain: str | None = "target", eval_cfg: EvalConfig | None = None,
             out_dir: str | None = None, logger: RunLogger | None = None) -> MetricsReport:
    """Evaluate a checkpoint; writes report.json, report.md and heatmaps when out_dir is set."""
    eval_cfg = eval_cfg or EvalConfig()
    model = ckpt.build_model()
    model.eval()
    heatmap_dir = os.path.join(out_dir, HEATMAP_DIR) if out_dir and eval_cfg.heatmaps else None
    report = evaluate_predictor(
        model_predictor(model), manifest, split=split, label=label or ckpt.phase, domain=domain,
        max_depth_mm=ckpt.model_config.max_depth_mm, eval_cfg=eval_cfg,
        heatmap_dir=heatmap_dir, logger=logger,
    )
    report.provenance.update({
        "checkpoint_phase": ckpt.phase,
        "checkpoint_epoch": ckpt.epoch,
        "seed": ckpt.seed,
    })
    if out_dir:
        write_report(report, out_dir)
    return report


def write_report(report: MetricsReport, out_dir: str) -> None:
    write_json(os.path.join(out_dir, REPORT_JSON), report.to_dict())
    write_text(os.path.join(out_dir, REPORT_MD), format_table([report.to_dict()]))


def load_report(path: str) -> MetricsReport:
    return MetricsReport.from_dict(read_json(path))
