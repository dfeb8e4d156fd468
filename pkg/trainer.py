"""
Two-phase training: supervised source pretraining with early stopping, then
domain-adversarial fine-tuning on source (labeled) + target (unlabeled) batches.

Run directory layout:
    config.json        resolved configuration echo
    train.log.jsonl    one JSON object per optimizer step and per epoch
    ckpt_{epoch}/      periodic checkpoints (resume points)
    ckpt_best/         best validation checkpoint (pretraining)
    ckpt_final/        the checkpoint the phase returned
    .lock              advisory lock held while a command owns the directory
"""

from __future__ import annotations

import fcntl
import hashlib
import os
import re
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import torch
from torch.utils.data import DataLoader

from checkpoint import PHASE_ADAPT, PHASE_SOURCE, Checkpoint, load_checkpoint, save_checkpoint
from config import (
    ADAM_BETAS,
    ADAPT_EPOCHS,
    BATCH_SIZE,
    CHECKPOINT_BEST,
    CHECKPOINT_FINAL,
    CHECKPOINT_PREFIX,
    CONFIG_ECHO_NAME,
    DEFAULT_SEED,
    DESK_ADAPT_EPOCHS,
    DESK_CACHE_FRAMES,
    DESK_EARLY_STOP_PATIENCE,
    DESK_PRETRAIN_EPOCHS,
    EARLY_STOP_PATIENCE,
    LEARNING_RATE,
    LOADER_WORKERS,
    LOCK_NAME,
    PRETRAIN_EPOCHS,
    SAVE_EVERY_EPOCHS,
    TRAIN_LOG_NAME,
)
from datagen.geometry import seed_sequence
from dataset import DatasetManifest, DepthFrameDataset
from errors import ConfigInvalid, EmptyDataset, PhaseMismatch, RunLocked
from log_utils import RunLogger, TrainLog
from losses import LossWeights, adversarial_loss, depth_loss, grl_ramp, total_loss
from metrics import delta1, median_scale, rmse
from model import DepthAdaptNet, ModelConfig
from output import canonical_json, write_json

VAL_METRIC = "val_rmse_mm"
STREAM_SOURCE = 1
STREAM_TARGET = 2
# adapted and source-only runs draw identical source batches
FINE_TUNE_STREAM = "fine_tune"


@dataclass
class TrainConfig:
    batch_size: int = BATCH_SIZE
    learning_rate: float = LEARNING_RATE
    betas: tuple = ADAM_BETAS
    pretrain_epochs: int = PRETRAIN_EPOCHS
    adapt_epochs: int = ADAPT_EPOCHS
    early_stop_patience: int = EARLY_STOP_PATIENCE
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = DEFAULT_SEED
    grl_ramp: bool = False
    probe: bool = True
    save_every: int = SAVE_EVERY_EPOCHS
    loader_workers: int = LOADER_WORKERS
    cache_frames: bool = False
    max_steps: int | None = None
    device: str = "cpu"

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        values = dict(
            pretrain_epochs=DESK_PRETRAIN_EPOCHS,
            adapt_epochs=DESK_ADAPT_EPOCHS,
            early_stop_patience=DESK_EARLY_STOP_PATIENCE,
            cache_frames=DESK_CACHE_FRAMES,
        )
        values.update(overrides)
        return cls(**values)

    def validate(self) -> None:
        for name in ("batch_size", "pretrain_epochs", "adapt_epochs", "early_stop_patience", "save_every"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigInvalid(f"train.{name} must be a positive integer, got {value!r}")
        if self.batch_size < 2:
            raise ConfigInvalid("train.batch_size must be >= 2 so adaptation batches can be split in half")
        if not self.learning_rate > 0:
            raise ConfigInvalid("train.learning_rate must be > 0")
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            raise ConfigInvalid("train.betas must be two values in [0, 1)")
        if self.loader_workers < 0:
            raise ConfigInvalid("train.loader_workers must be >= 0")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigInvalid("train.max_steps must be positive when set")
        self.weights.validate()

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["betas"] = list(self.betas)
        return payload


class EarlyStopper:
    """Tracks the best (lowest) validation value and counts epochs since."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_value = float("inf")
        self.best_epoch = None
        self.bad_epochs = 0

    def update(self, epoch: int, value: float) -> bool:
        """Record an epoch's metric; returns True when it is a new best."""
        if value < self.best_value:
            self.best_value = value
            self.best_epoch = epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


def loop_iter(loader):
    while True:
        for batch in loader:
            yield batch


def _stream_seed(seed: int, phase: str, epoch: int, stream: int) -> int:
    phase_id = int(hashlib.sha256(phase.encode("utf-8")).hexdigest()[:8], 16)
    return int(seed_sequence(seed, phase_id, epoch, stream).generate_state(1, dtype=np.uint64)[0])


def _config_hash(payload: dict) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


@contextmanager
def run_lock(run_dir: str):
    """Hold an exclusive advisory lock on the run directory."""
    os.makedirs(run_dir, exist_ok=True)
    lock = open(os.path.join(run_dir, LOCK_NAME), "w")
    try:
        fcntl.flock(lock, fcntl.LOCK_EX | fcntl.LOCK_NB)
    except OSError as exc:
        lock.close()
        raise RunLocked(f"{run_dir} is in use by another command") from exc
    try:
        yield
    finally:
        fcntl.flock(lock, fcntl.LOCK_UN)
        lock.close()


class RunDir:
    """Checkpoints, config echo and training log of one phase run. A None path disables persistence."""

    def __init__(self, path: str | None):
        self.path = path
        self.log = TrainLog(os.path.join(path, TRAIN_LOG_NAME)) if path else None

    def ckpt_path(self, name) -> str:
        if isinstance(name, int):
            name = f"{CHECKPOINT_PREFIX}{name}"
        return os.path.join(self.path, name)

    def echo(self, payload: dict) -> None:
        if self.path:
            write_json(os.path.join(self.path, CONFIG_ECHO_NAME), payload)

    def save(self, ckpt: Checkpoint, name) -> None:
        if self.path:
            save_checkpoint(ckpt, self.ckpt_path(name))

    def completed(self, phase: str, config_hash: str) -> Checkpoint | None:
        if not self.path or not os.path.isdir(self.ckpt_path(CHECKPOINT_FINAL)):
            return None
        ckpt = load_checkpoint(self.ckpt_path(CHECKPOINT_FINAL), with_optimizer=False)
        if ckpt.phase == phase and ckpt.provenance.get("config_hash") == config_hash:
            return ckpt
        return None

    def latest_epoch(self, phase: str, config_hash: str) -> Checkpoint | None:
        """Newest periodic checkpoint of this phase and config, if any."""
        if not self.path or not os.path.isdir(self.path):
            return None
        pattern = re.compile(rf"^{re.escape(CHECKPOINT_PREFIX)}(\d+)$")
        epochs = sorted(
            (int(m.group(1)) for m in map(pattern.match, os.listdir(self.path)) if m),
            reverse=True,
        )
        for epoch in epochs:
            ckpt = load_checkpoint(self.ckpt_path(epoch))
            if ckpt.phase == phase and ckpt.provenance.get("config_hash") == config_hash:
                return ckpt
        return None

    def state_at(self, epoch: int | None) -> dict | None:
        """Model state saved for `epoch`, from ckpt_best or the periodic checkpoint."""
        if not self.path or epoch is None:
            return None
        for name in (CHECKPOINT_BEST, epoch):
            if os.path.isdir(self.ckpt_path(name)):
                ckpt = load_checkpoint(self.ckpt_path(name), with_optimizer=False)
                if ckpt.epoch == epoch:
                    return ckpt.model_state
        return None

    def step(self, **record) -> None:
        if self.log:
            self.log.step(**record)

    def epoch(self, phase: str, epoch: int, **metrics) -> None:
        if self.log:
            self.log.epoch(phase, epoch, **metrics)

    def truncate_after(self, phase: str, epoch: int) -> None:
        if self.log:
            self.log.truncate_after(phase, epoch)


def _loader(dataset, batch_size: int, cfg: TrainConfig, shuffle: bool, generator=None) -> DataLoader:
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=shuffle,
        generator=generator,
        num_workers=cfg.loader_workers,
        drop_last=False,
    )


def _labeled(manifest: DatasetManifest, domain: str, split: str, model_cfg: ModelConfig,
             cfg: TrainConfig) -> DepthFrameDataset:
    return DepthFrameDataset.from_manifest(manifest, domain, split, labeled=True, max_depth_mm=model_cfg.max_depth_mm,
                                           cache=cfg.cache_frames)


def _unlabeled(manifest: DatasetManifest, domain: str, split: str, model_cfg: ModelConfig,
               cfg: TrainConfig) -> DepthFrameDataset:
    return DepthFrameDataset.from_manifest(manifest, domain, split, labeled=False, max_depth_mm=model_cfg.max_depth_mm,
                                           cache=cfg.cache_frames)


def _make_optimizer(model: DepthAdaptNet, cfg: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=cfg.learning_rate, betas=tuple(cfg.betas))


def validation_metrics(model: DepthAdaptNet, dataset: DepthFrameDataset, cfg: TrainConfig) -> dict:
    """Median-scaled RMSE (mm) and δ1 averaged over frames."""
    device = torch.device(cfg.device)
    max_depth = model.cfg.max_depth_mm
    rmses, deltas = [], []
    with torch.no_grad():
        for batch in _loader(dataset, cfg.batch_size, cfg, shuffle=False):
            pred = model(batch["image"].to(device)).cpu().double().numpy() * max_depth
            gt = batch["depth"].double().numpy() * max_depth
            masks = batch["mask"].numpy()
            for p, g, m in zip(pred[:, 0], gt[:, 0], masks[:, 0]):
                if not m.any():
                    continue
                scaled = median_scale(p, g, m)
                rmses.append(rmse(scaled, g, m))
                deltas.append(delta1(scaled, g, m))
    if not rmses:
        raise EmptyDataset("no validation frame has valid depth pixels")
    return {VAL_METRIC: float(np.mean(rmses)), "val_delta1": float(np.mean(deltas))}


def discriminator_accuracy(model: DepthAdaptNet, source: DepthFrameDataset, target: DepthFrameDataset,
                           cfg: TrainConfig) -> float:
    """Fraction of held-out frames whose domain the discriminator gets right (0.5 = confused)."""
    device = torch.device(cfg.device)
    correct = 0
    total = 0
    with torch.no_grad():
        for dataset, is_source in ((source, True), (target, False)):
            for batch in _loader(dataset, cfg.batch_size, cfg, shuffle=False):
                pooled = model.pool_bottleneck(model.forward_features(batch["image"].to(device)))
                prob = model.discriminate(pooled)
                hits = prob > 0.5 if is_source else prob < 0.5
                correct += int(hits.sum())
                total += int(prob.numel())
    if total == 0:
        raise EmptyDataset("discriminator probe has no frames")
    return correct / total


def _source_step(model, batch, cfg: TrainConfig, device):
    image = batch["image"].to(device)
    pred = model.forward_depth(model.forward_features(image))
    return depth_loss(pred, batch["depth"].to(device), batch["mask"].to(device), cfg.weights)


# ── Phase 1: source pretraining ──────────────────────────────────────

def train_source(manifest: DatasetManifest, cfg: TrainConfig, model_cfg: ModelConfig,
                 run_dir: str | None = None, logger: RunLogger | None = None,
                 echo: dict | None = None) -> Checkpoint:
    """Minimize the depth loss on source-train; return the best source-val checkpoint."""
    logger = logger or RunLogger()
    cfg.validate()
    model_cfg.validate()
    if manifest.image_size != model_cfg.image_size:
        raise ConfigInvalid(f"dataset image size {manifest.image_size} != model image size {model_cfg.image_size}")
    train_set = _labeled(manifest, "source", "train", model_cfg, cfg)
    val_set = _labeled(manifest, "source", "val", model_cfg, cfg)

    run = RunDir(run_dir)
    config_hash = _config_hash({
        "phase": PHASE_SOURCE,
        "train": cfg.to_dict(),
        "model": model_cfg.to_dict(),
        "manifest": manifest.content_hash(),
    })
    with _maybe_lock(run_dir):
        done = run.completed(PHASE_SOURCE, config_hash)
        if done is not None:
            logger.ok("train", f"{run_dir} already complete (best epoch {done.best_epoch})")
            return done
        run.echo(echo or {"train": cfg.to_dict(), "model": model_cfg.to_dict()})

        device = torch.device(cfg.device)
        torch.manual_seed(cfg.seed)
        model = DepthAdaptNet(model_cfg).to(device)
        optimizer = _make_optimizer(model, cfg)
        stopper = EarlyStopper(cfg.early_stop_patience)
        history = []
        best_state = None
        start_epoch = 1
        global_step = 0

        resume = run.latest_epoch(PHASE_SOURCE, config_hash)
        if resume is not None:
            model.load_state_dict(resume.model_state)
            if resume.optimizer_state is not None:
                optimizer.load_state_dict(resume.optimizer_state)
            history = list(resume.metric_history)
            for entry in history:
                stopper.update(entry["epoch"], entry[VAL_METRIC])
            best_state = run.state_at(stopper.best_epoch)
            start_epoch = resume.epoch + 1
            global_step = resume.global_step
            run.truncate_after(PHASE_SOURCE, resume.epoch)
            logger.info(f"Resuming source pretraining at epoch {start_epoch}")

        logger.info(f"Source pretraining: {len(train_set)} train / {len(val_set)} val frames")
        generator = torch.Generator()
        epoch = start_epoch - 1
        for epoch in range(start_epoch, cfg.pretrain_epochs + 1):
            if stopper.should_stop or (cfg.max_steps is not None and global_step >= cfg.max_steps):
                epoch -= 1
                break
            generator.manual_seed(_stream_seed(cfg.seed, PHASE_SOURCE, epoch, STREAM_SOURCE))
            model.train()
            for batch in _loader(train_set, cfg.batch_size, cfg, shuffle=True, generator=generator):
                l_d = _source_step(model, batch, cfg, device)
                loss = total_loss(l_d, 0.0, cfg.weights)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                global_step += 1
                run.step(phase=PHASE_SOURCE, epoch=epoch, step=global_step, l_d=float(l_d.item()),
                         l_adv=0.0, l_total=float(l_d.item()), gamma=0.0, grl_lambda=0.0)
                if cfg.max_steps is not None and global_step >= cfg.max_steps:
                    break

            model.eval()
            metrics = validation_metrics(model, val_set, cfg)
            history.append({"epoch": epoch, **metrics})
            improved = stopper.update(epoch, metrics[VAL_METRIC])
            run.epoch(PHASE_SOURCE, epoch, improved=improved, **metrics)
            if improved:
                best_state = {k: v.detach().cpu().clone() for k, v in model.state_dict().items()}
                run.save(_snapshot(model, PHASE_SOURCE, cfg, epoch, history, stopper.best_epoch,
                                   global_step, config_hash, state=best_state), CHECKPOINT_BEST)
            if epoch % cfg.save_every == 0:
                run.save(_snapshot(model, PHASE_SOURCE, cfg, epoch, history, stopper.best_epoch, global_step,
                                   config_hash, optimizer=optimizer), epoch)
            logger.ok(f"epoch {epoch}", f"val RMSE {metrics[VAL_METRIC]:.3f} mm, δ1 {metrics['val_delta1']:.3f}"
                      + (" (best)" if improved else ""))
            if stopper.should_stop:
                logger.info(f"Early stop at epoch {epoch}: no improvement for {stopper.bad_epochs} epochs")
                break

        if best_state is None:
            raise EmptyDataset("source pretraining finished without a validation pass")
        best = _snapshot(model, PHASE_SOURCE, cfg, stopper.best_epoch, history, stopper.best_epoch,
                         global_step, config_hash, state=best_state)
        best.provenance["stopped_epoch"] = epoch
        run.save(best, CHECKPOINT_FINAL)
        return best


def _snapshot(model, phase, cfg, epoch, history, best_epoch, global_step, config_hash,
              optimizer=None, state=None, **provenance) -> Checkpoint:
    ckpt = Checkpoint.capture(
        model, phase, optimizer=optimizer,
        epoch=epoch, seed=cfg.seed, metric_history=[dict(h) for h in history],
        best_epoch=best_epoch, global_step=global_step,
        provenance={"config_hash": config_hash, **provenance},
    )
    if state is not None:
        ckpt.model_state = {k: v.clone() for k, v in state.items()}
    return ckpt


@contextmanager
def _maybe_lock(run_dir: str | None):
    if run_dir is None:
        yield
        return
    with run_lock(run_dir):
        yield


# ── Phase 2: adaptation and its source-only baseline ─────────────────

def adapt_domain(ckpt: Checkpoint, src_manifest: DatasetManifest, tgt_manifest: DatasetManifest,
                 cfg: TrainConfig, run_dir: str | None = None, logger: RunLogger | None = None,
                 echo: dict | None = None) -> Checkpoint:
    """Adversarial fine-tuning; each step uses batch_size/2 source + batch_size/2 target frames."""
    return _fine_tune(ckpt, src_manifest, tgt_manifest, cfg, run_dir, logger, echo, adversarial=True)


def finetune_source_only(ckpt: Checkpoint, src_manifest: DatasetManifest, cfg: TrainConfig,
                         run_dir: str | None = None, logger: RunLogger | None = None,
                         echo: dict | None = None, tgt_manifest: DatasetManifest | None = None) -> Checkpoint:
    """Baseline: same schedule and source half-batches as adapt_domain, without the adversarial term.

    `tgt_manifest` is used only for the discriminator probe.
    """
    return _fine_tune(ckpt, src_manifest, tgt_manifest, cfg, run_dir, logger, echo, adversarial=False)


def _fine_tune(ckpt, src_manifest, tgt_manifest, cfg, run_dir, logger, echo, adversarial: bool) -> Checkpoint:
    logger = logger or RunLogger()
    if ckpt.phase != PHASE_SOURCE:
        raise PhaseMismatch(f"expected a {PHASE_SOURCE} checkpoint, got phase {ckpt.phase!r}")
    cfg.validate()
    model_cfg = ckpt.model_config
    if src_manifest.image_size != model_cfg.image_size:
        raise ConfigInvalid(f"source image size {src_manifest.image_size} != model image size {model_cfg.image_size}")
    if tgt_manifest is not None and tgt_manifest.image_size != model_cfg.image_size:
        raise ConfigInvalid(f"target image size {tgt_manifest.image_size} != model image size {model_cfg.image_size}")
    if adversarial and tgt_manifest is None:
        raise ConfigInvalid("adaptation needs a target manifest")

    phase = PHASE_ADAPT if adversarial else PHASE_SOURCE
    variant = "adapted" if adversarial else "source_only"
    half = cfg.batch_size // 2
    src_train = _labeled(src_manifest, "source", "train", model_cfg, cfg)
    src_val = _labeled(src_manifest, "source", "val", model_cfg, cfg) if src_manifest.select("source", "val") else None
    tgt_train = _unlabeled(tgt_manifest, "target", "train", model_cfg, cfg) if adversarial else None
    probe_target = None
    if cfg.probe and tgt_manifest is not None and src_val is not None:
        held_out = "val" if tgt_manifest.select("target", "val") else "test"
        if tgt_manifest.select("target", held_out):
            probe_target = _unlabeled(tgt_manifest, "target", held_out, model_cfg, cfg)

    run = RunDir(run_dir)
    config_hash = _config_hash({
        "phase": phase,
        "variant": variant,
        "train": cfg.to_dict(),
        "model": model_cfg.to_dict(),
        "init": ckpt.provenance.get("config_hash"),
        "init_epoch": ckpt.epoch,
        "source": src_manifest.content_hash(),
        "target": tgt_manifest.content_hash() if tgt_manifest is not None else None,
    })
    with _maybe_lock(run_dir):
        done = run.completed(phase, config_hash)
        if done is not None:
            logger.ok(variant, f"{run_dir} already complete ({done.epoch} epochs)")
            return done
        run.echo(echo or {"train": cfg.to_dict(), "model": model_cfg.to_dict(), "variant": variant})

        device = torch.device(cfg.device)
        torch.manual_seed(cfg.seed)
        model = ckpt.build_model().to(device)
        # fresh optimizer state for the fine-tuning phase
        optimizer = _make_optimizer(model, cfg)
        history = []
        start_epoch = 1
        global_step = 0
        resume = run.latest_epoch(phase, config_hash)
        if resume is not None:
            model.load_state_dict(resume.model_state)
            if resume.optimizer_state is not None:
                optimizer.load_state_dict(resume.optimizer_state)
            history = list(resume.metric_history)
            start_epoch = resume.epoch + 1
            global_step = resume.global_step
            run.truncate_after(phase, resume.epoch)
            logger.info(f"Resuming {variant} fine-tuning at epoch {start_epoch}")

        steps_per_epoch = -(-len(src_train) // half)
        total_steps = steps_per_epoch * cfg.adapt_epochs
        if cfg.max_steps is not None:
            total_steps = min(total_steps, cfg.max_steps)
        w = cfg.weights
        src_gen = torch.Generator()
        tgt_gen = torch.Generator()
        logger.info(f"{variant}: {len(src_train)} source frames"
                    + (f", {len(tgt_train)} unlabeled target frames" if tgt_train is not None else "")
                    + f", {cfg.adapt_epochs} epochs")

        epoch = start_epoch - 1
        for epoch in range(start_epoch, cfg.adapt_epochs + 1):
            if global_step >= total_steps:
                epoch -= 1
                break
            model.eval()
            probe_start = discriminator_accuracy(model, src_val, probe_target, cfg) if probe_target is not None else None
            src_gen.manual_seed(_stream_seed(cfg.seed, FINE_TUNE_STREAM, epoch, STREAM_SOURCE))
            tgt_iter = None
            if tgt_train is not None:
                tgt_gen.manual_seed(_stream_seed(cfg.seed, FINE_TUNE_STREAM, epoch, STREAM_TARGET))
                tgt_iter = loop_iter(_loader(tgt_train, half, cfg, shuffle=True, generator=tgt_gen))

            model.train()
            for batch in _loader(src_train, half, cfg, shuffle=True, generator=src_gen):
                lam = w.grl_lambda * grl_ramp(global_step / max(total_steps, 1)) if cfg.grl_ramp else w.grl_lambda
                src_features = model.forward_features(batch["image"].to(device))
                pred = model.forward_depth(src_features)
                l_d = depth_loss(pred, batch["depth"].to(device), batch["mask"].to(device), w)
                if tgt_iter is not None:
                    tgt_features = model.forward_features(next(tgt_iter)["image"].to(device))
                    d_source = model.discriminate(model.pool_bottleneck(src_features), grl_lambda=lam)
                    d_target = model.discriminate(model.pool_bottleneck(tgt_features), grl_lambda=lam)
                    l_adv = adversarial_loss(d_source, d_target)
                    step_weights = w
                else:
                    l_adv = torch.zeros((), device=device)
                    step_weights = replace(w, gamma=0.0)
                    lam = 0.0
                loss = total_loss(l_d, l_adv, step_weights)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                global_step += 1
                run.step(phase=phase, epoch=epoch, step=global_step, l_d=float(l_d.item()),
                         l_adv=float(l_adv.item()), l_total=float(loss.item()), gamma=step_weights.gamma, grl_lambda=lam)
                if global_step >= total_steps:
                    break

            model.eval()
            metrics = validation_metrics(model, src_val, cfg) if src_val is not None else {}
            if probe_target is not None:
                metrics["disc_acc_start"] = probe_start
                metrics["disc_acc_end"] = discriminator_accuracy(model, src_val, probe_target, cfg)
            history.append({"epoch": epoch, **metrics})
            run.epoch(phase, epoch, variant=variant, **metrics)
            if epoch % cfg.save_every == 0:
                run.save(_snapshot(model, phase, cfg, epoch, history, None, global_step, config_hash,
                                   optimizer=optimizer, variant=variant), epoch)
            detail = ", ".join(f"{k} {v:.3f}" for k, v in metrics.items() if v is not None)
            logger.ok(f"{variant} epoch {epoch}", detail or f"step {global_step}")

        final = _snapshot(model, phase, cfg, epoch, history, None, global_step, config_hash, variant=variant)
        run.save(final, CHECKPOINT_FINAL)
        return final
