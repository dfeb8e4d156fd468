"""
Checkpoint directories.

Layout:
    meta.json            config, phase, epoch, seed, metric history, tensor index
    params/<name>.f32    one raw little-endian float32 array per named tensor
    optim/<i>.<key>.f32  Adam moment buffers, when optimizer state is saved
"""

from __future__ import annotations

import os
import shutil
from dataclasses import dataclass, field

import numpy as np
import torch

from errors import ConfigInvalid, IoError
from model import DepthAdaptNet, ModelConfig
from output import read_json, write_json

CHECKPOINT_FORMAT = 1
PHASE_SOURCE = "source_pretrain"
PHASE_ADAPT = "domain_adapt"
PHASES = (PHASE_SOURCE, PHASE_ADAPT)
META_NAME = "meta.json"
PARAM_DIR = "params"
OPTIM_DIR = "optim"
_F32 = np.dtype("<f4")


@dataclass
class Checkpoint:
    model_config: ModelConfig
    model_state: dict
    phase: str
    epoch: int = 0
    seed: int = 0
    metric_history: list = field(default_factory=list)
    best_epoch: int | None = None
    global_step: int = 0
    optimizer_state: dict | None = None
    provenance: dict = field(default_factory=dict)

    def build_model(self) -> DepthAdaptNet:
        model = DepthAdaptNet(self.model_config)
        model.load_state_dict(self.model_state)
        return model

    @classmethod
    def capture(cls, model: DepthAdaptNet, phase: str, optimizer=None, **kwargs) -> "Checkpoint":
        """Snapshot a live model (tensors are cloned)."""
        state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        opt_state = None
        if optimizer is not None:
            opt_state = _clone_optimizer_state(optimizer.state_dict())
        return cls(model_config=model.cfg, model_state=state, phase=phase,
                   optimizer_state=opt_state, **kwargs)


def _clone_optimizer_state(state_dict: dict) -> dict:
    return {
        "state": {
            idx: {k: (v.detach().clone() if torch.is_tensor(v) else v) for k, v in entry.items()}
            for idx, entry in state_dict["state"].items()
        },
        "param_groups": [dict(g) for g in state_dict["param_groups"]],
    }


def _write_f32(path: str, tensor: torch.Tensor) -> None:
    np.ascontiguousarray(tensor.detach().cpu().numpy(), dtype=_F32).tofile(path)


def _read_f32(path: str, shape) -> torch.Tensor:
    try:
        data = np.fromfile(path, dtype=_F32)
    except OSError as exc:
        raise IoError(f"cannot read tensor {path}: {exc}") from exc
    expected = int(np.prod(shape)) if shape else 1
    if data.size != expected:
        raise IoError(f"{path} holds {data.size} values, expected {expected}")
    return torch.from_numpy(data.astype(np.float32).reshape(shape))


def _jsonable_group(group: dict) -> dict:
    out = {}
    for key, value in group.items():
        out[key] = list(value) if isinstance(value, tuple) else value
    return out


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    """Write `ckpt` to directory `path`, replacing it atomically."""
    if ckpt.phase not in PHASES:
        raise ConfigInvalid(f"unknown checkpoint phase {ckpt.phase!r}")
    tmp = path.rstrip("/") + ".tmp"
    try:
        shutil.rmtree(tmp, ignore_errors=True)
        os.makedirs(os.path.join(tmp, PARAM_DIR))
        tensors = []
        for name, tensor in ckpt.model_state.items():
            _write_f32(os.path.join(tmp, PARAM_DIR, f"{name}.f32"), tensor)
            tensors.append({"name": name, "shape": list(tensor.shape)})

        optimizer = None
        if ckpt.optimizer_state is not None:
            os.makedirs(os.path.join(tmp, OPTIM_DIR))
            entries = {}
            for idx, entry in ckpt.optimizer_state["state"].items():
                record = {}
                for key, value in entry.items():
                    if torch.is_tensor(value) and value.dim() > 0:
                        _write_f32(os.path.join(tmp, OPTIM_DIR, f"{idx}.{key}.f32"), value)
                        record[key] = {"shape": list(value.shape)}
                    else:
                        record[key] = {"scalar": float(value)}
                entries[str(idx)] = record
            optimizer = {
                "state": entries,
                "param_groups": [_jsonable_group(g) for g in ckpt.optimizer_state["param_groups"]],
            }

        write_json(os.path.join(tmp, META_NAME), {
            "format": CHECKPOINT_FORMAT,
            "model_config": ckpt.model_config.to_dict(),
            "phase": ckpt.phase,
            "epoch": ckpt.epoch,
            "seed": ckpt.seed,
            "metric_history": ckpt.metric_history,
            "best_epoch": ckpt.best_epoch,
            "global_step": ckpt.global_step,
            "provenance": ckpt.provenance,
            "tensors": tensors,
            "optimizer": optimizer,
        })
        if os.path.exists(path):
            shutil.rmtree(path)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path: str, with_optimizer: bool = True) -> Checkpoint:
    meta = read_json(os.path.join(path, META_NAME))
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise ConfigInvalid(f"{path}: unsupported checkpoint format {meta.get('format')!r}")
    if meta.get("phase") not in PHASES:
        raise ConfigInvalid(f"{path}: unknown phase {meta.get('phase')!r}")
    try:
        model_config = ModelConfig(**meta["model_config"])
    except TypeError as exc:
        raise ConfigInvalid(f"{path}: bad model config: {exc}") from exc

    state = {}
    for entry in meta["tensors"]:
        state[entry["name"]] = _read_f32(os.path.join(path, PARAM_DIR, f"{entry['name']}.f32"), entry["shape"])

    optimizer_state = None
    if with_optimizer and meta.get("optimizer"):
        opt = meta["optimizer"]
        entries = {}
        for idx, record in opt["state"].items():
            entry = {}
            for key, spec in record.items():
                if "shape" in spec:
                    entry[key] = _read_f32(os.path.join(path, OPTIM_DIR, f"{idx}.{key}.f32"), spec["shape"])
                else:
                    entry[key] = torch.tensor(spec["scalar"], dtype=torch.float32)
            entries[int(idx)] = entry
        groups = []
        for group in opt["param_groups"]:
            group = dict(group)
            if "betas" in group:
                group["betas"] = tuple(group["betas"])
            groups.append(group)
        optimizer_state = {"state": entries, "param_groups": groups}

    return Checkpoint(
        model_config=model_config,
        model_state=state,
        phase=meta["phase"],
        epoch=meta.get("epoch", 0),
        seed=meta.get("seed", 0),
        metric_history=meta.get("metric_history", []),
        best_epoch=meta.get("best_epoch"),
        global_step=meta.get("global_step", 0),
        optimizer_state=optimizer_state,
        provenance=meta.get("provenance", {}),
    )
