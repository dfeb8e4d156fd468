"""Output helpers for dataset, checkpoint and report artifacts."""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np
from PIL import Image

from errors import IoError


def ensure_parent_dir(path: str) -> None:
    """Ensure parent directory exists for target file path."""
    parent = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(parent, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {parent}: {exc}") from exc


def _atomic_write_bytes(path: str, data: bytes) -> None:
    ensure_parent_dir(path)
    tmp = path + ".tmp"
    try:
        with open(tmp, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def canonical_json(payload) -> str:
    """Stable JSON text used for hashing and for files meant to be diffed."""
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(path: str, payload) -> None:
    """Write payload as pretty, key-sorted JSON."""
    _atomic_write_bytes(path, canonical_json(payload).encode("utf-8"))


def read_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as exc:
        raise IoError(f"not found: {path}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise IoError(f"unreadable JSON {path}: {exc}") from exc


def write_text(path: str, content: str) -> None:
    """Write plain text file."""
    _atomic_write_bytes(path, content.encode("utf-8"))


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 16), b""):
                digest.update(chunk)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return digest.hexdigest()


def _save_image(img: Image.Image, path: str) -> None:
    ensure_parent_dir(path)
    tmp = path + ".tmp"
    try:
        img.save(tmp, format="PNG")
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_rgb_png(path: str, rgb: np.ndarray) -> None:
    """Write an H×W×3 float image in [0,1] as 8-bit RGB."""
    data = np.clip(np.rint(np.asarray(rgb, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    _save_image(Image.fromarray(data), path)


def read_rgb_png(path: str, size: int | None = None) -> np.ndarray:
    """Read an RGB image as float64 in [0,1], optionally resized to size×size."""
    try:
        with Image.open(path) as img:
            img = img.convert("RGB")
            if size is not None and img.size != (size, size):
                img = img.resize((size, size), Image.Resampling.BILINEAR)
            data = np.asarray(img, dtype=np.float64)
    except OSError as exc:
        raise IoError(f"cannot read image {path}: {exc}") from exc
    return data / 255.0


def encode_depth(depth_mm: np.ndarray, scale_mm_per_unit: float) -> np.ndarray:
    raw = np.rint(np.asarray(depth_mm, dtype=np.float64) / scale_mm_per_unit)
    return np.clip(raw, 0, 65535).astype(np.uint16)


def decode_depth(raw: np.ndarray, scale_mm_per_unit: float) -> np.ndarray:
    return np.asarray(raw, dtype=np.float64) * scale_mm_per_unit


def write_depth_png(path: str, depth_mm: np.ndarray, scale_mm_per_unit: float) -> None:
    """Write depth as single-channel 16-bit PNG: depth_mm = raw × scale."""
    raw = encode_depth(depth_mm, scale_mm_per_unit)
    _save_image(Image.fromarray(raw), path)


def read_depth_png(path: str, scale_mm_per_unit: float) -> np.ndarray:
    """Read a 16-bit depth PNG back to millimeters (float64)."""
    try:
        with Image.open(path) as img:
            raw = np.asarray(img, dtype=np.int64)
    except OSError as exc:
        raise IoError(f"cannot read depth {path}: {exc}") from exc
    return decode_depth(raw, scale_mm_per_unit)
