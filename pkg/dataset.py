"""
Dataset generation, manifests and the torch dataset that reads them.

A dataset directory holds `images/{id}.png` (8-bit RGB), `depth/{id}.png`
(16-bit depth, raw × depth_scale_mm_per_unit = mm) and `manifest.json`.
Target-domain training samples are written without depth.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch.utils.data import Dataset

from config import (
    CAMERA_FAR_MM,
    CAMERA_FOV_DEG,
    CAMERA_NEAR_MM,
    CAMERA_START_ARCLENGTH_MM,
    COMPLEXITIES,
    COMPLEXITY_WEIGHTS,
    DEFAULT_SEED,
    DEPTH_DIR,
    DEPTH_SCALE_MM_PER_UNIT,
    DESK_COUNTS,
    DESK_IMAGE_SIZE,
    DOMAINS,
    IMAGE_DIR,
    MANIFEST_NAME,
    MANIFEST_SCHEMA_VERSION,
    RENDER_WORKERS,
    SPLITS,
)
from datagen.geometry import U64_MASK, generate_geometry, seed_sequence
from datagen.render import (
    AppearanceParams,
    camera_on_centerline,
    render_frame,
    source_appearance,
    target_appearance,
    with_texture_seed,
)
from datagen.shift import apply_domain_shift
from errors import ConfigInvalid, EmptyDataset, LumenDAError, MissingLabels
from log_utils import RunLogger
from output import canonical_json, read_depth_png, read_json, read_rgb_png, sha256_file, write_depth_png, write_json, write_rgb_png

CAMERA_ARCLENGTH_SPAN_MM = 40.0


def _default_counts():
    return {d: dict(s) for d, s in DESK_COUNTS.items()}


@dataclass
class GeneratorConfig:
    counts: dict = field(default_factory=_default_counts)
    image_size: int = DESK_IMAGE_SIZE
    fov_deg: float = CAMERA_FOV_DEG
    near_mm: float = CAMERA_NEAR_MM
    far_mm: float = CAMERA_FAR_MM
    depth_scale_mm_per_unit: float = DEPTH_SCALE_MM_PER_UNIT
    complexity_weights: tuple = COMPLEXITY_WEIGHTS
    source_appearance: AppearanceParams = field(default_factory=source_appearance)
    target_appearance: AppearanceParams = field(default_factory=target_appearance)
    seed: int = DEFAULT_SEED
    workers: int = RENDER_WORKERS

    def validate(self) -> None:
        for domain, splits in self.counts.items():
            if domain not in DOMAINS:
                raise ConfigInvalid(f"unknown domain {domain!r} in counts")
            for split, n in splits.items():
                if split not in SPLITS:
                    raise ConfigInvalid(f"unknown split {split!r} in counts")
                if not isinstance(n, int) or n < 0:
                    raise ConfigInvalid(f"count for {domain}/{split} must be a non-negative integer")
        if self.image_size < 1:
            raise ConfigInvalid("image_size must be positive")
        if not 0 < self.near_mm < self.far_mm:
            raise ConfigInvalid("need 0 < near_mm < far_mm")
        if self.depth_scale_mm_per_unit <= 0:
            raise ConfigInvalid("depth_scale_mm_per_unit must be positive")
        if self.far_mm / self.depth_scale_mm_per_unit > 65535 + 0.5:
            raise ConfigInvalid("far_mm does not fit the 16-bit depth encoding at this scale")
        weights = np.asarray(self.complexity_weights, dtype=np.float64)
        if weights.shape != (len(COMPLEXITIES),) or np.any(weights < 0) or weights.sum() <= 0:
            raise ConfigInvalid("complexity_weights needs one non-negative weight per complexity")
        if self.workers < 1:
            raise ConfigInvalid("workers must be >= 1")
        self.source_appearance.validate()
        self.target_appearance.validate()

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["complexity_weights"] = list(self.complexity_weights)
        payload["source_appearance"] = self.source_appearance.to_dict()
        payload["target_appearance"] = self.target_appearance.to_dict()
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "GeneratorConfig":
        data = dict(payload)
        for key in ("source_appearance", "target_appearance"):
            if isinstance(data.get(key), dict):
                data[key] = AppearanceParams.from_dict(data[key])
        if "complexity_weights" in data:
            data["complexity_weights"] = tuple(data["complexity_weights"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigInvalid(f"bad generator config: {exc}") from exc

    def config_hash(self) -> str:
        """Hash of everything that determines the output bytes."""
        payload = self.to_dict()
        payload.pop("workers")
        return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


@dataclass
class SampleRecord:
    id: str
    rgb_path: str
    depth_path: str | None
    domain: str
    split: str
    depth_scale_mm_per_unit: float
    rgb_sha256: str = ""
    depth_sha256: str | None = None
    complexity: str = ""
    geometry_seed: int = 0
    scene: str = ""
    source_id: str | None = None

    @property
    def has_depth(self) -> bool:
        return bool(self.depth_path)


@dataclass
class DatasetManifest:
    samples: list[SampleRecord]
    generator_config_hash: str
    seed: int
    image_size: int = DESK_IMAGE_SIZE
    near_mm: float = CAMERA_NEAR_MM
    far_mm: float = CAMERA_FAR_MM
    schema_version: int = MANIFEST_SCHEMA_VERSION
    generator_config: dict = field(default_factory=dict)
    root: str = field(default="", compare=False)

    def select(self, domain: str | None = None, split: str | None = None) -> list[SampleRecord]:
        return [
            s for s in self.samples
            if (domain is None or s.domain == domain) and (split is None or s.split == split)
        ]

    def resolve(self, relative: str) -> str:
        return os.path.join(self.root, relative)

    def validate(self) -> None:
        ids = [s.id for s in self.samples]
        if len(ids) != len(set(ids)):
            raise ConfigInvalid("manifest sample ids are not unique")
        for s in self.samples:
            if s.domain not in DOMAINS or s.split not in SPLITS:
                raise ConfigInvalid(f"sample {s.id} has bad domain/split {s.domain}/{s.split}")
            if s.domain == "source" and s.split == "train" and not s.has_depth:
                raise ConfigInvalid(f"source training sample {s.id} has no depth")
            if s.split == "test" and not s.has_depth:
                raise ConfigInvalid(f"test sample {s.id} has no depth")

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "generator_config_hash": self.generator_config_hash,
            "seed": self.seed,
            "image_size": self.image_size,
            "near_mm": self.near_mm,
            "far_mm": self.far_mm,
            "generator_config": self.generator_config,
            "samples": [asdict(s) for s in self.samples],
        }

    def content_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, payload: dict, root: str = "") -> "DatasetManifest":
        if payload.get("schema_version") != MANIFEST_SCHEMA_VERSION:
            raise ConfigInvalid(f"unsupported manifest schema {payload.get('schema_version')!r}")
        try:
            samples = [SampleRecord(**s) for s in payload["samples"]]
            return cls(
                samples=samples,
                generator_config_hash=payload["generator_config_hash"],
                seed=payload["seed"],
                image_size=payload["image_size"],
                near_mm=payload["near_mm"],
                far_mm=payload["far_mm"],
                schema_version=payload["schema_version"],
                generator_config=payload.get("generator_config", {}),
                root=root,
            )
        except (KeyError, TypeError) as exc:
            raise ConfigInvalid(f"malformed manifest: {exc}") from exc


def load_manifest(path: str, strict: bool = True) -> DatasetManifest:
    """Load a manifest file (or a dataset directory containing one)."""
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    manifest = DatasetManifest.from_dict(read_json(path), root=os.path.dirname(os.path.abspath(path)))
    if strict:
        manifest.validate()
    return manifest


def derive_seed(global_seed: int, sample_id: str) -> int:
    """Per-sample seed from (global seed, sample id); independent of scheduling."""
    digest = hashlib.sha256(f"{int(global_seed) & U64_MASK}:{sample_id}".encode("utf-8")).hexdigest()
    return int(digest[:16], 16)


def planned_samples(config: GeneratorConfig) -> list[tuple[str, str, str]]:
    """(id, domain, split) for every sample, in manifest order."""
    plan = []
    for domain in DOMAINS:
        for split in SPLITS:
            for i in range(config.counts.get(domain, {}).get(split, 0)):
                plan.append((f"{domain}-{split}-{i:05d}", domain, split))
    return plan


def scene_key(sample_id: str) -> str:
    """Scene shared by `source-{split}-{i}` and `target-{split}-{i}`."""
    return sample_id.split("-", 1)[1]


def render_sample(config: GeneratorConfig, sample_id: str, domain: str):
    """Render one sample. Returns (rgb, DepthMap, complexity, geometry_seed).

    Geometry, camera and source look come from the scene seed, so a target
    sample is the shifted twin of the source sample with the same scene.
    """
    rng = np.random.default_rng(seed_sequence(derive_seed(config.seed, scene_key(sample_id))))
    weights = np.asarray(config.complexity_weights, dtype=np.float64)
    complexity = COMPLEXITIES[int(rng.choice(len(COMPLEXITIES), p=weights / weights.sum()))]
    geometry_seed = int(rng.integers(0, 2 ** 63 - 1))
    geom = generate_geometry(geometry_seed, complexity)
    arclength = CAMERA_START_ARCLENGTH_MM + rng.uniform(0.0, CAMERA_ARCLENGTH_SPAN_MM)
    cam = camera_on_centerline(geom, rng, arclength, config.image_size, config.image_size,
                               fov_deg=config.fov_deg, near_mm=config.near_mm, far_mm=config.far_mm)
    app = with_texture_seed(config.source_appearance, int(rng.integers(0, 2 ** 31 - 1)))
    rgb, depth = render_frame(geom, cam, app)
    if domain == "target":
        target_app = with_texture_seed(config.target_appearance, int(rng.integers(0, 2 ** 31 - 1)))
        rgb = apply_domain_shift(rgb, target_app, derive_seed(config.seed, sample_id))
    return rgb, depth, complexity, geometry_seed


def _write_sample(config: GeneratorConfig, out_dir: str, sample_id: str, domain: str, split: str) -> SampleRecord:
    rgb, depth, complexity, geometry_seed = render_sample(config, sample_id, domain)
    rgb_rel = f"{IMAGE_DIR}/{sample_id}.png"
    write_rgb_png(os.path.join(out_dir, rgb_rel), rgb)
    depth_rel = None
    depth_digest = None
    # target training labels are withheld: the file is never written
    if not (domain == "target" and split == "train"):
        depth_rel = f"{DEPTH_DIR}/{sample_id}.png"
        write_depth_png(os.path.join(out_dir, depth_rel), depth.depth_mm, config.depth_scale_mm_per_unit)
        depth_digest = sha256_file(os.path.join(out_dir, depth_rel))
    return SampleRecord(
        id=sample_id,
        rgb_path=rgb_rel,
        depth_path=depth_rel,
        domain=domain,
        split=split,
        depth_scale_mm_per_unit=config.depth_scale_mm_per_unit,
        rgb_sha256=sha256_file(os.path.join(out_dir, rgb_rel)),
        depth_sha256=depth_digest,
        complexity=complexity,
        geometry_seed=geometry_seed,
        scene=scene_key(sample_id),
    )


def _existing_manifest(out_dir: str, config_hash: str) -> DatasetManifest | None:
    path = os.path.join(out_dir, MANIFEST_NAME)
    if not os.path.exists(path):
        return None
    try:
        manifest = load_manifest(path)
    except LumenDAError:  # unreadable manifests are regenerated
        return None
    if manifest.generator_config_hash != config_hash:
        return None
    for s in manifest.samples:
        if not os.path.exists(manifest.resolve(s.rgb_path)):
            return None
        if s.depth_path and not os.path.exists(manifest.resolve(s.depth_path)):
            return None
    return manifest


def build_dataset(config: GeneratorConfig, out_dir: str, logger: RunLogger | None = None) -> DatasetManifest:
    """Render every planned sample to disk and write the manifest.

    Re-running with the same config on a complete directory is a no-op.
    """
    logger = logger or RunLogger()
    config.validate()
    config_hash = config.config_hash()

    existing = _existing_manifest(out_dir, config_hash)
    if existing is not None:
        logger.ok("gen", f"{out_dir} already up to date ({len(existing.samples)} samples)")
        return existing

    plan = planned_samples(config)
    logger.info(f"Rendering {len(plan)} frames at {config.image_size}x{config.image_size} into {out_dir}")
    records = {}
    futures = {}
    with ThreadPoolExecutor(max_workers=config.workers) as executor:
        for sample_id, domain, split in plan:
            futures[executor.submit(_write_sample, config, out_dir, sample_id, domain, split)] = sample_id
        for future in as_completed(futures):
            sample_id = futures[future]
            try:
                records[sample_id] = future.result()
            except Exception as exc:
                logger.fail(sample_id, str(exc))
                raise
    logger.add_frames(len(records))
    for record in records.values():
        twin = f"source-{record.scene}"
        if record.domain == "target" and twin in records:
            record.source_id = twin

    manifest = DatasetManifest(
        samples=[records[sample_id] for sample_id, _, _ in plan],
        generator_config_hash=config_hash,
        seed=config.seed,
        image_size=config.image_size,
        near_mm=config.near_mm,
        far_mm=config.far_mm,
        generator_config=config.to_dict(),
        root=os.path.abspath(out_dir),
    )
    manifest.generator_config.pop("workers", None)
    manifest.validate()
    write_json(os.path.join(out_dir, MANIFEST_NAME), manifest.to_dict())
    logger.ok("gen", f"{len(plan)} frames, manifest {manifest.content_hash()[:12]}")
    return manifest


def load_depth(manifest: DatasetManifest, record: SampleRecord):
    """(depth_mm, valid mask) for a labeled record."""
    if not record.has_depth:
        raise MissingLabels(f"sample {record.id} has no depth label")
    depth = read_depth_png(manifest.resolve(record.depth_path), record.depth_scale_mm_per_unit)
    # far-clip clamps are the invalid pixels
    valid = (depth > 0) & (depth < manifest.far_mm - record.depth_scale_mm_per_unit / 2)
    return depth, valid


def load_rgb(manifest: DatasetManifest, record: SampleRecord) -> np.ndarray:
    return read_rgb_png(manifest.resolve(record.rgb_path))


def image_to_tensor(rgb: np.ndarray) -> torch.Tensor:
    """H×W×3 in [0,1] → 3×H×W float32 in [-1,1]."""
    return torch.from_numpy(np.ascontiguousarray(rgb.transpose(2, 0, 1))).float() * 2.0 - 1.0


class DepthFrameDataset(Dataset):
    """Manifest records as tensors.

    Labeled datasets yield `image`, `depth` (normalized by max_depth_mm) and
    `mask`; unlabeled ones yield only `image` and never touch depth files.
    """

    def __init__(self, manifest: DatasetManifest, records: list[SampleRecord], labeled: bool,
                 max_depth_mm: float, cache: bool = False):
        if labeled:
            missing = [r.id for r in records if not r.has_depth]
            if missing:
                raise MissingLabels(f"{len(missing)} records lack depth, e.g. {missing[0]}")
        self.manifest = manifest
        self.records = list(records)
        self.labeled = labeled
        self.max_depth_mm = max_depth_mm
        self._cache = {} if cache else None

    @classmethod
    def from_manifest(cls, manifest: DatasetManifest, domain: str, split: str, labeled: bool,
                      max_depth_mm: float, cache: bool = False) -> "DepthFrameDataset":
        records = manifest.select(domain, split)
        if not records:
            raise EmptyDataset(f"no {domain}/{split} samples in manifest")
        return cls(manifest, records, labeled, max_depth_mm, cache=cache)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, index):
        if self._cache is not None and index in self._cache:
            return self._cache[index]
        record = self.records[index]
        item = {"image": image_to_tensor(load_rgb(self.manifest, record)), "index": index}
        if self.labeled:
            depth, valid = load_depth(self.manifest, record)
            item["depth"] = torch.from_numpy(depth / self.max_depth_mm).float().unsqueeze(0)
            item["mask"] = torch.from_numpy(valid).unsqueeze(0)
        if self._cache is not None:
            self._cache[index] = item
        return item
