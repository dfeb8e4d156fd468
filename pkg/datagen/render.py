"""CPU ray-marching renderer for lumen frames with exact depth."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.spatial.transform import Rotation

from config import (
    CAMERA_FAR_MM,
    CAMERA_FOV_DEG,
    CAMERA_FOV_LIMITS_DEG,
    CAMERA_JITTER_FRACTION,
    CAMERA_NEAR_MM,
    CAMERA_TILT_DEG,
    LIGHT_REFERENCE_MM,
    MARCH_BISECT_ITERS,
    MARCH_MAX_STEPS,
    MARCH_MIN_STEP_MM,
    MARCH_SAFETY,
    NORMAL_EPS_MM,
    SOURCE_ALBEDO,
    SOURCE_FALLOFF_EXP,
    SOURCE_TEXTURE_STRENGTH,
    SPECULAR_SHININESS,
    TARGET_ALBEDO_GAIN,
    TARGET_FALLOFF_EXP,
    TARGET_NOISE_SIGMA,
    TARGET_SPECULAR_STRENGTH,
    TARGET_TEXTURE_STRENGTH,
    TARGET_VIGNETTE_STRENGTH,
)
from datagen.geometry import LumenGeometry, LumenSDF, perpendicular_basis, seed_sequence
from errors import CameraOutsideLumen, ConfigInvalid

TEXTURE_WAVES = 6


@dataclass
class DepthMap:
    depth_mm: np.ndarray   # H×W, clamped to far_mm where invalid
    valid: np.ndarray      # H×W bool


@dataclass(eq=False)
class CameraModel:
    fov_deg: float = CAMERA_FOV_DEG
    width: int = 64
    height: int = 64
    near_mm: float = CAMERA_NEAR_MM
    far_mm: float = CAMERA_FAR_MM
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    # world-from-camera rotation; columns are the camera right, down and forward axes
    orientation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.orientation = np.asarray(self.orientation, dtype=np.float64)

    def validate(self) -> None:
        if not 0 < self.near_mm < self.far_mm:
            raise ConfigInvalid(f"need 0 < near_mm < far_mm, got {self.near_mm}, {self.far_mm}")
        lo, hi = CAMERA_FOV_LIMITS_DEG
        if not lo < self.fov_deg < hi:
            raise ConfigInvalid(f"fov_deg {self.fov_deg} outside ({lo}, {hi})")
        if self.width < 1 or self.height < 1:
            raise ConfigInvalid("image dimensions must be positive")

    @classmethod
    def looking(cls, position, forward, roll_deg: float = 0.0, **kwargs) -> "CameraModel":
        """Camera at `position` whose optical axis points along `forward`."""
        forward = np.asarray(forward, dtype=np.float64)
        forward = forward / np.linalg.norm(forward)
        right, down = perpendicular_basis(forward)
        if roll_deg:
            roll = Rotation.from_rotvec(np.radians(roll_deg) * forward)
            right, down = roll.apply(right), roll.apply(down)
        orientation = np.stack([right, down, forward], axis=1)
        return cls(position=np.asarray(position, dtype=np.float64), orientation=orientation, **kwargs)

    @property
    def focal_px(self) -> float:
        return (self.width / 2.0) / np.tan(np.radians(self.fov_deg) / 2.0)

    def ray_directions(self) -> np.ndarray:
        """Unit world-space ray per pixel, row-major, shape (H*W, 3)."""
        u = np.arange(self.width) + 0.5 - self.width / 2.0
        v = np.arange(self.height) + 0.5 - self.height / 2.0
        uu, vv = np.meshgrid(u, v)
        dirs = np.stack([uu, vv, np.full_like(uu, self.focal_px)], axis=-1).reshape(-1, 3)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return dirs @ self.orientation.T

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["position"] = self.position.tolist()
        payload["orientation"] = self.orientation.tolist()
        return payload


@dataclass(frozen=True)
class AppearanceParams:
    base_albedo: tuple = SOURCE_ALBEDO
    texture_seed: int = 0
    specular_strength: float = 0.0
    vignette_strength: float = 0.0
    light_falloff_exp: float = SOURCE_FALLOFF_EXP
    noise_sigma: float = 0.0
    texture_strength: float = SOURCE_TEXTURE_STRENGTH

    def validate(self) -> None:
        if len(self.base_albedo) != 3 or any(c < 0 for c in self.base_albedo):
            raise ConfigInvalid("base_albedo must be three non-negative values")
        for name in ("specular_strength", "vignette_strength", "texture_strength"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigInvalid(f"{name} must be in [0, 1], got {value}")
        if self.light_falloff_exp < 0:
            raise ConfigInvalid("light_falloff_exp must be >= 0")
        if self.noise_sigma < 0:
            raise ConfigInvalid("noise_sigma must be >= 0")

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["base_albedo"] = list(self.base_albedo)
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "AppearanceParams":
        data = dict(payload)
        if "base_albedo" in data:
            data["base_albedo"] = tuple(float(c) for c in data["base_albedo"])
        return cls(**data)


def source_appearance(texture_seed: int = 0) -> AppearanceParams:
    return AppearanceParams(texture_seed=texture_seed)


def target_appearance(texture_seed: int = 0) -> AppearanceParams:
    """Photometric shift parameters; base_albedo acts as a per-channel gain."""
    return AppearanceParams(
        base_albedo=TARGET_ALBEDO_GAIN,
        texture_seed=texture_seed,
        specular_strength=TARGET_SPECULAR_STRENGTH,
        vignette_strength=TARGET_VIGNETTE_STRENGTH,
        light_falloff_exp=TARGET_FALLOFF_EXP,
        noise_sigma=TARGET_NOISE_SIGMA,
        texture_strength=TARGET_TEXTURE_STRENGTH,
    )


def camera_on_centerline(geom: LumenGeometry, rng: np.random.Generator, arclength: float,
                         width: int, height: int, fov_deg: float = CAMERA_FOV_DEG,
                         near_mm: float = CAMERA_NEAR_MM, far_mm: float = CAMERA_FAR_MM) -> CameraModel:
    """Camera near the parent centerline looking roughly down the lumen."""
    point, tangent, radius = geom.parent().frame_at(arclength)
    n1, n2 = perpendicular_basis(tangent)
    phi = rng.uniform(0.0, 2 * np.pi)
    offset = rng.uniform(0.0, CAMERA_JITTER_FRACTION) * radius
    position = point + offset * (np.cos(phi) * n1 + np.sin(phi) * n2)
    tilt_axis_angle = rng.uniform(0.0, 2 * np.pi)
    tilt_axis = np.cos(tilt_axis_angle) * n1 + np.sin(tilt_axis_angle) * n2
    tilt = np.radians(rng.uniform(0.0, CAMERA_TILT_DEG))
    forward = Rotation.from_rotvec(tilt * tilt_axis).apply(tangent)
    roll = rng.uniform(0.0, 360.0)
    camera = CameraModel.looking(position, forward, roll_deg=roll, fov_deg=fov_deg,
                                 width=width, height=height, near_mm=near_mm, far_mm=far_mm)
    camera.validate()
    return camera


def march_rays(sdf: LumenSDF, origin: np.ndarray, dirs: np.ndarray, far_mm: float):
    """Distance along each ray to the first wall crossing.

    Returns (t, hit). Rays that reach far_mm without crossing the wall have
    hit=False. Crossings are located by bisection between the last interior
    sample and the first exterior one.
    """
    n = len(dirs)
    t = np.zeros(n)
    t_prev = np.zeros(n)
    crossed = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)

    for _ in range(MARCH_MAX_STEPS):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        f = sdf.interior_distance(origin + t[idx, None] * dirs[idx])
        outside = f <= 0.0
        crossed[idx[outside]] = True
        active[idx[outside]] = False
        inside_idx = idx[~outside]
        step = np.maximum(MARCH_SAFETY * f[~outside], MARCH_MIN_STEP_MM)
        t_prev[inside_idx] = t[inside_idx]
        t[inside_idx] += step
        beyond = t[inside_idx] > far_mm + MARCH_MIN_STEP_MM
        active[inside_idx[beyond]] = False

    idx = np.flatnonzero(crossed)
    lo, hi = t_prev[idx].copy(), t[idx].copy()
    for _ in range(MARCH_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        inside = sdf.interior_distance(origin + mid[:, None] * dirs[idx]) > 0.0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    t_hit = np.full(n, np.inf)
    t_hit[idx] = hi
    hit = np.isfinite(t_hit) & (t_hit <= far_mm)
    return np.where(hit, t_hit, far_mm), hit


def _texture(points: np.ndarray, texture_seed: int) -> np.ndarray:
    """Smooth procedural texture in [0, 1] keyed on world position."""
    rng = np.random.default_rng(seed_sequence(texture_seed, 0x7E))
    freqs = rng.normal(0.0, 0.6, size=(TEXTURE_WAVES, 3))
    phases = rng.uniform(0.0, 2 * np.pi, size=TEXTURE_WAVES)
    waves = np.sin(points @ freqs.T + phases)
    return 0.5 + 0.5 * waves.mean(axis=1)


def vignette_mask(height: int, width: int, strength: float) -> np.ndarray:
    v = (np.arange(height) + 0.5) / height - 0.5
    u = (np.arange(width) + 0.5) / width - 0.5
    uu, vv = np.meshgrid(u, v)
    rho2 = (uu ** 2 + vv ** 2) / 0.5
    return 1.0 - strength * rho2


def render_frame(geom: LumenGeometry, cam: CameraModel, app: AppearanceParams,
                 sdf: LumenSDF | None = None):
    """Render (rgb H×W×3 in [0,1], DepthMap) for a camera inside the lumen."""
    cam.validate()
    app.validate()
    sdf = sdf or LumenSDF(geom)
    if sdf.interior_distance(cam.position)[0] <= 0.0:
        raise CameraOutsideLumen(f"camera at {cam.position.tolist()} is not inside the lumen")

    dirs = cam.ray_directions()
    t, hit = march_rays(sdf, cam.position, dirs, cam.far_mm)
    depth = np.where(hit, np.maximum(t, cam.near_mm), cam.far_mm)

    color = np.zeros((len(dirs), 3))
    idx = np.flatnonzero(hit)
    if idx.size:
        points = cam.position + t[idx, None] * dirs[idx]
        normals = sdf.gradient(points, NORMAL_EPS_MM)
        normals /= np.maximum(np.linalg.norm(normals, axis=1, keepdims=True), 1e-12)
        lambert = np.clip(np.einsum("ij,ij->i", normals, -dirs[idx]), 0.0, 1.0)
        falloff = (LIGHT_REFERENCE_MM / depth[idx]) ** app.light_falloff_exp
        tex = _texture(points, app.texture_seed)
        albedo = np.asarray(app.base_albedo)[None, :] * (1.0 - app.texture_strength + app.texture_strength * tex)[:, None]
        # light co-located with the camera: the half vector is the view direction
        specular = app.specular_strength * lambert ** SPECULAR_SHININESS
        color[idx] = (albedo * lambert[:, None] + specular[:, None]) * falloff[:, None]

    rgb = color.reshape(cam.height, cam.width, 3)
    if app.vignette_strength > 0:
        rgb = rgb * vignette_mask(cam.height, cam.width, app.vignette_strength)[:, :, None]
    if app.noise_sigma > 0:
        rng = np.random.default_rng(seed_sequence(app.texture_seed, 0x40153))
        rgb = rgb + rng.normal(0.0, app.noise_sigma, size=rgb.shape)
    rgb = np.clip(rgb, 0.0, 1.0)
    return rgb, DepthMap(depth.reshape(cam.height, cam.width), hit.reshape(cam.height, cam.width))


def with_texture_seed(app: AppearanceParams, texture_seed: int) -> AppearanceParams:
    return replace(app, texture_seed=int(texture_seed))
