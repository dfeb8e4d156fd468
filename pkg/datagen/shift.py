"""Photometric domain shift: turns a rendered source frame into a target frame.

Only pixel values change. Pixel geometry is untouched, so the depth map
rendered with the source frame stays the exact ground truth of the result.
"""

from __future__ import annotations

import numpy as np

from config import SHIFT_SPECULAR_POWER, SHIFT_TEXTURE_FREQS
from datagen.geometry import seed_sequence
from datagen.render import AppearanceParams, vignette_mask


def _overlay_texture(height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    v, u = np.meshgrid(np.arange(height) / height, np.arange(width) / width, indexing="ij")
    freqs = rng.uniform(2.0, 9.0, size=(SHIFT_TEXTURE_FREQS, 2))
    phases = rng.uniform(0.0, 2 * np.pi, size=SHIFT_TEXTURE_FREQS)
    waves = [np.sin(2 * np.pi * (fu * u + fv * v) + ph) for (fu, fv), ph in zip(freqs, phases)]
    return 0.5 + 0.5 * np.mean(waves, axis=0)


def identity_shift(texture_seed: int = 0) -> AppearanceParams:
    """Shift parameters that leave a frame unchanged.

    The renderer's defaults are not neutral here: a unit gain and a zero
    extra falloff exponent are.
    """
    return AppearanceParams(
        base_albedo=(1.0, 1.0, 1.0),
        texture_seed=texture_seed,
        specular_strength=0.0,
        vignette_strength=0.0,
        light_falloff_exp=0.0,
        noise_sigma=0.0,
        texture_strength=0.0,
    )


def apply_domain_shift(frame: np.ndarray, app_target: AppearanceParams, seed: int) -> np.ndarray:
    """Deterministic photometric shift of an H×W×3 frame in [0, 1].

    Stages, each skipped at zero strength: steeper light falloff (values
    raised to 1 + light_falloff_exp), per-channel colour gain (base_albedo),
    texture overlay, highlight bloom on bright regions, vignetting, sensor noise.

    The fields of app_target are read as shift strengths, not as render
    settings: base_albedo is a gain and light_falloff_exp an extra exponent.
    Start from identity_shift() to build a partial shift.
    """
    app_target.validate()
    out = np.array(frame, dtype=np.float64, copy=True)
    height, width = out.shape[:2]
    rng = np.random.default_rng(seed_sequence(seed, app_target.texture_seed))
    texture = _overlay_texture(height, width, rng)
    noise = rng.standard_normal(out.shape)

    if app_target.light_falloff_exp > 0:
        out = out ** (1.0 + app_target.light_falloff_exp)
    gain = np.asarray(app_target.base_albedo, dtype=np.float64)
    if np.any(gain != 1.0):
        out = out * gain[None, None, :]
    if app_target.texture_strength > 0:
        s = app_target.texture_strength
        out = out * (1.0 - s + s * texture)[:, :, None]
    if app_target.specular_strength > 0:
        luminance = np.clip(out.mean(axis=2), 0.0, 1.0)
        out = out + app_target.specular_strength * (luminance ** SHIFT_SPECULAR_POWER)[:, :, None]
    if app_target.vignette_strength > 0:
        out = out * vignette_mask(height, width, app_target.vignette_strength)[:, :, None]
    if app_target.noise_sigma > 0:
        out = out + app_target.noise_sigma * noise
    return np.clip(out, 0.0, 1.0)
