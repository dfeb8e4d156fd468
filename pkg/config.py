"""
Centralized configuration constants for LumenDA.

All magic numbers and tunable parameters in one place.
Import from here instead of hardcoding values across modules.
"""

# ── Lumen geometry ───────────────────────────────────────────────────
GEOMETRY_LENGTH_MM = 180.0        # parent tube length along its centerline
GEOMETRY_BASE_RADIUS_MM = 6.0     # radius of the straight reference cylinder
GEOMETRY_RADIUS_RANGE_MM = (3.5, 8.0)  # radius profile bounds for curved/branching tubes
GEOMETRY_CONTROL_POINTS = 7       # centerline control points per tube
GEOMETRY_LATERAL_WANDER_MM = 12.0 # max lateral control-point offset for curved tubes
GEOMETRY_SAMPLE_SPACING_MM = 0.25 # dense centerline sampling for wall queries
BRANCH_ANGLE_RANGE_DEG = (20.0, 60.0)   # drawn inside the (10, 80) validity window
BRANCH_ANGLE_LIMITS_DEG = (10.0, 80.0)  # open interval every branch must satisfy
BRANCH_RADIUS_SCALE_RANGE = (0.55, 0.8)
BRANCH_LENGTH_MM = 90.0
BRANCH_ARCLENGTH_RANGE_MM = (35.0, 80.0)
MAX_BRANCHES = 2

# ── Camera ───────────────────────────────────────────────────────────
CAMERA_FOV_DEG = 90.0
CAMERA_FOV_LIMITS_DEG = (30.0, 170.0)   # open interval
CAMERA_NEAR_MM = 0.5
CAMERA_FAR_MM = 100.0
CAMERA_START_ARCLENGTH_MM = 10.0  # camera placement along the parent centerline
CAMERA_JITTER_FRACTION = 0.35     # lateral offset as a fraction of local radius
CAMERA_TILT_DEG = 12.0            # max view-direction tilt away from the tangent

# ── Ray marching ─────────────────────────────────────────────────────
MARCH_SAFETY = 0.8                # fraction of the wall distance taken per step
MARCH_MIN_STEP_MM = 0.02
MARCH_MAX_STEPS = 2000
MARCH_BISECT_ITERS = 30
NORMAL_EPS_MM = 1e-3              # finite-difference step for wall normals

# ── Appearance ───────────────────────────────────────────────────────
SOURCE_ALBEDO = (0.85, 0.55, 0.5)
SOURCE_TEXTURE_STRENGTH = 0.15
LIGHT_REFERENCE_MM = 6.0          # falloff is 1 here, brighter nearer and darker farther
SPECULAR_SHININESS = 24.0
SHIFT_SPECULAR_POWER = 8.0        # luminance exponent for image-space highlights
SHIFT_TEXTURE_FREQS = 5           # sinusoid count in the target texture overlay
TARGET_ALBEDO_GAIN = (1.12, 0.86, 0.74)
TARGET_TEXTURE_STRENGTH = 0.3
TARGET_SPECULAR_STRENGTH = 0.55
TARGET_VIGNETTE_STRENGTH = 0.5
TARGET_FALLOFF_EXP = 0.6          # extra exponent applied on top of the source falloff
TARGET_NOISE_SIGMA = 0.03
SOURCE_FALLOFF_EXP = 2.0

# ── Dataset ──────────────────────────────────────────────────────────
MANIFEST_SCHEMA_VERSION = 2
MANIFEST_NAME = "manifest.json"
IMAGE_DIR = "images"
DEPTH_DIR = "depth"
DEPTH_SCALE_MM_PER_UNIT = 100.0 / 65535.0
DEFAULT_IMAGE_SIZE = 256
DESK_IMAGE_SIZE = 64
RENDER_WORKERS = 4                # concurrent frame renders
DOMAINS = ("source", "target")
SPLITS = ("train", "val", "test")
COMPLEXITIES = ("straight", "curved", "branching")
COMPLEXITY_WEIGHTS = (0.1, 0.45, 0.45)
DESK_COUNTS = {
    "source": {"train": 384, "val": 64, "test": 64},
    "target": {"train": 384, "val": 0, "test": 128},
}
FULL_COUNTS = {
    "source": {"train": 4096, "val": 512, "test": 512},
    "target": {"train": 4096, "val": 0, "test": 1024},
}

# ── Model ────────────────────────────────────────────────────────────
MODEL_BASE_WIDTH = 64
MODEL_N_DOWNSAMPLE = 2
MODEL_N_RES_BLOCKS = 9
MODEL_DISC_HIDDEN = 1024
MODEL_MAX_DEPTH_MM = 100.0
DESK_BASE_WIDTH = 16
DESK_N_RES_BLOCKS = 4
DESK_DISC_HIDDEN = 128
INIT_STD = 0.02
DISC_LEAKY_SLOPE = 0.2

# ── Training ─────────────────────────────────────────────────────────
BATCH_SIZE = 8
LEARNING_RATE = 1e-4
ADAM_BETAS = (0.9, 0.999)
PRETRAIN_EPOCHS = 100
ADAPT_EPOCHS = 35
EARLY_STOP_PATIENCE = 10
DESK_PRETRAIN_EPOCHS = 30
DESK_ADAPT_EPOCHS = 10
DESK_EARLY_STOP_PATIENCE = 5
SAVE_EVERY_EPOCHS = 1
LOADER_WORKERS = 0                # >0 prefetches batches ahead of the loop
DESK_CACHE_FRAMES = True          # keep decoded desk frames in memory; full-size sets stream from disk
DEFAULT_SEED = 0
SEED_ENV_VAR = "LUMEN_DA_SEED"

# ── Loss ─────────────────────────────────────────────────────────────
LOSS_ALPHA = 1.0                  # SSI weight
LOSS_BETA = 100.0                 # L1 weight
LOSS_GAMMA = 0.1                  # adversarial weight
GRL_LAMBDA = 1.0
GRL_RAMP_STEEPNESS = 10.0
SSI_VAR_EPS = 1e-12
PROB_EPS = 1e-7

# ── Evaluation ───────────────────────────────────────────────────────
DELTA_THRESHOLD = 1.25
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
REPORT_JSON = "report.json"
REPORT_MD = "report.md"
HEATMAP_DIR = "heatmaps"

# ── Run directories ──────────────────────────────────────────────────
TRAIN_LOG_NAME = "train.log.jsonl"
CONFIG_ECHO_NAME = "config.json"
LOCK_NAME = ".lock"
CHECKPOINT_PREFIX = "ckpt_"
CHECKPOINT_BEST = "ckpt_best"
CHECKPOINT_FINAL = "ckpt_final"
