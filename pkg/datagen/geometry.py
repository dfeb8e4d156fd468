"""Tubular lumen geometry and signed-distance queries against its wall."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from config import (
    BRANCH_ANGLE_LIMITS_DEG,
    BRANCH_ANGLE_RANGE_DEG,
    BRANCH_ARCLENGTH_RANGE_MM,
    BRANCH_LENGTH_MM,
    BRANCH_RADIUS_SCALE_RANGE,
    COMPLEXITIES,
    GEOMETRY_BASE_RADIUS_MM,
    GEOMETRY_CONTROL_POINTS,
    GEOMETRY_LATERAL_WANDER_MM,
    GEOMETRY_LENGTH_MM,
    GEOMETRY_RADIUS_RANGE_MM,
    GEOMETRY_SAMPLE_SPACING_MM,
    MAX_BRANCHES,
)
from errors import ConfigInvalid

U64_MASK = (1 << 64) - 1
BRANCH_TAPER = 0.85  # child radius at its far end, relative to its root


def seed_sequence(seed: int, *extra: int) -> np.random.SeedSequence:
    """Seed sequence for any 64-bit seed (negative values wrap)."""
    return np.random.SeedSequence([int(seed) & U64_MASK, *[int(e) & U64_MASK for e in extra]])


@dataclass(frozen=True)
class BranchSpec:
    arclength_mm: float    # where the child leaves the parent centerline
    angle_deg: float       # between parent tangent and child direction
    radius_scale: float    # child root radius / parent radius at the branch point
    azimuth_deg: float = 0.0
    length_mm: float = BRANCH_LENGTH_MM


@dataclass(eq=False)
class Tube:
    """One tube of the lumen: a C1 centerline with a smooth radius profile."""

    control_points: np.ndarray
    control_radii: np.ndarray
    _dense: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.control_points = np.asarray(self.control_points, dtype=np.float64)
        self.control_radii = np.asarray(self.control_radii, dtype=np.float64)
        chords = np.linalg.norm(np.diff(self.control_points, axis=0), axis=1)
        self._knots = np.concatenate([[0.0], np.cumsum(chords)])
        self._curve = CubicSpline(self._knots, self.control_points, axis=0, bc_type="natural")
        # pchip never overshoots, so positive control radii stay positive
        self._radius = PchipInterpolator(self._knots, self.control_radii)

    def dense(self, spacing: float = GEOMETRY_SAMPLE_SPACING_MM):
        """(points, radii, arclength) sampled every ~`spacing` mm."""
        if self._dense is None:
            n = max(2, int(np.ceil(self._knots[-1] / spacing)) + 1)
            u = np.linspace(0.0, self._knots[-1], n)
            points = self._curve(u)
            radii = self._radius(u)
            seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
            s = np.concatenate([[0.0], np.cumsum(seg)])
            self._dense = (points, radii, s)
        return self._dense

    @property
    def length(self) -> float:
        return float(self.dense()[2][-1])

    def frame_at(self, arclength: float):
        """(point, unit tangent, radius) at the given arclength."""
        points, radii, s = self.dense()
        arclength = float(np.clip(arclength, 0.0, s[-1]))
        i = int(np.clip(np.searchsorted(s, arclength) - 1, 0, len(s) - 2))
        w = (arclength - s[i]) / max(s[i + 1] - s[i], 1e-12)
        point = points[i] + w * (points[i + 1] - points[i])
        tangent = points[i + 1] - points[i]
        tangent = tangent / np.linalg.norm(tangent)
        radius = radii[i] + w * (radii[i + 1] - radii[i])
        return point, tangent, float(radius)


def perpendicular_basis(direction: np.ndarray):
    """Two unit vectors completing `direction` to an orthonormal frame."""
    d = direction / np.linalg.norm(direction)
    helper = np.array([1.0, 0.0, 0.0]) if abs(d[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    n1 = np.cross(d, helper)
    n1 /= np.linalg.norm(n1)
    n2 = np.cross(d, n1)
    return n1, n2


@dataclass(eq=False)
class LumenGeometry:
    centerline: np.ndarray          # control points of the parent centerline (mm)
    radius_profile: np.ndarray      # radius at each control point (mm)
    branch_spec: list[BranchSpec]
    complexity: str = "curved"
    seed: int = 0

    def __post_init__(self):
        self.centerline = np.asarray(self.centerline, dtype=np.float64)
        self.radius_profile = np.asarray(self.radius_profile, dtype=np.float64)
        self._tubes = None

    def parent(self) -> Tube:
        return self.tubes()[0]

    def tubes(self) -> list[Tube]:
        """Parent tube followed by one child tube per branch."""
        if self._tubes is None:
            parent = Tube(self.centerline, self.radius_profile)
            tubes = [parent]
            for branch in self.branch_spec:
                tubes.append(_child_tube(parent, branch))
            self._tubes = tubes
        return self._tubes

    def validate(self) -> None:
        if self.centerline.ndim != 2 or self.centerline.shape[1] != 3 or len(self.centerline) < 2:
            raise ConfigInvalid("centerline needs at least two 3D control points")
        if self.radius_profile.shape != (len(self.centerline),):
            raise ConfigInvalid("radius_profile must have one radius per control point")
        for tube in self.tubes():
            if np.min(tube.dense()[1]) <= 0:
                raise ConfigInvalid("tube radius must be positive everywhere")
        lo, hi = BRANCH_ANGLE_LIMITS_DEG
        for branch in self.branch_spec:
            if not lo < branch.angle_deg < hi:
                raise ConfigInvalid(f"branch angle {branch.angle_deg} outside ({lo}, {hi})")
            if not 0 < branch.arclength_mm < self.parent().length:
                raise ConfigInvalid("branch point must lie on the parent centerline")

    def to_dict(self) -> dict:
        return {
            "complexity": self.complexity,
            "seed": int(self.seed),
            "centerline": self.centerline.tolist(),
            "radius_profile": self.radius_profile.tolist(),
            "branch_spec": [asdict(b) for b in self.branch_spec],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "LumenGeometry":
        return cls(
            centerline=np.asarray(payload["centerline"], dtype=np.float64),
            radius_profile=np.asarray(payload["radius_profile"], dtype=np.float64),
            branch_spec=[BranchSpec(**b) for b in payload.get("branch_spec", [])],
            complexity=payload.get("complexity", "curved"),
            seed=payload.get("seed", 0),
        )


def _child_tube(parent: Tube, branch: BranchSpec) -> Tube:
    root, tangent, parent_radius = parent.frame_at(branch.arclength_mm)
    n1, n2 = perpendicular_basis(tangent)
    az = np.radians(branch.azimuth_deg)
    axis = np.cos(az) * n1 + np.sin(az) * n2
    direction = Rotation.from_rotvec(np.radians(branch.angle_deg) * axis).apply(tangent)
    steps = np.linspace(0.0, branch.length_mm, GEOMETRY_CONTROL_POINTS)
    points = root[None, :] + steps[:, None] * direction[None, :]
    r0 = parent_radius * branch.radius_scale
    radii = r0 * np.linspace(1.0, BRANCH_TAPER, GEOMETRY_CONTROL_POINTS)
    return Tube(points, radii)


def generate_geometry(seed: int, complexity: str) -> LumenGeometry:
    """Deterministic lumen for (seed, complexity)."""
    if complexity not in COMPLEXITIES:
        raise ConfigInvalid(f"unknown complexity {complexity!r}; expected one of {COMPLEXITIES}")
    rng = np.random.default_rng(seed_sequence(seed, COMPLEXITIES.index(complexity)))
    k = GEOMETRY_CONTROL_POINTS
    z = np.linspace(0.0, GEOMETRY_LENGTH_MM, k)

    if complexity == "straight":
        centerline = np.stack([np.zeros(k), np.zeros(k), z], axis=1)
        radii = np.full(k, GEOMETRY_BASE_RADIUS_MM)
        geom = LumenGeometry(centerline, radii, [], complexity, seed)
        geom.validate()
        return geom

    offsets = rng.uniform(-GEOMETRY_LATERAL_WANDER_MM, GEOMETRY_LATERAL_WANDER_MM, size=(k, 2))
    # keep the first stretch straight so cameras start in a well-formed section
    offsets[0] = 0.0
    offsets[1] *= 0.25
    centerline = np.stack([offsets[:, 0], offsets[:, 1], z], axis=1)
    radii = rng.uniform(*GEOMETRY_RADIUS_RANGE_MM, size=k)

    branches = []
    if complexity == "branching":
        n_branches = int(rng.integers(1, MAX_BRANCHES + 1))
        lo, hi = BRANCH_ARCLENGTH_RANGE_MM
        # evenly spaced slots keep bifurcations apart
        slots = np.linspace(lo, hi, n_branches + 1)
        for i in range(n_branches):
            branches.append(BranchSpec(
                arclength_mm=float(rng.uniform(slots[i], slots[i + 1])),
                angle_deg=float(rng.uniform(*BRANCH_ANGLE_RANGE_DEG)),
                radius_scale=float(rng.uniform(*BRANCH_RADIUS_SCALE_RANGE)),
                azimuth_deg=float(rng.uniform(0.0, 360.0)),
                length_mm=BRANCH_LENGTH_MM,
            ))

    geom = LumenGeometry(centerline, radii, branches, complexity, seed)
    geom.validate()
    return geom


class LumenSDF:
    """Interior distance field of a lumen: positive inside, zero on the wall.

    For each tube the value is radius(closest centerline point) minus the
    distance to the centerline; the lumen interior is the union of tubes, so
    the field is the maximum over tubes.
    """

    def __init__(self, geom: LumenGeometry):
        self.geom = geom
        self._tubes = []
        for tube in geom.tubes():
            points, radii, _ = tube.dense()
            self._tubes.append((points, radii, cKDTree(points)))

    @staticmethod
    def _tube_distance(points, radii, tree, query):
        n = len(points)
        _, idx = tree.query(query)
        best_d = np.full(len(query), np.inf)
        best_r = np.zeros(len(query))
        for start in (np.clip(idx - 1, 0, n - 2), np.clip(idx, 0, n - 2)):
            a = points[start]
            ab = points[start + 1] - a
            t = np.einsum("ij,ij->i", query - a, ab) / np.einsum("ij,ij->i", ab, ab)
            t = np.clip(t, 0.0, 1.0)
            closest = a + t[:, None] * ab
            d = np.linalg.norm(query - closest, axis=1)
            r = radii[start] + t * (radii[start + 1] - radii[start])
            better = d < best_d
            best_d = np.where(better, d, best_d)
            best_r = np.where(better, r, best_r)
        return best_r - best_d

    def interior_distance(self, query: np.ndarray, tubes: list[int] | None = None) -> np.ndarray:
        query = np.atleast_2d(np.asarray(query, dtype=np.float64))
        selected = range(len(self._tubes)) if tubes is None else tubes
        values = [self._tube_distance(*self._tubes[i], query) for i in selected]
        return np.max(np.stack(values, axis=0), axis=0)

    def gradient(self, query: np.ndarray, eps: float) -> np.ndarray:
        """Central-difference gradient; points into the lumen at the wall."""
        query = np.atleast_2d(query)
        grad = np.zeros_like(query)
        for axis in range(3):
            offset = np.zeros(3)
            offset[axis] = eps
            grad[:, axis] = (self.interior_distance(query + offset) - self.interior_distance(query - offset)) / (2 * eps)
        return grad
