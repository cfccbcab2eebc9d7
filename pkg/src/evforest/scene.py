"""Poisson forests of vertical cylinders and angular obstacle-distance maps."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from evforest.errors import ValidationError

DEFAULT_MAX_RANGE = 50.0
DEFAULT_BIN_SPAN = math.radians(11.25)
DEFAULT_NUM_BINS = 10


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=np.float64) + np.pi, 2 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


@dataclass(frozen=True)
class WorldBox:
    x_min: float = 0.0
    x_max: float = 100.0
    y_min: float = 0.0
    y_max: float = 100.0
    height: float = 10.0

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min and self.height > 0):
            raise ValidationError("world box must have positive extents", field="world_box")

    @property
    def area(self):
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def start(self):
        """Center of the left (x_min) edge."""
        return (self.x_min, 0.5 * (self.y_min + self.y_max))

    def contains(self, x, y, z=None):
        inside = self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max
        if z is not None:
            inside = inside and 0.0 <= z <= self.height
        return inside

    def to_dict(self):
        return {"x_min": self.x_min, "x_max": self.x_max, "y_min": self.y_min,
                "y_max": self.y_max, "height": self.height}


@dataclass(frozen=True)
class PoissonConfig:
    delta: float = 0.04
    r_min: float = 0.2
    r_max: float = 0.5
    world: WorldBox = field(default_factory=WorldBox)
    min_clearance: float = 2.0
    albedo_range: tuple = (0.2, 0.8)
    background_albedo: float = 0.35

    def __post_init__(self):
        if not (self.delta >= 0 and math.isfinite(self.delta)):
            raise ValidationError("delta must be a non-negative intensity", field="delta")
        if not (0 < self.r_min <= self.r_max):
            raise ValidationError("need 0 < r_min <= r_max", field="r_min/r_max")
        if self.min_clearance < 0:
            raise ValidationError("min_clearance must be >= 0", field="min_clearance")


@dataclass(frozen=True)
class ForestScene:
    """Cylinders as an (N, 3) array of (center_x, center_y, radius) in meters."""

    world: WorldBox
    cylinders: np.ndarray
    albedos: np.ndarray
    background_albedo: float = 0.35
    seed: Optional[int] = None
    r_min: float = 0.2
    r_max: float = 0.5

    def __post_init__(self):
        cyl = np.asarray(self.cylinders, dtype=np.float64).reshape(-1, 3)
        alb = np.asarray(self.albedos, dtype=np.float64).reshape(-1)
        if alb.shape[0] != cyl.shape[0]:
            raise ValidationError("one albedo per cylinder required", field="albedos")
        if np.any((alb < 0) | (alb > 1)) or not 0 <= self.background_albedo <= 1:
            raise ValidationError("albedos must lie in [0, 1]", field="albedos")
        if np.any(cyl[:, 2] <= 0):
            raise ValidationError("cylinder radii must be positive", field="cylinders")
        object.__setattr__(self, "cylinders", cyl)
        object.__setattr__(self, "albedos", alb)

    def __len__(self):
        return self.cylinders.shape[0]

    def without(self, index):
        keep = np.arange(len(self)) != index
        return ForestScene(self.world, self.cylinders[keep], self.albedos[keep],
                           self.background_albedo, self.seed, self.r_min, self.r_max)

    def surface_distance(self, x, y):
        """Horizontal distance from (x, y) to every cylinder surface (negative inside)."""
        if len(self) == 0:
            return np.empty(0)
        c = self.cylinders
        return np.hypot(c[:, 0] - x, c[:, 1] - y) - c[:, 2]

    def to_dict(self):
        return {
            "world_box": self.world.to_dict(),
            "seed": self.seed,
            "r_range": [self.r_min, self.r_max],
            "background_albedo": self.background_albedo,
            "cylinders": [{"x": float(x), "y": float(y), "r": float(r), "albedo": float(a)}
                          for (x, y, r), a in zip(self.cylinders, self.albedos)],
        }

    @classmethod
    def from_dict(cls, d, source=None):
        known = {"world_box", "seed", "r_range", "background_albedo", "cylinders"}
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown scene keys {sorted(extra)}", field=sorted(extra)[0],
                                  source=source)
        try:
            world = WorldBox(**d["world_box"])
            cyl = [(c["x"], c["y"], c["r"]) for c in d["cylinders"]]
            alb = [c.get("albedo", 0.5) for c in d["cylinders"]]
            r_min, r_max = d.get("r_range", (0.2, 0.5))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed scene: {exc}", field=str(exc), source=source) from None
        return cls(world, np.asarray(cyl, dtype=np.float64).reshape(-1, 3), alb,
                   d.get("background_albedo", 0.35), d.get("seed"), r_min, r_max)


def save_scene(scene, path):
    with open(path, "w") as fh:
        json.dump(scene.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_scene(path):
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON: {exc}", source=str(path)) from None
    return ForestScene.from_dict(d, source=str(path))


def sample_forest(cfg, seed):
    """Homogeneous Poisson forest: count ~ Poisson(delta * area), uniform
    positions and radii. Trees reaching into the start clearance disk are
    dropped."""
    rng = np.random.default_rng(seed)
    w = cfg.world
    n = int(rng.poisson(cfg.delta * w.area))
    xs = rng.uniform(w.x_min, w.x_max, n)
    ys = rng.uniform(w.y_min, w.y_max, n)
    rs = rng.uniform(cfg.r_min, cfg.r_max, n)
    albedos = rng.uniform(cfg.albedo_range[0], cfg.albedo_range[1], n)
    sx, sy = w.start
    keep = np.hypot(xs - sx, ys - sy) - rs >= cfg.min_clearance
    cyl = np.column_stack([xs, ys, rs])[keep]
    return ForestScene(w, cyl, albedos[keep], cfg.background_albedo, seed, cfg.r_min, cfg.r_max)


def min_obstacle_distance(scene, position, bearing_interval, max_range=DEFAULT_MAX_RANGE):
    """Closest cylinder surface among those whose angular extent, seen from
    ``position``, overlaps the world-frame bearing interval (lo, hi)."""
    x, y = position[0], position[1]
    if len(scene) == 0:
        return float(max_range)
    lo, hi = bearing_interval
    if hi < lo:
        raise ValidationError("bearing interval must satisfy lo <= hi", field="bearing_interval")
    c = scene.cylinders
    dx, dy = c[:, 0] - x, c[:, 1] - y
    center = np.hypot(dx, dy)
    surface = center - c[:, 2]
    if np.any(surface <= 0):
        return 0.0
    half_width = np.arcsin(np.minimum(1.0, c[:, 2] / center))
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    off = np.abs(wrap_angle(np.arctan2(dy, dx) - mid))
    visible = off < half + half_width
    if half >= np.pi:
        visible[:] = True
    if not visible.any():
        return float(max_range)
    return float(min(surface[visible].min(), max_range))


@dataclass(frozen=True)
class DistanceMap:
    bins: np.ndarray
    bin_span: float = DEFAULT_BIN_SPAN
    gravity_aligned: bool = True


@dataclass(frozen=True)
class BandedDistanceMap:
    """Three image bands (top, middle, bottom) of N angular intervals."""

    bands: np.ndarray

    @property
    def flat(self):
        return self.bands.reshape(-1)


def bin_edges(num_bins, span):
    """Relative bearings of the bin edges, leftmost (most positive) first."""
    return (num_bins / 2.0 - np.arange(num_bins + 1)) * span


def teacher_distance_map(scene, pose, num_bins=DEFAULT_NUM_BINS, span=DEFAULT_BIN_SPAN,
                         max_range=DEFAULT_MAX_RANGE):
    """Gravity-aligned map: bins centered on the pose yaw; pitch and roll are ignored.

    Bin 0 is the leftmost bearing, matching image column order.
    """
    edges = bin_edges(num_bins, span) + pose.yaw
    pos = (pose.position[0], pose.position[1])
    values = [min_obstacle_distance(scene, pos, (edges[i + 1], edges[i]), max_range)
              for i in range(num_bins)]
    return DistanceMap(np.asarray(values), span, True)


def column_bearings(width, fov):
    """Horizontal bearing of each pixel-column center relative to the optical
    axis (left positive)."""
    f = 0.5 * width / math.tan(0.5 * fov)
    u = np.arange(width) + 0.5
    return np.arctan((0.5 * width - u) / f)


def student_distance_map(depth, fov, num_intervals=DEFAULT_NUM_BINS, span=DEFAULT_BIN_SPAN,
                         max_range=DEFAULT_MAX_RANGE):
    """Minimum depth per (image band, angular interval).

    The image is cut into three equal-height bands, the remainder rows going
    to the bottom band. Intervals that contain no pixel column read max_range.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise ValidationError("depth must be a single H x W image", field="depth")
    H, W = depth.shape
    if H < 3:
        raise ValidationError("depth image needs at least 3 rows", field="depth")
    rows = H // 3
    bands_rows = [(0, rows), (rows, 2 * rows), (2 * rows, H)]
    bearing = column_bearings(W, fov)
    edges = bin_edges(num_intervals, span)
    # interval i covers (edges[i+1], edges[i]]
    interval = np.full(W, -1)
    for i in range(num_intervals):
        interval[(bearing <= edges[i]) & (bearing > edges[i + 1])] = i

    out = np.full((3, num_intervals), float(max_range))
    for b, (r0, r1) in enumerate(bands_rows):
        col_min = depth[r0:r1].min(axis=0)
        for i in range(num_intervals):
            sel = interval == i
            if sel.any():
                out[b, i] = min(col_min[sel].min(), max_range)
    return BandedDistanceMap(out)
