"""Pinhole raycasting of forest scenes along camera trajectories.

Camera frame is forward-left-up. Orientation is R = Rz(yaw) Ry(pitch) Rx(roll);
positive pitch tilts the optical axis downward.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from evforest import backend
from evforest.errors import ValidationError
from evforest.events import log_transform
from evforest.scene import DEFAULT_MAX_RANGE, wrap_angle

SKY_INTENSITY = 0.9


@dataclass(frozen=True)
class CameraPose:
    position: tuple
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        pos = tuple(float(v) for v in self.position)
        if len(pos) != 3 or not all(math.isfinite(v) for v in pos):
            raise ValidationError("position must be three finite numbers", field="position")
        for name in ("yaw", "pitch", "roll"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite", field=name)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def rotation(self):
        return rotation_matrix(self.yaw, self.pitch, self.roll)


def rotation_matrix(yaw, pitch, roll):
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return rz @ ry @ rx


@dataclass(frozen=True)
class CameraTrajectory:
    times: np.ndarray
    positions: np.ndarray
    yaw: np.ndarray
    pitch: np.ndarray
    roll: np.ndarray
    frame_period: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        n = t.shape[0]
        if n < 1:
            raise ValidationError("trajectory needs at least one pose", field="poses")
        pos = np.asarray(self.positions, dtype=np.float64).reshape(n, 3)
        arrays = {k: np.asarray(getattr(self, k), dtype=np.float64).reshape(n)
                  for k in ("yaw", "pitch", "roll")}
        if not (self.frame_period > 0):
            raise ValidationError("frame_period must be positive", field="frame_period")
        if n > 1:
            steps = np.diff(t)
            if np.any(steps <= 0) or np.max(np.abs(steps - self.frame_period)) > 1e-6 * max(1.0, self.frame_period):
                raise ValidationError("pose times must be evenly spaced by frame_period",
                                      field="time")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", pos)
        arrays["yaw"] = np.asarray(wrap_angle(arrays["yaw"])).reshape(n)
        for k, v in arrays.items():
            object.__setattr__(self, k, v)

    def __len__(self):
        return self.times.shape[0]

    def __getitem__(self, i):
        return CameraPose(tuple(self.positions[i]), self.yaw[i], self.pitch[i], self.roll[i],
                          self.times[i])

    @property
    def poses(self):
        return [self[i] for i in range(len(self))]

    @classmethod
    def from_poses(cls, poses, frame_period):
        return cls(np.array([p.time for p in poses]), np.array([p.position for p in poses]),
                   np.array([p.yaw for p in poses]), np.array([p.pitch for p in poses]),
                   np.array([p.roll for p in poses]), frame_period)


@dataclass(frozen=True)
class RenderConfig:
    width: int = 64
    height: int = 48
    horizontal_fov: float = math.radians(90.0)
    max_range: float = DEFAULT_MAX_RANGE
    epsilon: float = 1e-3

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValidationError("image size must be positive", field="width/height")
        if not 0 < self.horizontal_fov < math.pi:
            raise ValidationError("horizontal fov must lie in (0, pi)", field="horizontal_fov")
        if not self.max_range > 0:
            raise ValidationError("max_range must be positive", field="max_range")

    @property
    def focal(self):
        return 0.5 * self.width / math.tan(0.5 * self.horizontal_fov)


@dataclass(frozen=True)
class DepthStack:
    depths: np.ndarray
    max_range: float = DEFAULT_MAX_RANGE


def camera_rays(cfg):
    """Unit ray directions in the camera frame, shape (H*W, 3), row-major pixels."""
    f = cfg.focal
    u = np.arange(cfg.width) + 0.5
    v = np.arange(cfg.height) + 0.5
    uu, vv = np.meshgrid(u, v)
    d = np.stack([np.ones_like(uu), (0.5 * cfg.width - uu) / f, (0.5 * cfg.height - vv) / f], axis=-1)
    d = d.reshape(-1, 3)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def project(points_cam, cfg):
    """Pixel coordinates (u, v) of camera-frame points; nan behind the camera."""
    f = cfg.focal
    x = points_cam[..., 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = 0.5 * cfg.width - f * points_cam[..., 1] / x
        v = 0.5 * cfg.height - f * points_cam[..., 2] / x
    bad = x <= 0
    u = np.where(bad, np.nan, u)
    v = np.where(bad, np.nan, v)
    return u, v


def _check_pose(scene, pose):
    x, y, z = pose.position
    if not scene.world.contains(x, y) or not 0.0 < z <= scene.world.height:
        raise ValidationError(f"pose at t={pose.time} lies outside the world box", field="position")
    if len(scene) and np.any(scene.surface_distance(x, y) <= 0):
        raise ValidationError(f"pose at t={pose.time} lies inside a cylinder", field="position")


def render_depth_intensity(scene, pose, cfg, rays=None, kernels=None):
    """One frame: (depth, linear intensity, hit range), each H x W."""
    _check_pose(scene, pose)
    k = kernels or backend.get_kernels()
    rays = camera_rays(cfg) if rays is None else rays
    dirs = np.ascontiguousarray(rays @ pose.rotation().T)
    depth, inten, rng = k.raycast(np.asarray(pose.position, dtype=np.float64), dirs,
                                  np.ascontiguousarray(scene.cylinders), scene.albedos,
                                  float(scene.world.height), float(scene.background_albedo),
                                  SKY_INTENSITY, float(cfg.max_range), backend.num_threads())
    shape = (cfg.height, cfg.width)
    return depth.reshape(shape), inten.reshape(shape), rng.reshape(shape)


def render_frames(scene, traj, cfg, kernels=None):
    """Render log-intensity and depth stacks for every pose of ``traj``."""
    rays = camera_rays(cfg)
    T = len(traj)
    depth = np.empty((T, cfg.height, cfg.width))
    inten = np.empty((T, cfg.height, cfg.width))
    for i in range(T):
        depth[i], inten[i], _ = render_depth_intensity(scene, traj[i], cfg, rays, kernels)
    stack = log_transform(inten, cfg.epsilon, frame_period=traj.frame_period, t0=float(traj.times[0]))
    return stack, DepthStack(depth, cfg.max_range)


def render_intensity(scene, traj, cfg, kernels=None):
    """Linear intensities (T, H, W) in [0, 1]; used for the u8 container."""
    rays = camera_rays(cfg)
    out = np.empty((len(traj), cfg.height, cfg.width))
    for i in range(len(traj)):
        _, out[i], _ = render_depth_intensity(scene, traj[i], cfg, rays, kernels)
    return out


def check_flow_bound(depth, traj, cfg):
    """Largest image displacement (pixels) of any pixel's 3-D point between
    consecutive frames."""
    d = depth.depths if isinstance(depth, DepthStack) else np.asarray(depth)
    if d.shape[0] != len(traj):
        raise ValidationError("depth stack and trajectory lengths differ", field="depth")
    rays = camera_rays(cfg)
    u0 = (np.arange(cfg.width) + 0.5)[None, :].repeat(cfg.height, 0).reshape(-1)
    v0 = (np.arange(cfg.height) + 0.5)[:, None].repeat(cfg.width, 1).reshape(-1)
    worst = 0.0
    for t in range(len(traj) - 1):
        a, b = traj[t], traj[t + 1]
        ra, rb = a.rotation(), b.rotation()
        pts = np.asarray(a.position) + (rays @ ra.T) * d[t].reshape(-1, 1)
        cam = (pts - np.asarray(b.position)) @ rb
        u, v = project(cam, cfg)
        disp = np.hypot(u - u0, v - v0)
        if np.any(np.isnan(disp)):
            return float("inf")
        worst = max(worst, float(disp.max()))
    return worst


def make_trajectory(kind, *, speed, frame_rate, start=(0.0, 50.0, 1.5), yaw=0.0, length=None,
                    curvature=0.0, waypoints=None, pitch=0.0, roll=0.0, yaw_override=None):
    """Constant-speed trajectory sampled at ``frame_rate``.

    kind is "straight", "arc" (constant curvature, 1/m) or "spline" (cubic
    through ``waypoints``, resampled by arc length). Yaw follows the velocity
    direction unless ``yaw_override`` is given.
    """
    if not (speed > 0 and frame_rate > 0):
        raise ValidationError("speed and frame_rate must be positive", field="speed/frame_rate")
    start = np.asarray(start, dtype=np.float64)
    if kind in ("straight", "arc"):
        if length is None or not length > 0:
            raise ValidationError("trajectory length must be positive", field="length")
        kappa = 0.0 if kind == "straight" else float(curvature)
        path = _arc_path(start, yaw, kappa)
    elif kind == "spline":
        path, total = _spline_path(waypoints)
        length = total if length is None else min(length, total)
        if not length > 0:
            raise ValidationError("waypoints span zero length", field="waypoints")
    else:
        raise ValidationError(f"unknown trajectory kind {kind!r}", field="kind")

    period = 1.0 / frame_rate
    n = int(math.floor(length / speed * frame_rate + 1e-9)) + 1
    times = np.arange(n) * period
    s = speed * times
    pos, heading = path(s)
    yaws = np.full(n, yaw_override) if yaw_override is not None else heading
    return CameraTrajectory(times, pos, yaws, np.full(n, pitch), np.full(n, roll), period)


def _arc_path(start, yaw, kappa):
    def path(s):
        if abs(kappa) < 1e-12:
            x = start[0] + s * math.cos(yaw)
            y = start[1] + s * math.sin(yaw)
            heading = np.full(s.shape, yaw)
        else:
            heading = yaw + kappa * s
            x = start[0] + (np.sin(heading) - math.sin(yaw)) / kappa
            y = start[1] - (np.cos(heading) - math.cos(yaw)) / kappa
        return np.column_stack([x, y, np.full(s.shape, start[2])]), heading
    return path


def _spline_path(waypoints):
    w = np.asarray(waypoints, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] < 2 or w.shape[1] not in (2, 3):
        raise ValidationError("need at least two 2-D or 3-D waypoints", field="waypoints")
    if w.shape[1] == 2:
        w = np.column_stack([w, np.full(w.shape[0], 1.5)])
    chord = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(w, axis=0), axis=1))])
    if chord[-1] <= 0 or np.any(np.diff(chord) <= 0):
        raise ValidationError("consecutive waypoints must differ", field="waypoints")
    spline = CubicSpline(chord, w, axis=0, bc_type="natural")
    dense = np.linspace(0.0, chord[-1], 200 * len(w) + 1)
    pts = spline(dense)
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])

    def path(s):
        param = np.interp(s, arc, dense)
        deriv = spline(param, 1)
        return spline(param), np.arctan2(deriv[:, 1], deriv[:, 0])
    return path, float(arc[-1])


TRAJECTORY_COLUMNS = ("time", "x", "y", "z", "yaw", "pitch", "roll")


def save_trajectory(traj, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for i in range(len(traj)):
            row = (traj.times[i], *traj.positions[i], traj.yaw[i], traj.pitch[i], traj.roll[i])
            w.writerow([f"{v:.9g}" for v in row])


def load_trajectory(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRAJECTORY_COLUMNS:
            raise ValidationError(f"trajectory header must be {','.join(TRAJECTORY_COLUMNS)}",
                                  field="header", source=str(path))
        try:
            rows = np.array([[float(v) for v in r] for r in reader if r], dtype=np.float64)
        except ValueError as exc:
            raise ValidationError(f"non-numeric trajectory value: {exc}", source=str(path)) from None
    if rows.size == 0:
        raise ValidationError("trajectory has no poses", field="poses", source=str(path))
    period = (rows[-1, 0] - rows[0, 0]) / (len(rows) - 1) if len(rows) > 1 else 1.0
    try:
        return CameraTrajectory(rows[:, 0], rows[:, 1:4], rows[:, 4], rows[:, 5], rows[:, 6], period)
    except ValidationError as exc:
        raise ValidationError(str(exc), field=exc.field, source=str(path)) from None
