"""Teacher reward terms and episode success metrics for forest flights."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from evforest.errors import ValidationError
from evforest.scene import DEFAULT_MAX_RANGE, wrap_angle

GRAVITY = 9.81


def _vec(v, n, name):
    a = np.asarray(v, dtype=np.float64).reshape(-1)
    if a.shape[0] != n or not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} must be {n} finite numbers", field=name)
    return a


@dataclass(frozen=True)
class QuadState:
    velocity: np.ndarray
    yaw: float
    position: np.ndarray = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "velocity", _vec(self.velocity, 3, "velocity"))
        object.__setattr__(self, "position", _vec(self.position, 3, "position"))
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @property
    def heading(self):
        """Unit horizontal heading vector derived from yaw."""
        return np.array([math.cos(self.yaw), math.sin(self.yaw), 0.0])


@dataclass(frozen=True)
class CommandInput:
    velocity: np.ndarray

    def __post_init__(self):
        v = _vec(self.velocity, 3, "v_cmd")
        if np.linalg.norm(v) == 0:
            raise ValidationError("commanded velocity must be non-zero", field="v_cmd")
        object.__setattr__(self, "velocity", v)

    @property
    def direction(self):
        return self.velocity / np.linalg.norm(self.velocity)


@dataclass(frozen=True)
class ActionCommand:
    thrust: float = 0.0
    body_rates: np.ndarray = (0.0, 0.0, 0.0)

    def __post_init__(self):
        rates = _vec(self.body_rates, 3, "body_rates")
        if not math.isfinite(self.thrust):
            raise ValidationError("thrust must be finite", field="thrust")
        if abs(self.thrust) > 1 or np.any(np.abs(rates) > 1):
            raise ValidationError("normalized actions must lie in [-1, 1]", field="action")
        object.__setattr__(self, "body_rates", rates)

    def as_vector(self):
        return np.concatenate([[self.thrust], self.body_rates])


@dataclass(frozen=True)
class ObstacleSet:
    """Surface distances (m) and world bearings (rad) of obstacles in view."""

    distances: np.ndarray = ()
    bearings: np.ndarray = ()

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=np.float64).reshape(-1)
        b = np.asarray(self.bearings, dtype=np.float64).reshape(-1)
        if d.shape != b.shape:
            raise ValidationError("distances and bearings must pair up", field="obstacles")
        if np.any(d < 0):
            raise ValidationError("obstacle distances must be >= 0", field="d_obs")
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "bearings", np.asarray(wrap_angle(b)).reshape(-1))

    def __len__(self):
        return self.distances.shape[0]

    @classmethod
    def from_scene(cls, scene, position, yaw, half_fov=math.radians(60.0),
                   max_range=DEFAULT_MAX_RANGE):
        """Cylinders whose centers lie within +-half_fov of yaw and max_range."""
        if len(scene) == 0:
            return cls()
        c = scene.cylinders
        dx, dy = c[:, 0] - position[0], c[:, 1] - position[1]
        surface = np.maximum(np.hypot(dx, dy) - c[:, 2], 0.0)
        bearing = np.arctan2(dy, dx)
        keep = (np.abs(wrap_angle(bearing - yaw)) <= half_fov) & (surface <= max_range)
        return cls(surface[keep], bearing[keep])


@dataclass(frozen=True)
class RewardWeights:
    prog: float = 1.0
    act: float = 1.0
    br: float = 1.0
    perc: float = 1.0
    obs_dist: float = 1.0
    crash: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v >= 0):
                raise ValidationError(f"weight {f.name} must be finite and >= 0", field=f.name)

    @classmethod
    def from_dict(cls, d, source=None):
        names = {f.name for f in fields(cls)}
        aliases = {f"lambda_{n}": n for n in names}
        out = {}
        for k, v in d.items():
            key = aliases.get(k, k)
            if key not in names:
                raise ValidationError(f"unknown reward weight {k!r}", field=k, source=source)
            out[key] = float(v)
        return cls(**out)

    def scaled(self, factor):
        return RewardWeights(**{k: v * factor for k, v in asdict(self).items()})


@dataclass(frozen=True)
class RewardTerms:
    total: float
    prog: float
    act: float
    br: float
    perc: float
    obs_dist: float
    crash: float

    COMPONENTS = ("prog", "act", "br", "perc", "obs_dist", "crash")


def progress_reward(v_quad, v_cmd):
    v_quad = np.asarray(v_quad, dtype=np.float64)
    v_cmd = np.asarray(v_cmd, dtype=np.float64)
    cmd_norm = np.linalg.norm(v_cmd)
    along = math.tanh(float(v_quad @ v_cmd) / cmd_norm + 1.0)
    closeness = math.tanh(cmd_norm - np.linalg.norm(v_quad - v_cmd) + 1.0)
    speed_ratio = 0.25 * min(np.linalg.norm(v_quad) / cmd_norm, 1.0)
    return along * closeness * speed_ratio - abs(v_quad[2])


def obstacle_reward(obstacles, heading_yaw):
    if len(obstacles) == 0:
        return 0.0
    dphi = wrap_angle(heading_yaw - obstacles.bearings)
    return -float(np.mean(np.exp(-obstacles.distances - np.square(dphi))))


def compute_reward(state, cmd, action, prev_action, obstacles, crash, weights=RewardWeights()):
    v_cmd = cmd.velocity
    r_prog = progress_reward(state.velocity, v_cmd)
    r_act = -float(np.linalg.norm(action.as_vector() - prev_action.as_vector()))
    r_br = -float(np.linalg.norm(action.body_rates))
    heading = state.heading
    r_perc = float(v_cmd @ heading / (np.linalg.norm(v_cmd) * np.linalg.norm(heading)))
    r_obs = obstacle_reward(obstacles, state.yaw)
    r_crash = -float(np.linalg.norm(state.velocity)) - 1.0 if crash else 0.0
    parts = dict(prog=r_prog, act=r_act, br=r_br, perc=r_perc, obs_dist=r_obs, crash=r_crash)
    total = sum(getattr(weights, k) * v for k, v in parts.items())
    return RewardTerms(total=total, **parts)


@dataclass(frozen=True)
class EpisodeStats:
    success: bool
    distance_along_command: float
    mean_velocity: float
    crash_step: Optional[int] = None


def crash_mask(scene, positions, quad_radius=0.15, ground_z=0.1, ceiling=None):
    """True where a position collides with a tree, the ground, the ceiling,
    or lies outside the horizontal world box."""
    p = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    w = scene.world
    ceiling = w.height if ceiling is None else ceiling
    hit = (p[:, 2] <= ground_z) | (p[:, 2] >= ceiling)
    hit |= (p[:, 0] < w.x_min) | (p[:, 0] > w.x_max) | (p[:, 1] < w.y_min) | (p[:, 1] > w.y_max)
    if len(scene):
        c = scene.cylinders
        centre = np.hypot(p[:, 0, None] - c[None, :, 0], p[:, 1, None] - c[None, :, 1])
        hit |= np.any(centre - c[None, :, 2] <= quad_radius, axis=1)
    return hit


def evaluate_episode(scene, traj, cmd, quad_radius=0.15, success_threshold=40.0,
                     ground_z=0.1, ceiling=None):
    if len(traj) == 0:
        raise ValidationError("trajectory is empty", field="poses")
    crashed = crash_mask(scene, traj.positions, quad_radius, ground_z, ceiling)
    crash_step = int(np.argmax(crashed)) if crashed.any() else None
    end = crash_step if crash_step is not None else len(traj) - 1
    pos = traj.positions[:end + 1]
    distance = float((pos[-1] - pos[0]) @ cmd.direction)
    elapsed = traj.times[end] - traj.times[0]
    path = float(np.linalg.norm(np.diff(pos, axis=0), axis=1).sum())
    mean_velocity = path / elapsed if elapsed > 0 else 0.0
    success = crash_step is None and distance > success_threshold
    return EpisodeStats(success, distance, mean_velocity, crash_step)


def trajectory_rewards(scene, traj, cmd, weights=RewardWeights(), quad_radius=0.15,
                       ground_z=0.1, ceiling=None, max_body_rate=6.0,
                       max_range=DEFAULT_MAX_RANGE):
    """Per-step reward terms along a recorded trajectory.

    Velocities are finite differences of positions; body rates are finite
    differences of the attitude angles normalized by ``max_body_rate`` (rad/s)
    and the collective thrust is the normalized vertical acceleration about
    hover. Steps after the first crash are not scored.
    """
    n = len(traj)
    dt = traj.frame_period
    vel = np.zeros((n, 3))
    if n > 1:
        vel[1:] = np.diff(traj.positions, axis=0) / dt
        vel[0] = vel[1]
    att = np.column_stack([traj.roll, traj.pitch, np.unwrap(traj.yaw)])
    rates = np.zeros((n, 3))
    if n > 1:
        rates[1:] = np.diff(att, axis=0) / dt
    acc_z = np.zeros(n)
    if n > 2:
        acc_z[1:] = np.diff(vel[:, 2]) / dt
    crashed = crash_mask(scene, traj.positions, quad_radius, ground_z, ceiling)

    rows = []
    prev = ActionCommand()
    for i in range(n):
        action = ActionCommand(float(np.clip(acc_z[i] / GRAVITY, -1, 1)),
                               np.clip(rates[i] / max_body_rate, -1, 1))
        state = QuadState(vel[i], traj.yaw[i], traj.positions[i])
        obstacles = ObstacleSet.from_scene(scene, traj.positions[i], traj.yaw[i],
                                           max_range=max_range)
        rows.append(compute_reward(state, cmd, action, prev, obstacles, bool(crashed[i]), weights))
        prev = action
        if crashed[i]:
            break
    return rows


EPISODE_COLUMNS = ("episode_id", "seed", "poisson_delta", "success", "distance_m",
                   "mean_velocity_mps", "crash_step")


def write_episode_report(rows, path):
    """rows: iterables of (episode_id, seed, poisson_delta, EpisodeStats)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EPISODE_COLUMNS)
        for episode_id, seed, delta, stats in rows:
            w.writerow([episode_id, "" if seed is None else seed,
                        "" if delta is None else f"{delta:.9g}",
                        "true" if stats.success else "false",
                        f"{stats.distance_along_command:.9g}", f"{stats.mean_velocity:.9g}",
                        "" if stats.crash_step is None else stats.crash_step])


def read_episode_report(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
