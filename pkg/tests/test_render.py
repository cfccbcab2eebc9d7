import math

import numpy as np
import pytest

from evforest import backend
from evforest.errors import ValidationError
from evforest.render import (SKY_INTENSITY, CameraPose, CameraTrajectory, RenderConfig, camera_rays,
                             check_flow_bound, load_trajectory, make_trajectory,
                             render_depth_intensity, render_frames, save_trajectory)
from evforest.scene import ForestScene, PoissonConfig, WorldBox, sample_forest


def empty_scene():
    return ForestScene(WorldBox(), np.empty((0, 3)), [])


def reference_ranges(scene, pose, cfg):
    """Scalar ray casting against cylinders and the ground, one ray at a time."""
    dirs = camera_rays(cfg) @ pose.rotation().T
    o = np.asarray(pose.position)
    out = np.full(len(dirs), cfg.max_range)
    for i, d in enumerate(dirs):
        best = math.inf
        if d[2] < 0:
            best = -o[2] / d[2]
        for cx, cy, r in scene.cylinders:
            a = d[0] ** 2 + d[1] ** 2
            if a == 0:
                continue
            ex, ey = o[0] - cx, o[1] - cy
            b = d[0] * ex + d[1] * ey
            disc = b * b - a * (ex * ex + ey * ey - r * r)
            if disc < 0:
                continue
            t = (-b - math.sqrt(disc)) / a
            if 0 < t < best and 0 <= o[2] + t * d[2] <= scene.world.height:
                best = t
        out[i] = min(best, cfg.max_range)
    return out.reshape(cfg.height, cfg.width)


def test_empty_scene_level_camera(kernels):
    cfg = RenderConfig(32, 24, math.radians(90), 50.0)
    depth, inten, _ = render_depth_intensity(empty_scene(), CameraPose((50, 50, 1.5)), cfg, kernels=kernels)
    assert np.all(inten[:12] == SKY_INTENSITY) and np.all(depth[:12] == 50.0)
    assert np.all(inten[12:] < SKY_INTENSITY)
    # ground rows: range times the forward cosine is the same along each row
    forward = camera_rays(cfg)[:, 0].reshape(24, 32)
    planar = np.where(depth < 50.0, depth * forward, np.nan)[12:]
    for row in planar:
        row = row[np.isfinite(row)]
        np.testing.assert_allclose(row, row[0], rtol=1e-12)
    # rows nearest the horizon may reach past max_range; the bottom row cannot
    assert np.all(depth[-1] < 50.0)


def test_single_cylinder_silhouette(kernels):
    d, r = 10.0, 0.5
    scene = ForestScene(WorldBox(), [(50 + d, 50, r)], [0.6])
    cfg = RenderConfig(128, 32, math.radians(60), 50.0)
    depth, _, _ = render_depth_intensity(scene, CameraPose((50, 50, 1.5)), cfg, kernels=kernels)
    occupied = np.flatnonzero(depth[cfg.height // 2 - 1] < 50.0)
    expected = 2 * cfg.focal * math.tan(math.asin(r / d))
    assert abs(len(occupied) - expected) <= 1
    assert np.all(np.diff(occupied) == 1)
    centre = occupied.mean() + 0.5
    assert abs(centre - cfg.width / 2) <= 0.5


@pytest.mark.parametrize("seed", [0, 1])
def test_depth_matches_analytic_ranges(kernels, seed):
    scene = sample_forest(PoissonConfig(delta=0.05, world=WorldBox(0, 40, 0, 40, 6.0)), seed)
    rng = np.random.default_rng(seed)
    pose = CameraPose((3.0, 20.0, 2.0), rng.uniform(-0.5, 0.5), rng.uniform(-0.4, 0.4),
                      rng.uniform(-0.4, 0.4))
    cfg = RenderConfig(24, 16, math.radians(100), 30.0)
    depth, _, _ = render_depth_intensity(scene, pose, cfg, kernels=kernels)
    np.testing.assert_allclose(depth, reference_ranges(scene, pose, cfg), rtol=0, atol=1e-6)


def test_identical_poses_identical_frames():
    scene = sample_forest(PoissonConfig(delta=0.05), 4)
    pose = CameraPose((5.0, 50.0, 1.5), 0.1)
    traj = CameraTrajectory.from_poses([pose, CameraPose(pose.position, 0.1, time=0.01)], 0.01)
    stack, depth = render_frames(scene, traj, RenderConfig(32, 24))
    assert np.array_equal(stack.frames[0], stack.frames[1])
    assert np.array_equal(depth.depths[0], depth.depths[1])


def test_pose_inside_geometry_rejected():
    scene = ForestScene(WorldBox(), [(10, 10, 1.0)], [0.5])
    for pose in (CameraPose((10.2, 10, 1)), CameraPose((-1, 10, 1)), CameraPose((5, 5, 11))):
        with pytest.raises(ValidationError) as err:
            render_depth_intensity(scene, pose, RenderConfig(8, 6))
        assert err.value.field == "position"


@pytest.mark.skipif("compiled" not in backend.available_backends(), reason="extension not built")
def test_raycast_backends_agree():
    scene = sample_forest(PoissonConfig(delta=0.06), 9)
    pose = CameraPose((4.0, 48.0, 1.7), 0.2, 0.05, -0.1)
    cfg = RenderConfig(64, 48)
    c = render_depth_intensity(scene, pose, cfg, kernels=backend.get_kernels("compiled"))
    p = render_depth_intensity(scene, pose, cfg, kernels=backend.get_kernels("python"))
    for a, b in zip(c, p):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@pytest.mark.skipif("compiled" not in backend.available_backends(), reason="extension not built")
def test_render_thread_count_bit_identical():
    scene = sample_forest(PoissonConfig(delta=0.06), 2)
    traj = make_trajectory("straight", speed=5, frame_rate=20, length=2.0)
    before = backend.num_threads()
    k = backend.get_kernels("compiled")
    try:
        outs = []
        for n in (1, 4):
            backend.set_num_threads(n)
            outs.append(render_frames(scene, traj, RenderConfig(48, 32), k))
    finally:
        backend.set_num_threads(before)
    assert outs[0][0].frames.tobytes() == outs[1][0].frames.tobytes()
    assert outs[0][1].depths.tobytes() == outs[1][1].depths.tobytes()


# trajectories

def test_straight_trajectory_sampling():
    traj = make_trajectory("straight", speed=10.0, frame_rate=100.0, length=10.0)
    assert len(traj) == 101
    steps = np.linalg.norm(np.diff(traj.positions, axis=0), axis=1)
    np.testing.assert_allclose(steps, 0.1, atol=1e-12)


def test_arc_constant_speed():
    traj = make_trajectory("arc", speed=4.0, frame_rate=50.0, length=8.0, curvature=0.1)
    chords = np.linalg.norm(np.diff(traj.positions, axis=0), axis=1)
    np.testing.assert_allclose(chords, chords[0], rtol=1e-9)
    assert traj.yaw[-1] == pytest.approx(0.8)


def test_spline_near_constant_speed():
    traj = make_trajectory("spline", speed=5.0, frame_rate=50.0,
                           waypoints=[(0, 50), (10, 53), (20, 48), (30, 50)])
    steps = np.linalg.norm(np.diff(traj.positions, axis=0), axis=1)
    np.testing.assert_allclose(steps, 0.1, rtol=1e-3)


@pytest.mark.parametrize("kwargs", [dict(kind="straight", length=0.0), dict(kind="loop", length=1.0),
                                    dict(kind="spline", waypoints=[(1, 1), (1, 1)])])
def test_degenerate_trajectories(kwargs):
    with pytest.raises(ValidationError):
        make_trajectory(speed=1.0, frame_rate=10.0, **kwargs)


def test_trajectory_csv_roundtrip(tmp_path):
    traj = make_trajectory("arc", speed=3.0, frame_rate=30.0, length=3.0, curvature=0.2, pitch=0.1)
    path = tmp_path / "t.csv"
    save_trajectory(traj, path)
    assert path.read_text().splitlines()[0] == "time,x,y,z,yaw,pitch,roll"
    back = load_trajectory(path)
    np.testing.assert_allclose(back.positions, traj.positions, rtol=1e-8)
    np.testing.assert_allclose(back.yaw, traj.yaw, rtol=1e-8)
    assert back.frame_period == pytest.approx(traj.frame_period, rel=1e-8)


def test_trajectory_bad_header(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("t,x,y,z\n0,0,0,0\n")
    with pytest.raises(ValidationError) as err:
        load_trajectory(path)
    assert err.value.field == "header"


# optical flow bound

def test_static_camera_no_flow():
    scene = sample_forest(PoissonConfig(delta=0.05), 1)
    pose = CameraPose((3.0, 50.0, 1.5))
    traj = CameraTrajectory.from_poses([pose, CameraPose(pose.position, time=0.1)], 0.1)
    cfg = RenderConfig(32, 24)
    _, depth = render_frames(scene, traj, cfg)
    assert check_flow_bound(depth, traj, cfg) == pytest.approx(0.0, abs=1e-9)


def test_pure_yaw_flow():
    omega, dt = 0.5, 0.01
    cfg = RenderConfig(64, 48, math.radians(30), 50.0)
    scene = sample_forest(PoissonConfig(delta=0.05), 1)
    poses = [CameraPose((3.0, 50.0, 1.5), omega * dt * i, time=dt * i) for i in range(3)]
    traj = CameraTrajectory.from_poses(poses, dt)
    _, depth = render_frames(scene, traj, cfg)
    expected = omega * dt / (cfg.horizontal_fov / cfg.width)
    assert check_flow_bound(depth, traj, cfg) == pytest.approx(expected, rel=0.10)
