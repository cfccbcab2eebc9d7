import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evforest.errors import ValidationError
from evforest.render import CameraPose
from evforest.scene import (ForestScene, PoissonConfig, WorldBox, bin_edges, column_bearings,
                            load_scene, min_obstacle_distance, sample_forest, save_scene,
                            student_distance_map, teacher_distance_map, wrap_angle)

SPAN = math.radians(11.25)


def one_tree(x=10.0, y=0.0, r=0.5):
    return ForestScene(WorldBox(-50, 50, -50, 50), [(x, y, r)], [0.5])


def empty_scene():
    return ForestScene(WorldBox(), np.empty((0, 3)), [])


def test_wrap_angle_half_open():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)


# Poisson forest

def test_zero_delta_is_empty():
    assert len(sample_forest(PoissonConfig(delta=0.0), 1)) == 0


def test_same_seed_same_forest():
    a, b = sample_forest(PoissonConfig(), 42), sample_forest(PoissonConfig(), 42)
    assert np.array_equal(a.cylinders, b.cylinders)
    assert np.array_equal(a.albedos, b.albedos)
    assert not np.array_equal(a.cylinders, sample_forest(PoissonConfig(), 43).cylinders)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.0, 0.1), st.floats(0.05, 1.0), st.floats(0.0, 1.0))
def test_forest_invariants(seed, delta, r_min, extra):
    cfg = PoissonConfig(delta=delta, r_min=r_min, r_max=r_min + extra,
                        world=WorldBox(0, 40, 0, 30))
    scene = sample_forest(cfg, seed)
    r = scene.cylinders[:, 2]
    assert np.all((r >= cfg.r_min) & (r <= cfg.r_max))
    w = cfg.world
    assert np.all((scene.cylinders[:, 0] >= w.x_min) & (scene.cylinders[:, 0] <= w.x_max))
    assert np.all((scene.cylinders[:, 1] >= w.y_min) & (scene.cylinders[:, 1] <= w.y_max))
    sx, sy = w.start
    assert np.all(scene.surface_distance(sx, sy) >= cfg.min_clearance)


@pytest.mark.parametrize("kwargs", [dict(delta=-1), dict(r_min=0), dict(r_min=0.6, r_max=0.5),
                                    dict(min_clearance=-1)])
def test_poisson_config_validation(kwargs):
    with pytest.raises(ValidationError):
        PoissonConfig(**kwargs)


def test_scene_json_roundtrip(tmp_path):
    scene = sample_forest(PoissonConfig(delta=0.01), 7)
    path = tmp_path / "scene.json"
    save_scene(scene, path)
    back = load_scene(path)
    assert np.array_equal(back.cylinders, scene.cylinders)
    assert np.array_equal(back.albedos, scene.albedos)
    assert back.seed == 7 and back.world == scene.world


def test_scene_json_unknown_key(tmp_path):
    path = tmp_path / "scene.json"
    path.write_text('{"world_box": {}, "cylinders": [], "trees": 3}')
    with pytest.raises(ValidationError) as err:
        load_scene(path)
    assert err.value.field == "trees" and str(path) in str(err.value)


# obstacle distance

def test_min_distance_empty_scene():
    assert min_obstacle_distance(empty_scene(), (0, 0), (-0.1, 0.1), 50.0) == 50.0


def test_min_distance_single_cylinder():
    assert min_obstacle_distance(one_tree(), (0, 0), (-0.05, 0.05)) == pytest.approx(9.5, abs=1e-12)


def test_min_distance_outside_interval():
    assert min_obstacle_distance(one_tree(), (0, 0), (1.0, 1.5), 50.0) == 50.0


def test_min_distance_grazing_extent():
    # the tree's angular half width asin(0.5/10) reaches into an interval that excludes its center
    half = math.asin(0.05)
    assert min_obstacle_distance(one_tree(), (0, 0), (half - 1e-6, 1.0)) == pytest.approx(9.5)
    assert min_obstacle_distance(one_tree(), (0, 0), (half + 1e-6, 1.0)) == 50.0


def test_min_distance_inside_cylinder():
    assert min_obstacle_distance(one_tree(), (10.1, 0.0), (0, 0.1)) == 0.0


# teacher map

def test_teacher_empty():
    m = teacher_distance_map(empty_scene(), CameraPose((0, 0, 1)), 10, SPAN, 50.0)
    assert np.all(m.bins == 50.0)


def test_teacher_tree_dead_ahead():
    m = teacher_distance_map(one_tree(), CameraPose((0, 0, 1.5)), 10, SPAN, 50.0)
    # bearing 0 is the edge between bins 4 and 5
    np.testing.assert_allclose(m.bins[[4, 5]], 9.5, atol=1e-6)
    assert np.all(np.delete(m.bins, [4, 5]) == 50.0)


def test_teacher_left_is_bin_zero():
    tree = one_tree(x=10 * math.cos(0.9), y=10 * math.sin(0.9))
    m = teacher_distance_map(tree, CameraPose((0, 0, 1)), 10, SPAN, 50.0)
    assert m.bins[0] == pytest.approx(9.5)
    assert np.all(m.bins[1:] == 50.0)


@pytest.mark.parametrize("pitch,roll", [(0.0, 30.0), (0.0, -30.0), (30.0, 0.0), (-30.0, 30.0)])
def test_teacher_gravity_aligned(pitch, roll):
    scene = sample_forest(PoissonConfig(delta=0.05), 3)
    level = CameraPose((20.0, 50.0, 1.5), 0.3)
    tilted = CameraPose((20.0, 50.0, 1.5), 0.3, math.radians(pitch), math.radians(roll))
    assert np.array_equal(teacher_distance_map(scene, level).bins,
                          teacher_distance_map(scene, tilted).bins)


@pytest.mark.parametrize("seed", range(5))
def test_teacher_yaw_shift(seed):
    scene = sample_forest(PoissonConfig(delta=0.05), seed)
    base = teacher_distance_map(scene, CameraPose((30.0, 50.0, 1.5), 0.2)).bins
    turned = teacher_distance_map(scene, CameraPose((30.0, 50.0, 1.5), 0.2 + SPAN)).bins
    np.testing.assert_allclose(turned[1:], base[:-1], rtol=0, atol=1e-12)


def test_bin_edges_leftmost_first():
    e = bin_edges(10, SPAN)
    assert e[0] == pytest.approx(5 * SPAN) and e[-1] == pytest.approx(-5 * SPAN)


# student map

def test_student_uniform_depth():
    m = student_distance_map(np.full((48, 64), 7.25), math.radians(120), 10, SPAN, 50.0)
    assert m.bands.shape == (3, 10) and m.flat.shape == (30,)
    assert np.all(m.bands == 7.25)


def test_student_narrow_fov_leaves_outer_intervals_empty():
    # 90 degrees of view cannot fill 112.5 degrees of intervals
    m = student_distance_map(np.full((48, 64), 7.25), math.radians(90), 10, SPAN, 50.0)
    assert np.all(m.bands[:, [0, 9]] == 50.0)
    assert np.all(m.bands[:, 1:9] == 7.25)


def test_student_single_near_column():
    depth = np.full((48, 64), 20.0)
    col = 40
    depth[:16, col] = 2.0
    fov = math.radians(120)
    m = student_distance_map(depth, fov, 10, SPAN, 50.0)
    bearing = column_bearings(64, fov)[col]
    edges = bin_edges(10, SPAN)
    i = int(np.flatnonzero((bearing <= edges[:-1]) & (bearing > edges[1:]))[0])
    assert m.bands[0, i] == 2.0
    assert np.sum(m.bands == 2.0) == 1
    assert np.all(np.delete(m.bands.reshape(-1), i) == 20.0)


def test_student_remainder_rows_go_bottom():
    depth = np.full((50, 64), 9.0)
    depth[48:] = 1.0  # rows 48, 49 only exist because 50 = 3 * 16 + 2
    m = student_distance_map(depth, math.radians(120), 10, SPAN, 50.0)
    assert np.all(m.bands[2] == 1.0) and np.all(m.bands[:2] == 9.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 12 * 16 - 1), st.floats(0.0, 30.0))
def test_student_monotone(seed, pixel, value):
    rng = np.random.default_rng(seed)
    depth = rng.uniform(0.5, 40.0, (12, 16))
    before = student_distance_map(depth, math.radians(120)).bands
    smaller = depth.copy()
    y, x = divmod(pixel, 16)
    smaller[y, x] = min(value, depth[y, x])
    after = student_distance_map(smaller, math.radians(120)).bands
    assert np.all(after <= before)


def test_student_rejects_tiny_image():
    with pytest.raises(ValidationError):
        student_distance_map(np.ones((2, 5)), math.radians(90))
