import csv
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evoctrl.controllers import RegulatoryPolicy, reservoir_init
from evoctrl.cpg import CpgNetwork, build_cpg_network, set_initial_state, spider
from evoctrl.metrics import gait_fitness
from evoctrl.swarm import (FIELD_KINDS, SpawnError, World, WorldConfig, cpg_drive_trial,
                           drive_trajectory, make_field, perceived_neighbors, run_swarm_trial, sense,
                           spawn_swarm, step_world, write_field_csv)

SMALL = WorldConfig(arena_side=10.0, swarm_size=14, spawn_radius=3.0, duration=20.0)


def world_of(pos, heading, cfg=SMALL, kind="center"):
    pos = np.asarray(pos, dtype=float)
    return World(replace(cfg, swarm_size=len(pos)), make_field(kind, cfg.arena_side), pos,
                 np.asarray(heading, dtype=float), np.zeros(len(pos), dtype=np.int64))


# ------------------------------------------------------------------ fields

def test_center_field_values():
    f = make_field("center", 10.0)
    assert f.value(0.0, 0.0) == 255.0
    assert f.value(5.0, 0.0) == 0.0
    assert f.value(4.0, 4.0) == 0.0
    assert math.isclose(float(f.value(2.5, 0.0)), 127.5)


def test_linear_field_edges():
    f = make_field("linear", 10.0)
    assert f.value(-5.0, 1.0) == 0.0 and f.value(5.0, -2.0) == 255.0


def test_bimodal_peaks():
    f = make_field("bimodal", 20.0)
    assert f.value(-5.0, 0.0) == 255.0
    assert math.isclose(float(f.value(5.0, 0.0)), 200.0)


def test_unknown_field_kind():
    with pytest.raises(ValueError):
        make_field("spiral", 10.0)


@settings(max_examples=200)
@given(st.sampled_from(FIELD_KINDS), st.floats(-20, 20), st.floats(-20, 20), st.sampled_from([0.0, 0.5]))
def test_field_bounds(kind, x, y, cell):
    v = float(make_field(kind, 30.0, cell).value(x, y))
    assert 0.0 <= v <= 255.0


@given(st.floats(0, 2 * math.pi), st.floats(0, 7), st.floats(0, 7))
def test_center_field_radially_non_increasing(angle, r1, r2):
    f = make_field("center", 10.0)
    a, b = sorted([r1, r2])
    va = float(f.value(a * math.cos(angle), a * math.sin(angle)))
    vb = float(f.value(b * math.cos(angle), b * math.sin(angle)))
    assert vb <= va + 1e-9


def test_field_csv_grid(tmp_path):
    write_field_csv(make_field("center", 10.0), tmp_path / "f.csv", n=11)
    rows = list(csv.reader(open(tmp_path / "f.csv")))
    assert len(rows) == 12 and len(rows[0]) == 12
    assert float(rows[6][6]) == 255.0


# ----------------------------------------------------------------- spawning

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_spawn_geometry(seed):
    cfg = replace(SMALL, swarm_size=20, group_ratio=(1, 1))
    pos, heading, groups, centre = spawn_swarm(cfg, np.random.default_rng(seed))
    assert abs(np.hypot(*centre) - cfg.spawn_radius) < 1e-9
    assert np.all(np.hypot(*(pos - centre).T) <= 1.5 * math.sqrt(2) + 1e-12)
    assert np.all(np.abs(pos - centre) <= 1.5)
    d = np.hypot(*(pos[:, None] - pos[None]).transpose(2, 0, 1))
    assert np.all(d[np.triu_indices(20, 1)] >= 2 * cfg.robot_radius)
    assert np.all((heading >= -math.pi) & (heading <= math.pi))
    assert np.bincount(groups).tolist() == [10, 10]


def test_spawn_box_outside_arena():
    with pytest.raises(SpawnError):
        spawn_swarm(replace(SMALL, spawn_radius=4.0), np.random.default_rng(0))


# ------------------------------------------------------------------ sensing

def test_lone_robot_senses_defaults():
    w = world_of([[1.0, 0.0]], [0.3])
    light = 255.0 * (1 - 1.0 / 5.0)
    assert np.allclose(sense(w, 0), [1, 0, 1, 0, 1, 0, 1, 0, 2 * light / 255 - 1], atol=1e-12)


def test_neighbour_dead_ahead():
    w = world_of([[0.0, 0.0], [1.0, 0.0]], [0.0, 0.0])
    s = sense(w, 0)
    assert np.allclose(s[:2], [0.0, 0.0], atol=1e-12)
    assert np.allclose(s[2:8], [1, 0, 1, 0, 1, 0])
    # robot 1 sees robot 0 behind it
    assert np.allclose(sense(w, 1)[2:4], [0.0, 0.0], atol=1e-12)


def test_quadrants_and_relative_heading():
    w = world_of([[0.0, 0.0], [0.0, 1.5], [0.0, -0.5]], [0.0, math.pi / 2, -math.pi / 2])
    s = sense(w, 0)
    assert np.allclose(s[4:6], [0.5, 0.5])    # left, heading +pi/2
    assert np.allclose(s[6:8], [-0.5, -0.5])  # right, heading -pi/2
    assert perceived_neighbors(w)[0].tolist() == [-1, -1, 1, 2]


def test_neighbour_out_of_range_is_absent():
    w = world_of([[0.0, 0.0], [2.5, 0.0]], [0.0, 1.0])
    assert np.allclose(sense(w, 0)[:8], [1, 0, 1, 0, 1, 0, 1, 0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sensor_inputs_in_unit_box(seed):
    rng = np.random.default_rng(seed)
    pos, heading, _, _ = spawn_swarm(SMALL, rng)
    w = world_of(pos, heading)
    for i in range(len(pos)):
        s = sense(w, i)
        assert np.all(s >= -1 - 1e-12) and np.all(s <= 1 + 1e-12)


# ----------------------------------------------------------------- kinematics

def test_straight_drive():
    w = world_of([[0.0, 0.0]], [math.pi / 3])
    for _ in range(20):
        w = step_world(w, 0.05, 0.14, 0.14)
    assert np.allclose(w.pos[0], 0.14 * np.array([math.cos(math.pi / 3), math.sin(math.pi / 3)]), atol=1e-12)


def test_turn_in_place():
    w = world_of([[0.5, -0.5]], [0.0])
    w = step_world(w, 0.05, -0.1, 0.1)
    assert np.allclose(w.pos[0], [0.5, -0.5], atol=1e-15)
    assert math.isclose(w.heading[0], 0.2 / 0.094 * 0.05, rel_tol=1e-12)


def test_collision_separates_and_counts_once():
    w = world_of([[0.0, 0.0], [0.1, 0.0]], [0.0, math.pi])
    w = step_world(w, 0.05, 0.0, 0.0)
    assert np.hypot(*(w.pos[1] - w.pos[0])) >= 2 * SMALL.robot_radius
    assert w.collisions == 1


def test_walls_clamp():
    w = world_of([[4.8, 0.0]], [0.0])
    for _ in range(100):
        w = step_world(w, 0.05, 0.14, 0.14)
    assert w.pos[0, 0] == 5.0 - SMALL.robot_radius


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_separation_never_increases_overlap(seed):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(-0.4, 0.4, (6, 2))
    w = world_of(pos, rng.uniform(-3, 3, 6))

    def worst(p):
        d = np.hypot(*(p[:, None] - p[None]).transpose(2, 0, 1))[np.triu_indices(6, 1)]
        return max(0.0, np.max(2 * SMALL.robot_radius - d))

    w2 = step_world(w, 0.05, 0.0, 0.0)
    assert worst(w2.pos) <= worst(w.pos) + 1e-12


def test_drive_trajectory_closed_forms():
    traj = drive_trajectory(np.full(10, 0.1), np.full(10, 0.1), 0.1, 0.094)
    assert np.allclose(traj[-1, 1:3], [0.1, 0.0])
    traj = drive_trajectory(np.full(10, -0.1), np.full(10, 0.1), 0.1, 0.094)
    assert np.allclose(traj[-1, 1:3], [0.0, 0.0], atol=1e-15)
    assert math.isclose(traj[-1, 3], 0.2 / 0.094, rel_tol=1e-12)


# ---------------------------------------------------------------- trials

def test_zero_genotype_is_stationary():
    cfg = replace(SMALL, forward_only=False)
    res = [reservoir_init(np.random.default_rng(0), 2.0)]
    log = run_swarm_trial(np.zeros(18), res, None, cfg, make_field("center", 10.0), seed=5)
    assert np.all(log.positions == log.positions[0])
    assert math.isclose(log.fitness, log.light[0].mean() / 255.0, rel_tol=1e-15)


def test_trial_log_shapes_and_bounds():
    res = [reservoir_init(np.random.default_rng(0), 2.0)]
    x = np.random.default_rng(1).uniform(-10, 10, 18)
    log = run_swarm_trial(x, res, None, SMALL, make_field("center", 10.0), seed=2)
    assert log.light.shape == (200, 14) and log.order.shape == (200,)
    assert 0.0 <= log.fitness <= 1.0
    assert np.all((log.order >= 0) & (log.order <= 1 + 1e-12))
    assert np.all(np.diff(log.collisions_total) >= 0)
    step = np.hypot(*np.diff(log.positions, axis=0).transpose(2, 0, 1))
    assert np.max(step) <= 0.14 * 0.1 + 1e-9


def test_trial_is_deterministic():
    res = [reservoir_init(np.random.default_rng(0), 2.0)]
    x = np.random.default_rng(1).uniform(-10, 10, 18)
    a = run_swarm_trial(x, res, None, SMALL, make_field("center", 10.0), seed=3)
    b = run_swarm_trial(x, res, None, SMALL, make_field("center", 10.0), seed=3)
    assert np.array_equal(a.positions, b.positions) and a.fitness == b.fitness


def test_single_robot_at_peak_scores_one():
    cfg = replace(SMALL, swarm_size=1, spawn_radius=0.0, box_side=1e-9, forward_only=False)
    res = [reservoir_init(np.random.default_rng(0), 2.0)]
    log = run_swarm_trial(np.zeros(18), res, None, cfg, make_field("center", 10.0), seed=0)
    assert math.isclose(log.fitness, 1.0, abs_tol=1e-9)


def test_heterogeneous_groups_and_regulation():
    cfg = replace(SMALL, swarm_size=20, group_ratio=(1, 1))
    rng = np.random.default_rng(0)
    res = [reservoir_init(rng, 1.0), reservoir_init(rng, 1.0)]
    x = rng.uniform(-5, 5, 36)
    fixed = run_swarm_trial(x, res, None, cfg, make_field("center", 10.0), seed=1)
    assert np.all(fixed.groups.sum(axis=1) == 10)
    reg = run_swarm_trial(x, res, RegulatoryPolicy(), cfg, make_field("center", 10.0), seed=1)
    # labels only change on 5 s boundaries
    changes = np.flatnonzero(np.any(np.diff(reg.groups, axis=0) != 0, axis=1)) + 1
    assert np.all(changes % 50 == 0)


def test_trial_csv(tmp_path):
    cfg = replace(SMALL, swarm_size=3, duration=1.0)
    res = [reservoir_init(np.random.default_rng(0), 2.0)]
    log = run_swarm_trial(np.ones(18), res, None, cfg, make_field("center", 10.0), seed=0)
    log.write_csv(tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["t", "robot_id", "x", "y", "heading", "light", "group", "collisions"]
    assert len(rows) == 1 + 10 * 3


# ------------------------------------------------------------ CPG body

def test_cpg_body_zero_state_is_stationary():
    net = build_cpg_network(spider(), np.random.default_rng(0))
    traj = cpg_drive_trial(net, WorldConfig(duration=10.0), seed=0)
    assert np.all(traj[:, 1:3] == 0.0)


def test_cpg_body_straight_and_spin():
    c = 0.4
    straight = set_initial_state(CpgNetwork(2, [], [0.0, 0.0], []), [c, c, 0.0, 0.0])
    traj = cpg_drive_trial(straight, WorldConfig(duration=60.0), seed=0)
    speed = np.hypot(*(traj[-1, 1:3] - traj[0, 1:3])) / 60.0
    assert math.isclose(speed, 0.14 * math.tanh(c), rel_tol=1e-12)
    spin = set_initial_state(CpgNetwork(2, [], [0.0, 0.0], []), [c, -c, 0.0, 0.0])
    traj = cpg_drive_trial(spin, WorldConfig(duration=60.0), seed=0)
    assert gait_fitness(traj, 0.0, 60.0) < 1e-9


def test_cpg_body_needs_two_joints():
    with pytest.raises(ValueError):
        cpg_drive_trial(CpgNetwork(1, [], [1.0], [], [1.0, 0.0]), WorldConfig(duration=1.0), 0)
