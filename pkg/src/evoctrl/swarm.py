"""Deterministic 2D kinematic swarm world.

Robots are differential-drive disks moving on exact unicycle arcs. Each
robot senses the nearest neighbour in four 90 degree quadrants of its own
frame (front, back, left, right) plus the local scalar-field value. Overlaps
are resolved by symmetric separation along the contact normal and counted
once per pair per control step.

The per-step work lives in numba kernels; the Python functions below wrap
them for single operations and whole trials.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numba
import numpy as np

from .controllers import ReservoirNet, RegulatoryPolicy, decode_swarm_genotype
from .cpg import CpgNetwork, rollout
from .numerics import rng_stream

G_MAX = 255.0
FIELD_KINDS = ("center", "bimodal", "linear", "banana")
# bimodal: bumps at (-side/4, 0) peak 255 and (+side/4, 0) peak 200
BIMODAL_PEAKS = (255.0, 200.0)
# banana: 255 * exp(-rosenbrock(p / (side * BANANA_SCALE)) / BANANA_KAPPA)
BANANA_SCALE = 0.2
BANANA_KAPPA = 10.0


class SpawnError(ValueError):
    pass


# --------------------------------------------------------------------- fields

@numba.njit(cache=True)
def _field_value(kind, side, cell, x, y):
    if cell > 0.0:
        x = (math.floor(x / cell) + 0.5) * cell
        y = (math.floor(y / cell) + 0.5) * cell
    half = 0.5 * side
    if kind == 0:
        g = G_MAX * (1.0 - math.hypot(x, y) / half)
    elif kind == 1:
        a = BIMODAL_PEAKS[0] * (1.0 - math.hypot(x + 0.5 * half, y) / half)
        b = BIMODAL_PEAKS[1] * (1.0 - math.hypot(x - 0.5 * half, y) / half)
        g = max(a, b)
    elif kind == 2:
        g = G_MAX * (x / side + 0.5)
    else:
        s = side * BANANA_SCALE
        u = x / s
        v = y / s
        r = (1.0 - u) ** 2 + 100.0 * (v - u * u) ** 2
        g = G_MAX * math.exp(-r / BANANA_KAPPA)
    return min(max(g, 0.0), G_MAX)


@dataclass(frozen=True)
class ScalarField:
    """Scalar map on [-side/2, side/2]^2 with values in [0, 255].

    ``cell_size`` > 0 samples the field at grid-cell centres instead of
    continuously.
    """

    kind: str
    arena_side: float
    cell_size: float = 0.0

    @property
    def code(self) -> int:
        return FIELD_KINDS.index(self.kind)

    def value(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        out = np.empty(x.shape)
        for idx in np.ndindex(x.shape):
            out[idx] = _field_value(self.code, self.arena_side, self.cell_size, x[idx], y[idx])
        return out

    def grid(self, n: int = 101) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        xs = np.linspace(-self.arena_side / 2, self.arena_side / 2, n)
        X, Y = np.meshgrid(xs, xs)
        return xs, xs, self.value(X, Y)


def make_field(kind: str, arena_side: float, cell_size: float = 0.0) -> ScalarField:
    if kind not in FIELD_KINDS:
        raise ValueError(f"unknown field kind {kind!r}; expected one of {FIELD_KINDS}")
    if not arena_side > 0:
        raise ValueError("arena_side must be positive")
    return ScalarField(kind, float(arena_side), float(cell_size))


def write_field_csv(field: ScalarField, path, n: int = 101) -> None:
    xs, ys, values = field.grid(n)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y\\x", *xs.tolist()])
        for y, row in zip(ys.tolist(), values):
            w.writerow([y, *row.tolist()])


# --------------------------------------------------------------------- config

@dataclass(frozen=True)
class WorldConfig:
    arena_side: float = 30.0
    swarm_size: int = 20
    spawn_radius: float = 12.0
    dt: float = 0.05
    control_period: float = 0.1
    sensor_range: float = 2.0
    empty_distance: float = 2.0
    wheel_speed_max: float = 0.14
    robot_radius: float = 0.085
    axle_width: float = 0.094
    duration: float = 600.0
    box_side: float = 3.0
    group_ratio: tuple[int, int] = (1, 1)
    wall_side: float = 0.0          # 0 -> walls at the arena edge
    forward_only: bool = False      # speed output mapped to [0, 1]
    perception: str = "quadrant"    # neighbours used by the order metric
    field_cell: float = 0.0

    def __post_init__(self):
        for name in ("arena_side", "spawn_radius", "dt", "control_period", "sensor_range",
                     "empty_distance", "wheel_speed_max", "robot_radius", "axle_width",
                     "duration", "box_side"):
            if not getattr(self, name) > 0 and not (name == "spawn_radius" and getattr(self, name) == 0):
                raise ValueError(f"{name} must be positive")
        if self.swarm_size < 1:
            raise ValueError("swarm_size must be >= 1")
        if self.perception not in ("quadrant", "radius"):
            raise ValueError("perception must be 'quadrant' or 'radius'")
        if len(self.group_ratio) != 2 or min(self.group_ratio) < 0 or sum(self.group_ratio) == 0:
            raise ValueError("group_ratio must be two non-negative ints, not both zero")
        sub = self.control_period / self.dt
        if abs(sub - round(sub)) > 1e-9:
            raise ValueError("control_period must be a multiple of dt")
        steps = self.duration / self.control_period
        if abs(steps - round(steps)) > 1e-6:
            raise ValueError("duration must be a multiple of control_period")

    @property
    def substeps(self) -> int:
        return int(round(self.control_period / self.dt))

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.control_period))

    @property
    def walls(self) -> float:
        return self.wall_side if self.wall_side > 0 else self.arena_side


def group_counts(n: int, ratio: tuple[int, int]) -> tuple[int, int]:
    n0 = int(round(n * ratio[0] / (ratio[0] + ratio[1])))
    return n0, n - n0


# ---------------------------------------------------------------------- world

@dataclass
class World:
    cfg: WorldConfig
    field: ScalarField
    pos: np.ndarray        # (N, 2)
    heading: np.ndarray    # (N,)
    groups: np.ndarray     # (N,) int
    collisions: int = 0

    def light(self) -> np.ndarray:
        return self.field.value(self.pos[:, 0], self.pos[:, 1])


def spawn_swarm(cfg: WorldConfig, rng: np.random.Generator, max_tries: int = 10000):
    """Random box centre on the spawn circle, members uniform in the box.

    Returns (positions, headings, groups, box_centre). Overlapping
    placements are resampled.
    """
    half_box = cfg.box_side / 2
    if cfg.spawn_radius + half_box > cfg.walls / 2 - cfg.robot_radius + 1e-12:
        raise SpawnError("spawn box can leave the arena; enlarge wall_side or shrink spawn_radius")
    phi = rng.uniform(0.0, 2 * math.pi)
    centre = cfg.spawn_radius * np.array([math.cos(phi), math.sin(phi)])
    pos = np.empty((cfg.swarm_size, 2))
    min_d2 = (2 * cfg.robot_radius) ** 2
    for i in range(cfg.swarm_size):
        for _ in range(max_tries):
            p = centre + rng.uniform(-half_box, half_box, size=2)
            if i == 0 or np.min(np.sum((pos[:i] - p) ** 2, axis=1)) >= min_d2:
                pos[i] = p
                break
        else:
            raise SpawnError("could not place robots without overlap; enlarge box_side")
    heading = rng.uniform(-math.pi, math.pi, size=cfg.swarm_size)
    n0, n1 = group_counts(cfg.swarm_size, cfg.group_ratio)
    groups = np.array([0] * n0 + [1] * n1, dtype=np.int64)
    return pos, heading, groups, centre


@numba.njit(cache=True)
def _wrap(a):
    r = a - 2.0 * math.pi * math.floor((a + math.pi) / (2.0 * math.pi))
    if r <= -math.pi:
        r = math.pi
    return r


@numba.njit(cache=True)
def _sense_all(pos, heading, kind, side, cell, sensor_range, empty_distance, inputs, nbr):
    """Fill inputs (N, 9) and quadrant-nearest neighbour ids nbr (N, 4), -1 if empty."""
    n = pos.shape[0]
    best = np.empty(4)
    for i in range(n):
        for q in range(4):
            best[q] = np.inf
            nbr[i, q] = -1
        for j in range(n):
            if j == i:
                continue
            dx = pos[j, 0] - pos[i, 0]
            dy = pos[j, 1] - pos[i, 1]
            d = math.hypot(dx, dy)
            if d > sensor_range:
                continue
            alpha = _wrap(math.atan2(dy, dx) - heading[i])
            if -0.25 * math.pi < alpha <= 0.25 * math.pi:
                q = 0  # front
            elif 0.25 * math.pi < alpha <= 0.75 * math.pi:
                q = 2  # left
            elif -0.75 * math.pi < alpha <= -0.25 * math.pi:
                q = 3  # right
            else:
                q = 1  # back
            if d < best[q]:
                best[q] = d
                nbr[i, q] = j
        for q in range(4):
            j = nbr[i, q]
            if j < 0:
                d = empty_distance
                theta = 0.0
            else:
                d = best[q]
                theta = _wrap(heading[j] - heading[i])
            inputs[i, 2 * q] = d - 1.0
            inputs[i, 2 * q + 1] = theta / math.pi
        g = _field_value(kind, side, cell, pos[i, 0], pos[i, 1])
        inputs[i, 8] = 2.0 * g / G_MAX - 1.0


@numba.njit(cache=True)
def _substep(pos, heading, wl, wr, dt, axle, radius, half_wall, touched):
    n = pos.shape[0]
    for i in range(n):
        u = 0.5 * (wl[i] + wr[i])
        om = (wr[i] - wl[i]) / axle
        th = heading[i]
        if abs(om) > 1e-12:
            th2 = th + om * dt
            pos[i, 0] += u / om * (math.sin(th2) - math.sin(th))
            pos[i, 1] -= u / om * (math.cos(th2) - math.cos(th))
        else:
            pos[i, 0] += u * dt * math.cos(th)
            pos[i, 1] += u * dt * math.sin(th)
        heading[i] = _wrap(th + om * dt)
    two_r = 2.0 * radius
    for i in range(n):
        for j in range(i + 1, n):
            dx = pos[j, 0] - pos[i, 0]
            dy = pos[j, 1] - pos[i, 1]
            d = math.hypot(dx, dy)
            if d < two_r:
                if d > 1e-12:
                    nx = dx / d
                    ny = dy / d
                else:
                    nx = 1.0
                    ny = 0.0
                push = 0.5 * (two_r - d) + 1e-12
                pos[i, 0] -= push * nx
                pos[i, 1] -= push * ny
                pos[j, 0] += push * nx
                pos[j, 1] += push * ny
                touched[i, j] = True
    lim = half_wall - radius
    for i in range(n):
        pos[i, 0] = min(max(pos[i, 0], -lim), lim)
        pos[i, 1] = min(max(pos[i, 1], -lim), lim)


@numba.njit(cache=True)
def _order_value(heading, nbr, pos, use_radius, sensor_range):
    n = heading.shape[0]
    total = 0.0
    for i in range(n):
        cx = math.cos(heading[i])
        cy = math.sin(heading[i])
        count = 1
        if use_radius:
            for j in range(n):
                if j != i and math.hypot(pos[j, 0] - pos[i, 0], pos[j, 1] - pos[i, 1]) <= sensor_range:
                    cx += math.cos(heading[j])
                    cy += math.sin(heading[j])
                    count += 1
        else:
            for q in range(4):
                j = nbr[i, q]
                if j >= 0:
                    cx += math.cos(heading[j])
                    cy += math.sin(heading[j])
                    count += 1
        total += math.hypot(cx, cy) / count
    return total / n


@numba.njit(cache=True)
def _wheel_speeds(inputs, groups, w_h1, w_h2, w_out, vmax, forward_only, wl, wr):
    n = inputs.shape[0]
    h1 = np.empty(9)
    h2 = np.empty(9)
    for i in range(n):
        g = groups[i]
        for a in range(9):
            acc = 0.0
            for b in range(9):
                acc += w_h1[g, a, b] * inputs[i, b]
            h1[a] = acc if acc > 0.0 else 0.0
        for a in range(9):
            acc = 0.0
            for b in range(9):
                acc += w_h2[g, a, b] * h1[b]
            h2[a] = acc if acc > 0.0 else 0.0
        v = 0.0
        w = 0.0
        for b in range(9):
            v += w_out[g, 0, b] * h2[b]
            w += w_out[g, 1, b] * h2[b]
        v = math.tanh(v)
        w = math.tanh(w)
        if forward_only:
            v = 0.5 * (v + 1.0)
        # u = v * vmax, turn rate = w * 2 * vmax / axle
        wl[i] = min(max(vmax * (v - w), -vmax), vmax)
        wr[i] = min(max(vmax * (v + w), -vmax), vmax)


@numba.njit(cache=True)
def _simulate(pos, heading, groups, w_h1, w_h2, w_out, kind, side, cell, sensor_range,
              empty_distance, vmax, axle, radius, half_wall, dt, substeps, n_steps,
              forward_only, use_radius, reg_every, reg_thresholds, reg_probs, reg_uniforms,
              log_pos, log_heading, log_light, log_group, log_order, log_robot_coll):
    n = pos.shape[0]
    inputs = np.empty((n, 9))
    nbr = np.empty((n, 4), dtype=np.int64)
    wl = np.empty(n)
    wr = np.empty(n)
    touched = np.zeros((n, n), dtype=np.bool_)
    for step in range(n_steps):
        if reg_every > 0 and step % reg_every == 0:
            row = step // reg_every
            for i in range(n):
                g = _field_value(kind, side, cell, pos[i, 0], pos[i, 1])
                p = reg_probs[reg_probs.shape[0] - 1]
                for b in range(reg_thresholds.shape[0]):
                    if g > reg_thresholds[b]:
                        p = reg_probs[b]
                        break
                groups[i] = 0 if reg_uniforms[row, i] < p else 1
        _sense_all(pos, heading, kind, side, cell, sensor_range, empty_distance, inputs, nbr)
        for i in range(n):
            log_pos[step, i, 0] = pos[i, 0]
            log_pos[step, i, 1] = pos[i, 1]
            log_heading[step, i] = heading[i]
            log_light[step, i] = _field_value(kind, side, cell, pos[i, 0], pos[i, 1])
            log_group[step, i] = groups[i]
        log_order[step] = _order_value(heading, nbr, pos, use_radius, sensor_range)
        _wheel_speeds(inputs, groups, w_h1, w_h2, w_out, vmax, forward_only, wl, wr)
        touched[:, :] = False
        for _ in range(substeps):
            _substep(pos, heading, wl, wr, dt, axle, radius, half_wall, touched)
        for i in range(n):
            for j in range(i + 1, n):
                if touched[i, j]:
                    log_robot_coll[step, i] += 1
                    log_robot_coll[step, j] += 1


# ------------------------------------------------------------ single-step API

def sense(world: World, robot_index: int) -> np.ndarray:
    """Normalised 9-input vector of one robot."""
    n = world.pos.shape[0]
    if not 0 <= robot_index < n:
        raise IndexError(robot_index)
    inputs = np.empty((n, 9))
    nbr = np.empty((n, 4), dtype=np.int64)
    f = world.field
    _sense_all(world.pos, world.heading, f.code, f.arena_side, f.cell_size,
               world.cfg.sensor_range, world.cfg.empty_distance, inputs, nbr)
    return inputs[robot_index]


def perceived_neighbors(world: World) -> np.ndarray:
    n = world.pos.shape[0]
    inputs = np.empty((n, 9))
    nbr = np.empty((n, 4), dtype=np.int64)
    f = world.field
    _sense_all(world.pos, world.heading, f.code, f.arena_side, f.cell_size,
               world.cfg.sensor_range, world.cfg.empty_distance, inputs, nbr)
    return nbr


def step_world(world: World, dt: float, wheel_left, wheel_right) -> World:
    """Advance every robot by ``dt`` with constant wheel speeds.

    Colliding pairs in this call add one each to ``world.collisions``.
    """
    cfg = world.cfg
    pos = world.pos.copy()
    heading = world.heading.copy()
    wl = np.clip(np.broadcast_to(np.asarray(wheel_left, dtype=float), heading.shape),
                 -cfg.wheel_speed_max, cfg.wheel_speed_max).copy()
    wr = np.clip(np.broadcast_to(np.asarray(wheel_right, dtype=float), heading.shape),
                 -cfg.wheel_speed_max, cfg.wheel_speed_max).copy()
    touched = np.zeros((len(heading), len(heading)), dtype=np.bool_)
    _substep(pos, heading, wl, wr, dt, cfg.axle_width, cfg.robot_radius, cfg.walls / 2, touched)
    return replace(world, pos=pos, heading=heading, collisions=world.collisions + int(touched.sum()))


# ------------------------------------------------------------------ trial API

@dataclass
class TrialLog:
    """Per-control-step records of one swarm trial."""

    control_period: float
    positions: np.ndarray         # (T, N, 2)
    headings: np.ndarray          # (T, N)
    light: np.ndarray             # (T, N)
    groups: np.ndarray            # (T, N)
    order: np.ndarray             # (T,)
    robot_collisions: np.ndarray  # (T, N) contacts per robot in each step

    @property
    def times(self) -> np.ndarray:
        return self.control_period * np.arange(self.light.shape[0])

    @property
    def collisions(self) -> np.ndarray:
        """Colliding pairs per control step."""
        return self.robot_collisions.sum(axis=1) // 2

    @property
    def collisions_total(self) -> np.ndarray:
        return np.cumsum(self.collisions)

    @property
    def fitness(self) -> float:
        return float(np.mean(self.light) / G_MAX)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "robot_id", "x", "y", "heading", "light", "group", "collisions"])
            for s, t in enumerate(self.times.tolist()):
                for i in range(self.light.shape[1]):
                    w.writerow([t, i, float(self.positions[s, i, 0]), float(self.positions[s, i, 1]),
                                float(self.headings[s, i]), float(self.light[s, i]),
                                int(self.groups[s, i]), int(self.robot_collisions[s, i])])


def _stack(reservoirs: list[ReservoirNet]):
    w_h1 = np.ascontiguousarray(np.stack([r.w_h1 for r in reservoirs]))
    w_h2 = np.ascontiguousarray(np.stack([r.w_h2 for r in reservoirs]))
    w_out = np.ascontiguousarray(np.stack([r.w_out for r in reservoirs]))
    return w_h1, w_h2, w_out


def run_swarm_trial(genotype, reservoirs: list[ReservoirNet], policy: RegulatoryPolicy | None,
                    cfg: WorldConfig, field: ScalarField, seed: int) -> TrialLog:
    """Simulate one swarm for ``cfg.duration`` seconds.

    The genotype fills the readout of each reservoir (18 weights each).
    With one reservoir every robot uses it; with two, robots are labelled by
    ``cfg.group_ratio`` and, if ``policy`` is given, re-labelled every
    ``policy.update_period`` seconds from their local light.
    """
    nets = decode_swarm_genotype(genotype, reservoirs)
    if len(nets) == 1 and (cfg.group_ratio[1] > 0 or policy is not None):
        cfg = replace(cfg, group_ratio=(1, 0))
        policy = None
    pos, heading, groups, _ = spawn_swarm(cfg, rng_stream(seed, "spawn"))
    n = cfg.swarm_size
    T = cfg.n_steps
    if policy is not None:
        every = policy.update_period / cfg.control_period
        if abs(every - round(every)) > 1e-9:
            raise ValueError("update_period must be a multiple of control_period")
        reg_every = int(round(every))
        uniforms = rng_stream(seed, "regulatory").random(((T - 1) // reg_every + 1, n))
        thresholds = np.array(policy.thresholds, dtype=float)
        probs = np.array(policy.probabilities, dtype=float)
    else:
        reg_every = 0
        uniforms = np.zeros((1, n))
        thresholds = np.zeros(1)
        probs = np.ones(2)
    w_h1, w_h2, w_out = _stack(nets)
    log = TrialLog(cfg.control_period, np.empty((T, n, 2)), np.empty((T, n)), np.empty((T, n)),
                   np.empty((T, n), dtype=np.int64), np.empty(T), np.zeros((T, n), dtype=np.int64))
    _simulate(pos, heading, groups, w_h1, w_h2, w_out, field.code, field.arena_side, field.cell_size,
              cfg.sensor_range, cfg.empty_distance, cfg.wheel_speed_max, cfg.axle_width,
              cfg.robot_radius, cfg.walls / 2, cfg.dt, cfg.substeps, T, cfg.forward_only,
              cfg.perception == "radius", reg_every, thresholds, probs, uniforms,
              log.positions, log.headings, log.light, log.groups, log.order, log.robot_collisions)
    return log


# ------------------------------------------------------- CPG surrogate body

def drive_trajectory(wheel_left, wheel_right, control_period: float, axle_width: float,
                     start=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Exact-arc poses for wheel speeds held constant over each period.

    Returns an (n + 1, 4) array of (t, x, y, heading); heading is unwrapped
    (continuous) so the planar yaw can be read directly.
    """
    wl = np.asarray(wheel_left, dtype=float)
    wr = np.asarray(wheel_right, dtype=float)
    u = 0.5 * (wl + wr)
    om = (wr - wl) / axle_width
    th = start[2] + np.concatenate([[0.0], np.cumsum(om * control_period)])
    th0, th1 = th[:-1], th[1:]
    turning = np.abs(om) > 1e-12
    safe = np.where(turning, om, 1.0)
    dx = np.where(turning, u / safe * (np.sin(th1) - np.sin(th0)), u * control_period * np.cos(th0))
    dy = np.where(turning, -u / safe * (np.cos(th1) - np.cos(th0)), u * control_period * np.sin(th0))
    x = start[0] + np.concatenate([[0.0], np.cumsum(dx)])
    y = start[1] + np.concatenate([[0.0], np.cumsum(dy)])
    t = control_period * np.arange(len(th))
    return np.column_stack([t, x, y, th])


def cpg_drive_trial(net: CpgNetwork, cfg: WorldConfig, seed: int, return_states: bool = False):
    """Drive one differential-drive robot with the first two CPG outputs.

    Wheel speeds are wheel_speed_max * tanh(x_1), wheel_speed_max * tanh(x_2),
    updated every control period. The robot moves on an open plane from the
    origin with a seeded random heading. ``net`` is not modified.
    """
    if net.k < 2:
        raise ValueError("surrogate body needs k >= 2 joints")
    ro = rollout(replace(net, state=net.state.copy()), cfg.duration, cfg.dt, cfg.control_period)
    cmd = ro.command_outputs
    heading0 = rng_stream(seed, "body").uniform(-math.pi, math.pi)
    traj = drive_trajectory(cfg.wheel_speed_max * cmd[:, 0], cfg.wheel_speed_max * cmd[:, 1],
                            cfg.control_period, cfg.axle_width, (0.0, 0.0, heading0))
    if return_states:
        return traj, ro.all_states
    return traj


@dataclass(frozen=True)
class SurrogateBody:
    """Callable body trial used by the skill learners."""

    cfg: WorldConfig = WorldConfig(duration=60.0)
    seed: int = 0

    def __call__(self, net: CpgNetwork, duration: float):
        return cpg_drive_trial(net, replace(self.cfg, duration=duration), self.seed, return_states=True)
