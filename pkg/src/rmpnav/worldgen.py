"""Seeded procedural indoor worlds and start/goal sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import planner as planning
from .geometry import point_segment_distances, segments_intersect
from .vehicle import VehicleState
from .world import EpisodeSetup, Environment, Scenario, collision


@dataclass(frozen=True)
class WorldGenParams:
    width: tuple[float, float] = (8.0, 11.0)
    height: tuple[float, float] = (6.0, 8.0)
    partitions: tuple[int, int] = (1, 2)
    door_width: tuple[float, float] = (0.65, 0.75)
    obstacles: tuple[int, int] = (3, 7)
    obstacle_size: tuple[float, float] = (0.3, 1.0)
    min_gap: float = 0.6
    door_clearance: float = 1.0
    min_goal_distance: float = 2.5

    def __post_init__(self):
        for name in ("width", "height", "door_width", "obstacle_size"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must be an increasing positive range")
        if self.min_gap <= 0:
            raise ValueError("min_gap must be positive")


def _uniform(rng, r):
    return float(rng.uniform(r[0], r[1]))


def _wall_with_door(a: float, b: float, fixed: float, vertical: bool, door_at: float, door_w: float):
    """Wall from a to b along one axis at ``fixed`` with a gap centred on ``door_at``."""
    lo, hi = door_at - door_w / 2, door_at + door_w / 2
    out = []
    for s, e in ((a, lo), (hi, b)):
        if e - s > 1e-9:
            out.append([[fixed, s], [fixed, e]] if vertical else [[s, fixed], [e, fixed]])
    return out


def generate_world(seed: int, params: WorldGenParams | None = None) -> Environment:
    p = params or WorldGenParams()
    rng = np.random.default_rng(seed)
    w, h = _uniform(rng, p.width), _uniform(rng, p.height)
    walls = [[[0, 0], [w, 0]], [[w, 0], [w, h]], [[w, h], [0, h]], [[0, h], [0, 0]]]
    doors = []

    n_part = int(rng.integers(p.partitions[0], p.partitions[1] + 1))
    xs = [w * (k + 1) / (n_part + 1) + rng.uniform(-0.4, 0.4) for k in range(n_part)]
    for x in xs:
        dw = _uniform(rng, p.door_width)
        dy = float(rng.uniform(0.8 + dw / 2, h - 0.8 - dw / 2))
        walls += _wall_with_door(0.0, h, x, True, dy, dw)
        doors.append((x, dy))

    # one room gets a horizontal half-partition forming a corridor with a doorway
    if rng.random() < 0.6:
        edges = [0.0] + xs + [w]
        k = int(rng.integers(0, len(edges) - 1))
        x0, x1 = edges[k], edges[k + 1]
        y = float(rng.uniform(0.35 * h, 0.65 * h))
        dw = _uniform(rng, p.door_width)
        if x1 - x0 > 2.0 + dw:
            dx = float(rng.uniform(x0 + 0.8 + dw / 2, x1 - 0.8 - dw / 2))
            walls += _wall_with_door(x0, x1, y, False, dx, dw)
            doors.append((dx, y))

    segs = np.array(walls, dtype=float)
    n_obs = int(rng.integers(p.obstacles[0], p.obstacles[1] + 1))
    placed = 0
    for _ in range(200 * max(n_obs, 1)):
        if placed >= n_obs:
            break
        sx, sy = _uniform(rng, p.obstacle_size), _uniform(rng, p.obstacle_size)
        cx, cy = rng.uniform(0.5, w - 0.5), rng.uniform(0.5, h - 0.5)
        ang = rng.uniform(0, math.pi)
        c, s = math.cos(ang), math.sin(ang)
        local = np.array([[sx, sy], [-sx, sy], [-sx, -sy], [sx, -sy]]) / 2
        poly = local @ np.array([[c, s], [-s, c]]) + [cx, cy]
        box = np.array([[poly[i], poly[(i + 1) % 4]] for i in range(4)])
        if poly[:, 0].min() < 0 or poly[:, 0].max() > w or poly[:, 1].min() < 0 or poly[:, 1].max() > h:
            continue
        if doors and min(math.hypot(cx - dx, cy - dy) for dx, dy in doors) < p.door_clearance + max(sx, sy) / 2:
            continue
        if _too_close(box, segs, p.min_gap):
            continue
        segs = np.concatenate([segs, box])
        placed += 1
    return Environment(segs, (0.0, 0.0, w, h))


def _too_close(box: np.ndarray, segs: np.ndarray, gap: float) -> bool:
    if np.any(segments_intersect(box[:, None, 0], box[:, None, 1], segs[None, :, 0], segs[None, :, 1])):
        return True
    d1 = point_segment_distances(box[:, 0], segs).min()
    d2 = point_segment_distances(segs.reshape(-1, 2), box).min()
    return min(d1, d2) < gap


def sample_scenario(env: Environment, setup: EpisodeSetup, rng: np.random.Generator,
                    min_goal_distance: float = 2.5, start_clearance: float = 1.0, attempts: int = 200,
                    seed: int = 0, name: str = "") -> Scenario | None:
    """Uniform collision-free start (random heading, at rest) and a reachable goal.

    The start reference point keeps ``start_clearance`` from every wall.
    """
    grid = setup.grid_for(env)
    free = np.argwhere(~grid.cells)
    if len(free) < 2:
        return None
    for _ in range(attempts):
        si = tuple(free[rng.integers(len(free))])
        gi = tuple(free[rng.integers(len(free))])
        start_xy, goal_xy = grid.cell_to_world(si), grid.cell_to_world(gi)
        if np.linalg.norm(goal_xy - start_xy) < min_goal_distance:
            continue
        if point_segment_distances(start_xy[None], env.segments).min() < start_clearance:
            continue
        start = VehicleState(float(start_xy[0]), float(start_xy[1]), float(rng.uniform(-math.pi, math.pi)))
        if collision(env, start, setup.geometry):
            continue
        if planning.astar(grid, si, gi) is None:
            continue
        return Scenario(env, start, goal_xy, seed, name)
    return None
