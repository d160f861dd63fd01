"""Segment worlds, the 240 degree laser scanner, collision checks and the episode loop."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import planner as planning
from .geometry import point_segment_distances, ray_distances, segments_intersect
from .vehicle import Command, VehicleGeometry, VehicleParams, VehicleState, step, world_points


class ScenarioError(ValueError):
    """Malformed scenario or environment data; the message names the field."""


@dataclass(frozen=True)
class ScannerParams:
    n_beams: int = 240
    max_range: float = 5.0
    fov_deg: float = 240.0

    def __post_init__(self):
        if self.n_beams < 3:
            raise ValueError("n_beams must be >= 3")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")


@dataclass(frozen=True)
class SimParams:
    dt: float = 0.04
    max_steps: int = 1500
    goal_radius: float = 0.5
    stall_window: float = 5.0  # seconds without progress before declaring Stuck
    stall_progress: float = 0.05  # metres of path-distance improvement that counts as progress

    def __post_init__(self):
        if not 0 < self.dt <= 0.1:
            raise ValueError("dt must lie in (0, 0.1]")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.goal_radius <= 0:
            raise ValueError("goal_radius must be positive")


@dataclass(frozen=True, eq=False)
class Environment:
    segments: np.ndarray  # (n, 2, 2)
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax

    def __post_init__(self):
        seg = np.asarray(self.segments, dtype=float)
        if seg.ndim != 3 or seg.shape[1:] != (2, 2) or seg.shape[0] == 0:
            raise ScenarioError("segments: expected a nonempty list of [[x1,y1],[x2,y2]]")
        if not np.all(np.isfinite(seg)):
            raise ScenarioError("segments: non-finite coordinate")
        xmin, ymin, xmax, ymax = (float(b) for b in self.bounds)
        if not (xmin < xmax and ymin < ymax):
            raise ScenarioError("bounds: expected [xmin, ymin, xmax, ymax] with min < max")
        tol = 1e-9
        if (seg[..., 0].min() < xmin - tol or seg[..., 0].max() > xmax + tol
                or seg[..., 1].min() < ymin - tol or seg[..., 1].max() > ymax + tol):
            raise ScenarioError("segments: segment lies outside bounds")
        object.__setattr__(self, "segments", seg)
        object.__setattr__(self, "bounds", (xmin, ymin, xmax, ymax))

    @classmethod
    def box(cls, xmin, ymin, xmax, ymax, extra=()) -> "Environment":
        walls = [[[xmin, ymin], [xmax, ymin]], [[xmax, ymin], [xmax, ymax]],
                 [[xmax, ymax], [xmin, ymax]], [[xmin, ymax], [xmin, ymin]]]
        return cls(np.array(walls + [list(map(list, s)) for s in extra], dtype=float), (xmin, ymin, xmax, ymax))

    def to_dict(self) -> dict:
        return {"bounds": list(self.bounds), "segments": self.segments.tolist()}


@dataclass(frozen=True)
class LaserScan:
    angles: np.ndarray  # body-frame bearings relative to the heading
    ranges: np.ndarray
    max_range: float
    mount: tuple[float, float] = (0.0, 0.0)  # scanner position in the body frame

    def downsample(self, n: int) -> "LaserScan":
        if n >= len(self.ranges):
            return self
        idx = np.round(np.linspace(0, len(self.ranges) - 1, n)).astype(int)
        return LaserScan(self.angles[idx], self.ranges[idx], self.max_range, self.mount)


def raycast(env: Environment, origin, bearing: float, max_range: float) -> float:
    d = np.array([[math.cos(bearing), math.sin(bearing)]])
    return float(ray_distances(origin, d, env.segments, max_range)[0])


def beam_angles(n_beams: int, fov_deg: float = 240.0) -> np.ndarray:
    half = math.radians(fov_deg) / 2
    return np.linspace(-half, half, n_beams)


def scan(env: Environment, state: VehicleState, n_beams: int, max_range: float,
         mount=(0.0, 0.0), fov_deg: float = 240.0) -> LaserScan:
    """Cast ``n_beams`` evenly over the field of view from the body-frame ``mount`` point."""
    if n_beams < 3:
        raise ValueError("n_beams must be >= 3")
    angles = beam_angles(n_beams, fov_deg)
    origin = world_points(state, np.asarray([mount], dtype=float))[0]
    world = angles + state.theta
    dirs = np.stack([np.cos(world), np.sin(world)], axis=1)
    ranges = ray_distances(origin, dirs, env.segments, max_range)
    return LaserScan(angles, ranges, float(max_range), tuple(mount))


def scan_to_obstacle_points(scan: LaserScan, state: VehicleState) -> np.ndarray:
    """World coordinates of every beam that hit something before max range."""
    hit = scan.ranges < scan.max_range
    if not np.any(hit):
        return np.zeros((0, 2))
    c, s = math.cos(state.theta), math.sin(state.theta)
    mx, my = scan.mount
    ox = state.x + c * mx - s * my
    oy = state.y + s * mx + c * my
    ang = scan.angles[hit] + state.theta
    r = scan.ranges[hit]
    return np.stack([ox + r * np.cos(ang), oy + r * np.sin(ang)], axis=1)


def collision(env: Environment, state: VehicleState, geom: VehicleGeometry) -> bool:
    """True iff the closed oriented bounding box touches any segment."""
    corners = geom.corners(state)
    p1 = corners[:, None, :]
    p2 = np.roll(corners, -1, axis=0)[:, None, :]
    q1 = env.segments[None, :, 0, :]
    q2 = env.segments[None, :, 1, :]
    if np.any(segments_intersect(p1, p2, q1, q2)):
        return True
    # segment fully inside the box
    c, s = math.cos(state.theta), math.sin(state.theta)
    rel = env.segments[:, 0, :] - np.array([state.x, state.y])
    lx = c * rel[:, 0] + s * rel[:, 1]
    ly = -s * rel[:, 0] + c * rel[:, 1]
    return bool(np.any((np.abs(lx) <= geom.length / 2) & (np.abs(ly) <= geom.width / 2)))


class Outcome(str, enum.Enum):
    REACHED = "reached"
    COLLISION = "collision"
    STUCK = "stuck"


@dataclass(frozen=True, eq=False)
class Scenario:
    env: Environment
    start: VehicleState
    goal: np.ndarray
    seed: int = 0
    name: str = ""

    def to_dict(self) -> dict:
        d = self.env.to_dict()
        d.update(start=self.start.as_list(), goal=[float(g) for g in self.goal], seed=int(self.seed))
        if self.name:
            d["name"] = self.name
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        if not isinstance(data, dict):
            raise ScenarioError("scenario: expected a JSON object")
        known = {"segments", "bounds", "start", "goal", "seed", "name"}
        unknown = set(data) - known
        if unknown:
            raise ScenarioError(f"{sorted(unknown)[0]}: unknown field")
        for key in ("segments", "bounds", "start", "goal"):
            if key not in data:
                raise ScenarioError(f"{key}: missing field")
        try:
            segments = np.asarray(data["segments"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"segments: {exc}") from None
        bounds = data["bounds"]
        if not (isinstance(bounds, list) and len(bounds) == 4):
            raise ScenarioError("bounds: expected [xmin, ymin, xmax, ymax]")
        env = Environment(segments, tuple(bounds))
        start = data["start"]
        if not (isinstance(start, list) and len(start) == 5 and all(isinstance(v, (int, float)) for v in start)):
            raise ScenarioError("start: expected [x, y, theta, v, xi]")
        goal = data["goal"]
        if not (isinstance(goal, list) and len(goal) == 2 and all(isinstance(v, (int, float)) for v in goal)):
            raise ScenarioError("goal: expected [x, y]")
        seed = data.get("seed", 0)
        if not isinstance(seed, int):
            raise ScenarioError("seed: expected an integer")
        xmin, ymin, xmax, ymax = env.bounds
        if not (xmin <= goal[0] <= xmax and ymin <= goal[1] <= ymax):
            raise ScenarioError("goal: outside bounds")
        return cls(env, VehicleState.from_list(start), np.array(goal, dtype=float), seed, str(data.get("name", "")))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"file: invalid JSON ({exc})") from None
    return Scenario.from_dict(data)


@dataclass
class Trajectory:
    samples: list  # (t, VehicleState, Command); the command is the one applied from that state
    outcome: Outcome
    fallbacks: int = 0
    path: Optional[np.ndarray] = None  # A* guidance used for the episode
    goal: Optional[np.ndarray] = None

    @property
    def final_state(self) -> VehicleState:
        return self.samples[-1][1]

    @property
    def duration(self) -> float:
        return self.samples[-1][0]

    def to_jsonl(self) -> str:
        lines = [json.dumps({"kind": "summary", "outcome": self.outcome.value, "steps": len(self.samples),
                             "fallbacks": self.fallbacks,
                             "goal": None if self.goal is None else [float(g) for g in self.goal]})]
        for t, s, c in self.samples:
            lines.append(json.dumps({"kind": "sample", "t": round(t, 10), "x": s.x, "y": s.y, "theta": s.theta,
                                     "v": s.v, "xi": s.xi, "dv": c.dv, "dxi": c.dxi}))
        return "\n".join(lines) + "\n"


Controller = Callable[[VehicleState, LaserScan, np.ndarray], Command]
Observer = Callable[[VehicleState, LaserScan, np.ndarray, Command], Optional[Command]]


@dataclass
class EpisodeSetup:
    """Everything besides the scenario and controller needed to run an episode."""

    vehicle: VehicleParams = field(default_factory=VehicleParams)
    geometry: Optional[VehicleGeometry] = None
    scanner: ScannerParams = field(default_factory=ScannerParams)
    sim: SimParams = field(default_factory=SimParams)
    planner: planning.PlannerParams = field(default_factory=planning.PlannerParams)

    def __post_init__(self):
        if self.geometry is None:
            self.geometry = VehicleGeometry.from_params(self.vehicle)

    @property
    def inflation(self) -> float:
        return self.vehicle.circumradius + self.planner.inflation_margin

    @property
    def mount(self) -> tuple[float, float]:
        return self.geometry.head.local

    def grid_for(self, env: Environment) -> planning.OccupancyGrid:
        key = (id(env), self.planner.resolution, self.inflation)
        cache = _GRID_CACHE
        hit = cache.get(key)
        if hit is not None and hit[0] is env:
            return hit[1]
        grid = planning.rasterize(env, self.planner.resolution, self.inflation)
        if len(cache) > 64:
            cache.clear()
        cache[key] = (env, grid)
        return grid

    def scan(self, env: Environment, state: VehicleState) -> LaserScan:
        return scan(env, state, self.scanner.n_beams, self.scanner.max_range, self.mount, self.scanner.fov_deg)


_GRID_CACHE: dict = {}


def _progress(pos: np.ndarray, path: Optional[planning.Path], remaining: Optional[np.ndarray], goal) -> float:
    if path is None:
        return float(np.linalg.norm(pos - goal))
    d = np.linalg.norm(path.waypoints - pos, axis=1)
    k = int(np.argmin(d))
    return float(d[k] + remaining[k])


def simulate_episode(scn: Scenario, controller: Controller, setup: EpisodeSetup | None = None,
                     path: Optional[planning.Path] = None, observer: Optional[Observer] = None,
                     use_planner: bool = True) -> Trajectory:
    """Closed loop: scan -> waypoint -> controller -> step, until reached, collision or stuck.

    ``observer`` sees every (state, scan, waypoint, command) before the step; if
    it returns a Command, that command is executed instead (used for mixed rollouts).
    """
    setup = setup or EpisodeSetup()
    env, geom, sim = scn.env, setup.geometry, setup.sim
    goal = np.asarray(scn.goal, dtype=float)
    if use_planner and path is None:
        path = planning.plan(setup.grid_for(env), scn.start.position, goal)
    if not use_planner:
        path = None
    remaining = path.remaining_lengths() if path is not None else None
    traj = Trajectory([], Outcome.STUCK, path=None if path is None else path.waypoints, goal=goal)

    state = scn.start
    if collision(env, state, geom):
        traj.samples.append((0.0, state, Command()))
        traj.outcome = Outcome.COLLISION
        return traj
    if np.linalg.norm(state.position - goal) <= sim.goal_radius:
        traj.samples.append((0.0, state, Command()))
        traj.outcome = Outcome.REACHED
        return traj

    best = _progress(state.position, path, remaining, goal)
    last_improved = 0.0
    outcome = Outcome.STUCK
    t = 0.0
    for k in range(sim.max_steps):
        t = k * sim.dt
        sc = setup.scan(env, state)
        wp = (planning.furthest_visible_waypoint(path, state.position, env, setup.planner.sight_clearance)
              if path is not None else goal)
        cmd = controller(state, sc, wp)
        if observer is not None:
            override = observer(state, sc, wp, cmd)
            if override is not None:
                cmd = override
        if cmd.fallback:
            traj.fallbacks += 1
        traj.samples.append((t, state, cmd))
        state = step(state, cmd, sim.dt, setup.vehicle)
        t = (k + 1) * sim.dt
        if collision(env, state, geom):
            outcome = Outcome.COLLISION
            break
        if np.linalg.norm(state.position - goal) <= sim.goal_radius:
            outcome = Outcome.REACHED
            break
        prog = _progress(state.position, path, remaining, goal)
        if prog < best - sim.stall_progress:
            best, last_improved = prog, t
        elif t - last_improved > sim.stall_window:
            break
    traj.samples.append((t, state, Command()))
    traj.outcome = outcome
    return traj


def scan_points_on_walls(env: Environment, points: np.ndarray) -> np.ndarray:
    """Distance from each point to the closest wall (0 for exact scan returns)."""
    if len(points) == 0:
        return np.zeros(0)
    return point_segment_distances(points, env.segments).min(axis=1)


def segments_from_polygon(poly: Sequence[Sequence[float]]) -> list:
    pts = [list(map(float, p)) for p in poly]
    return [[pts[i], pts[(i + 1) % len(pts)]] for i in range(len(pts))]
