"""Expert RMP controller: goal, obstacle and yaw-damping policies resolved into commands."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .rmp_core import DEFAULT_TOL, Rmp2, SolverError, pullback_sums, resolve_box, resolve_sums
from .vehicle import (Command, ControlPoint, Role, VehicleGeometry, VehicleParams, VehicleState,
                      clamp_command, control_point_velocities, kinematic_jacobian, task_jacobians,
                      world_points)
from .world import LaserScan, scan_to_obstacle_points

_MIN_OBSTACLE_DIST = 1e-6
_SWITCH_SPEED = 0.05  # below this |v| the travel direction is re-decided
_GOAL_ROLES = (Role.FRONT_LEFT, Role.HEAD, Role.FRONT_RIGHT)


class DegenerateObstacle(ValueError):
    pass


@dataclass(frozen=True)
class GoalParams:
    alpha: float = 3.4
    beta: float = 2.0
    eps: float = 0.05

    def __post_init__(self):
        if min(self.alpha, self.beta, self.eps) <= 0:
            raise ValueError("goal alpha, beta, eps must be positive")

    @property
    def max_speed(self) -> float:
        return self.alpha / self.beta


@dataclass(frozen=True)
class ObstacleParams:
    alpha: float = 1.25
    beta: float = 0.25
    gamma: float = 0.25
    d_max: float = 0.5
    w_scale: float = 0.0031
    w_order: float = 1.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma, self.d_max, self.w_scale, self.w_order) <= 0:
            raise ValueError("obstacle parameters must be positive")

    def weight(self, d):
        return self.w_scale / np.power(d, self.w_order)


@dataclass(frozen=True)
class ManeuverParams:
    """Longitudinal policy on the head point that picks the travel direction.

    It backs up when the arc toward the waypoint is blocked, and drives forward
    into a turn when the waypoint is behind but the arc is clear (the scanner
    cannot see behind the vehicle). The clearance threshold is ``clear_on``
    while moving forward and ``clear_off`` while reversing, so the sign of v
    acts as the latch that turns a stall into a multi-point turn.
    """

    weight: float = 1000.0  # back-up weight; 0 disables
    speed: float = 0.6
    forward_weight: float = 0.0  # forward-turn weight; 0 disables
    forward_speed: float = 1.0
    gain: float = 8.0
    clear_on: float = 0.45
    clear_off: float = 0.9
    ramp: float = 0.15
    bearing: tuple[float, float] = (0.0, 0.2)  # rad; misalignment ramp for backing up
    behind: tuple[float, float] = (1.6, 2.1)  # rad; ramp for turning forward
    margin: float = 0.08
    inside_on: float = 0.3  # waypoint this deep inside the turning circle counts as blocked
    inside_off: float = 0.1

    def __post_init__(self):
        if min(self.weight, self.speed, self.forward_weight, self.forward_speed, self.gain,
               self.clear_on, self.margin) < 0:
            raise ValueError("maneuver parameters must be non-negative")
        if self.clear_off < self.clear_on or self.ramp <= 0:
            raise ValueError("maneuver clearances need clear_off >= clear_on and ramp > 0")
        for lo, hi in (self.bearing, self.behind):
            if not 0 <= lo < hi:
                raise ValueError("maneuver bearing ramps must be increasing")


def _ramp(x: float, lo: float, hi: float) -> float:
    return min(1.0, max(0.0, (x - lo) / (hi - lo)))


@dataclass(frozen=True)
class ControllerConfig:
    goal: GoalParams = field(default_factory=GoalParams)
    obstacle: ObstacleParams = field(default_factory=ObstacleParams)
    yaw_damping_gain: float = 0.5
    front_accel_scale: float = 4.0
    tol: float = DEFAULT_TOL
    n_beams: int = 60  # scan beams used as obstacle points
    steer_speed_floor: float = 0.2  # |v| used for the steering column is at least this
    bounded: bool = True  # resolve within the command box instead of clipping afterwards
    maneuver: ManeuverParams = field(default_factory=lambda: ManeuverParams())

    def __post_init__(self):
        if self.front_accel_scale < 1:
            raise ValueError("front_accel_scale must be >= 1")
        if self.yaw_damping_gain < 0:
            raise ValueError("yaw_damping_gain must be non-negative")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.n_beams < 3:
            raise ValueError("n_beams must be >= 3")
        if self.steer_speed_floor < 0:
            raise ValueError("steer_speed_floor must be non-negative")


def arc_clearance(points_body: np.ndarray, curvature: float, params: VehicleParams, margin: float) -> float:
    """Free travel ahead along a circle of signed ``curvature`` (0: straight, >0: left).

    Points are in the body frame of the reference point. Only points inside the
    band swept by the body count; the result is infinite when none block.
    """
    pts = np.asarray(points_body, dtype=float).reshape(-1, 2)
    if not len(pts):
        return math.inf
    hl, hw = params.length / 2, params.width / 2
    if abs(curvature) < 1e-9:
        hit = (np.abs(pts[:, 1]) <= hw + margin) & (pts[:, 0] > 0)
        return max(0.0, float(np.min(pts[hit, 0])) - hl) if np.any(hit) else math.inf
    radius = 1.0 / abs(curvature)
    rel = np.column_stack([pts[:, 0], math.copysign(1.0, curvature) * pts[:, 1] - radius])
    r = np.hypot(rel[:, 0], rel[:, 1])
    inner = radius - hw - margin
    outer = math.hypot(radius + hw, hl) + margin
    phi = np.mod(np.arctan2(rel[:, 1], rel[:, 0]) + math.pi / 2, 2 * math.pi)
    hit = (r >= inner) & (r <= outer) & (phi < math.pi)
    if not np.any(hit):
        return math.inf
    # angle already covered by the front edge at that radius
    lead = np.arcsin(np.minimum(1.0, hl / r[hit]))
    return max(0.0, float(np.min(radius * (phi[hit] - lead))))


def forward_clearance(points_body: np.ndarray, side: float, params: VehicleParams, margin: float) -> float:
    """Best free travel over straight, half and full steering toward ``side``."""
    beta = math.atan(math.tan(params.xi_max) / 2)
    kmax = math.sin(2 * beta) / params.wheelbase
    return max(arc_clearance(points_body, side * k, params, margin) for k in (0.0, 0.5 * kmax, kmax))


def maneuver_rmp(state: VehicleState, obstacles: np.ndarray, goal, params: VehicleParams,
                 p: ManeuverParams) -> Rmp2:
    """Head-point speed target along the heading: back up, turn forward, or nothing."""
    c, s = math.cos(state.theta), math.sin(state.theta)
    rel = np.asarray(goal, dtype=float) - state.position
    bearing = abs(math.atan2(-s * rel[0] + c * rel[1], c * rel[0] + s * rel[1]))
    misaligned = _ramp(bearing, *p.bearing)
    if misaligned == 0 or (p.weight <= 0 and p.forward_weight <= 0):
        return Rmp2.zero()
    d = np.asarray(obstacles, dtype=float).reshape(-1, 2) - state.position
    body = np.column_stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]])
    side = 1.0 if -s * rel[0] + c * rel[1] >= 0 else -1.0
    clear = forward_clearance(body, side, params, p.margin)
    reversing = state.v < 0
    blocked = _ramp((p.clear_off if reversing else p.clear_on) - clear, 0.0, p.ramp)
    beta = math.atan(math.tan(params.xi_max) / 2)
    radius = params.wheelbase / math.sin(2 * beta)
    local = np.array([c * rel[0] + s * rel[1], -s * rel[0] + c * rel[1]])
    depth = radius - math.hypot(local[0], local[1] - side * radius)
    blocked = max(blocked, _ramp(depth - (p.inside_off if reversing else p.inside_on), 0.0, p.ramp))
    w_back = p.weight * blocked * misaligned
    w_fwd = p.forward_weight * (1 - blocked) * _ramp(bearing, *p.behind)
    if w_back == 0 and w_fwd == 0:
        return Rmp2.zero()
    target = (-w_back * p.speed + w_fwd * p.forward_speed) / (w_back + w_fwd)
    head = np.array([c, s])
    f = p.gain * (target - state.v) * head
    return Rmp2.from_metric(f, (w_back + w_fwd) * np.outer(head, head))


def goal_rmp(pos, vel, goal, p: GoalParams) -> Rmp2:
    pos, vel, goal = (np.asarray(a, dtype=float) for a in (pos, vel, goal))
    diff = goal - pos
    f = p.alpha * diff / (np.linalg.norm(diff) + p.eps) - p.beta * vel
    return Rmp2(f, 1.0, 0.0, 1.0)


def obstacle_rmp(pos, vel, obstacle, p: ObstacleParams) -> Rmp2:
    pos, vel, obstacle = (np.asarray(a, dtype=float) for a in (pos, vel, obstacle))
    diff = obstacle - pos
    d = float(np.linalg.norm(diff))
    if d <= _MIN_OBSTACLE_DIST:
        raise DegenerateObstacle("degenerate obstacle")
    if d > p.d_max:
        return Rmp2.zero()
    u = diff / d
    f = -(p.alpha / d) * (p.beta * float(u @ vel) + p.gamma) * u
    return Rmp2.from_metric(f, p.weight(d) * np.outer(f, f))


def yaw_damping_rmp(state: VehicleState, head_cp: ControlPoint, gain: float, wheelbase: float) -> Rmp2:
    """Damp the body-lateral velocity of the head point; metric acts only laterally."""
    if head_cp.role != Role.HEAD:
        raise ValueError("yaw damping acts on the head control point")
    vel = control_point_velocities(state, np.asarray([head_cp.local], dtype=float), wheelbase)[0]
    lat = np.array([-math.sin(state.theta), math.cos(state.theta)])
    f = -gain * float(lat @ vel) * lat
    return Rmp2.from_metric(f, np.outer(lat, lat))


@dataclass
class RmpBatch:
    """Flat arrays of task-space policies with the control point each acts on."""

    accel: np.ndarray  # (n, 2)
    metric: np.ndarray  # (n, 2, 2)
    point: np.ndarray  # (n,) control point index
    skipped: int = 0

    def __len__(self):
        return len(self.point)

    def point_sums(self, n_points: int = 12):
        """Per control point: summed metric and summed metric-weighted acceleration."""
        m = np.zeros((n_points, 2, 2))
        force = np.zeros((n_points, 2))
        np.add.at(m, self.point, self.metric)
        np.add.at(force, self.point, np.einsum("nij,nj->ni", self.metric, self.accel))
        return m, force


def build_rmps(state: VehicleState, obstacles: np.ndarray, goal, geom: VehicleGeometry,
               cfg: ControllerConfig, params: VehicleParams | None = None) -> RmpBatch:
    """All expert policies for one control step (vectorized)."""
    locs = geom.locals
    pos = world_points(state, locs)
    vel = control_point_velocities(state, locs, geom.wheelbase)
    accels, metrics, points = [], [], []

    gp = cfg.goal
    gidx = np.array([geom.index_of(r) for r in _GOAL_ROLES])
    diff = np.asarray(goal, dtype=float) - pos[gidx]
    fg = gp.alpha * diff / (np.linalg.norm(diff, axis=1, keepdims=True) + gp.eps) - gp.beta * vel[gidx]
    accels.append(fg * geom.scales[gidx, None])
    metrics.append(np.broadcast_to(np.eye(2), (3, 2, 2)))
    points.append(gidx)

    skipped = 0
    obstacles = np.asarray(obstacles, dtype=float).reshape(-1, 2)
    if len(obstacles):
        op = cfg.obstacle
        rel = obstacles[None, :, :] - pos[:, None, :]  # (12, m, 2)
        d = np.linalg.norm(rel, axis=2)
        degenerate = d <= _MIN_OBSTACLE_DIST
        skipped = int(np.count_nonzero(degenerate))
        keep = (~degenerate) & (d <= op.d_max)
        ci, oi = np.nonzero(keep)
        if len(ci):
            dk = d[ci, oi]
            u = rel[ci, oi] / dk[:, None]
            ud = np.einsum("ni,ni->n", u, vel[ci])
            f = -(op.alpha / dk * (op.beta * ud + op.gamma))[:, None] * u
            a = op.weight(dk)[:, None, None] * f[:, :, None] * f[:, None, :]
            accels.append(f * geom.scales[ci, None])
            metrics.append(a)
            points.append(ci)

    h = geom.index_of(Role.HEAD)
    lat = np.array([-math.sin(state.theta), math.cos(state.theta)])
    fy = -cfg.yaw_damping_gain * float(lat @ vel[h]) * lat
    accels.append(fy[None, :])
    metrics.append(np.outer(lat, lat)[None])
    points.append(np.array([h]))

    mp = cfg.maneuver
    rv = maneuver_rmp(state, obstacles, goal, params or VehicleParams(), mp) if mp.weight or mp.forward_weight else None
    if rv is not None and np.any(rv.metric):
        accels.append(rv.accel[None, :])
        metrics.append(rv.metric[None])
        points.append(np.array([h]))

    return RmpBatch(np.concatenate(accels), np.concatenate(metrics), np.concatenate(points), skipped)


def assemble(state: VehicleState, scan: LaserScan, goal_world, geom: VehicleGeometry,
             cfg: ControllerConfig, params: VehicleParams | None = None) -> list[tuple[Rmp2, ControlPoint]]:
    if len(scan.ranges) == 0:
        raise ValueError("scan is empty")
    obstacles = scan_to_obstacle_points(scan.downsample(cfg.n_beams), state)
    batch = build_rmps(state, obstacles, goal_world, geom, cfg, params)
    return [(Rmp2.from_metric(f, 0.5 * (a + a.T)), geom.control_points[i])
            for f, a, i in zip(batch.accel, batch.metric, batch.point)]


def effective_state(state: VehicleState, speed_floor: float, direction: int = 0) -> VehicleState:
    """State whose speed is pushed away from zero.

    At v = 0 the steering column of the kinematic Jacobian vanishes and the
    solver cannot trade steering against yaw; a floor keeps it informative.
    ``direction`` picks the sign below the floor (0: sign of v, zero counts as forward).
    """
    if speed_floor <= 0 or abs(state.v) >= speed_floor:
        return state
    sign = direction if direction else (-1 if state.v < 0 else 1)
    return replace(state, v=sign * speed_floor)


def command_jacobians(state: VehicleState, geom: VehicleGeometry, speed_floor: float = 0.0,
                      direction: int = 0) -> np.ndarray:
    """Per control point: d(point accel)/d(dv, dxi), shape (12, 2, 2)."""
    kin = kinematic_jacobian(effective_state(state, speed_floor, direction), geom.wheelbase)
    return task_jacobians(state, geom.locals) @ kin


def command_bounds(state: VehicleState, params: VehicleParams):
    """Box of admissible (dv, dxi); a saturated speed or steering angle cannot grow further."""
    lo = np.array([-params.dv_max, -params.dxi_max])
    hi = -lo
    if state.v >= params.v_max:
        hi[0] = 0.0
    if state.v <= params.v_min:
        lo[0] = 0.0
    if state.xi >= params.xi_max:
        hi[1] = 0.0
    if state.xi <= -params.xi_max:
        lo[1] = 0.0
    return lo, hi


def solve_point_sums(state: VehicleState, metric_sums: np.ndarray, force_sums: np.ndarray,
                     geom: VehicleGeometry, params: VehicleParams, tol: float = DEFAULT_TOL,
                     speed_floor: float = 0.0, bounded: bool = False) -> Command:
    """Resolve per-point (sum A, sum A f) into a clamped command; coast on failure.

    Near standstill both travel directions are tried and the cheaper solution
    whose dv agrees with its assumed direction wins; once moving, the current
    direction is kept so the choice does not chatter. Costs are
    comparable because the constant term sum f^T A f is shared.
    """
    undecided = speed_floor > 0 and abs(state.v) < min(_SWITCH_SPEED, speed_floor)
    best = None
    for direction in ((1, -1) if undecided else (0,)):
        jc = command_jacobians(state, geom, speed_floor, direction)
        ja = np.einsum("nij,nik->njk", jc, metric_sums)
        weight = np.einsum("nkj,nji->ki", ja, jc)
        bias = np.einsum("nij,ni->j", jc, force_sums)
        if not (np.all(np.isfinite(weight)) and np.all(np.isfinite(bias))):
            return Command(0.0, 0.0, fallback=True)
        weight = 0.5 * (weight + weight.T)
        try:
            if bounded:
                q = resolve_box(weight, bias, *command_bounds(state, params), tol)
            else:
                q = resolve_sums(weight, bias, tol)
        except SolverError:
            return Command(0.0, 0.0, fallback=True)
        cost = 0.5 * q @ weight @ q - bias @ q
        key = (direction * q[0] < 0, cost)
        if best is None or key < best[0]:
            best = (key, q)
    q = best[1]
    return clamp_command(Command(float(q[0]), float(q[1])), params)


def solve_batch(state: VehicleState, batch: RmpBatch, geom: VehicleGeometry, params: VehicleParams,
                tol: float = DEFAULT_TOL, speed_floor: float = 0.0, bounded: bool = False) -> Command:
    if len(batch) == 0:
        raise ValueError("no policies")
    m, force = batch.point_sums(len(geom.control_points))
    return solve_point_sums(state, m, force, geom, params, tol, speed_floor, bounded)


def solve_control(state: VehicleState, rmps, geom: VehicleGeometry, params: VehicleParams,
                  tol: float = DEFAULT_TOL, speed_floor: float = 0.0) -> Command:
    """Resolve a list of (Rmp2, ControlPoint) pairs into a clamped command."""
    if len(rmps) == 0:
        raise ValueError("no policies")
    index = {cp: i for i, cp in enumerate(geom.control_points)}
    jc = command_jacobians(state, geom, speed_floor)
    jac = np.stack([jc[index[cp]] for _, cp in rmps])
    accel = np.stack([r.accel for r, _ in rmps])
    metric = np.stack([r.metric for r, _ in rmps])
    weight, bias = pullback_sums(accel, metric, jac)
    if not (np.all(np.isfinite(weight)) and np.all(np.isfinite(bias))):
        return Command(0.0, 0.0, fallback=True)
    try:
        q = resolve_sums(weight, bias, tol)
    except SolverError:
        return Command(0.0, 0.0, fallback=True)
    return clamp_command(Command(float(q[0]), float(q[1])), params)


class ExpertController:
    """Laser-scan expert: callable as ``controller(state, scan, waypoint) -> Command``."""

    def __init__(self, cfg: ControllerConfig | None = None, params: VehicleParams | None = None):
        self.cfg = cfg or ControllerConfig()
        self.params = params or VehicleParams()
        self.geom = VehicleGeometry.from_params(self.params, self.cfg.front_accel_scale)

    def policies(self, state: VehicleState, scan: LaserScan, goal) -> RmpBatch:
        obstacles = scan_to_obstacle_points(scan.downsample(self.cfg.n_beams), state)
        return build_rmps(state, obstacles, goal, self.geom, self.cfg, self.params)

    def point_sums(self, state: VehicleState, scan: LaserScan, goal):
        return self.policies(state, scan, goal).point_sums(len(self.geom.control_points))

    def __call__(self, state: VehicleState, scan: LaserScan, goal) -> Command:
        m, force = self.point_sums(state, scan, goal)
        return solve_point_sums(state, m, force, self.geom, self.params, self.cfg.tol,
                                self.cfg.steer_speed_floor, self.cfg.bounded)
