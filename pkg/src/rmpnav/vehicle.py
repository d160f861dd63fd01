"""Ackermann vehicle: control-point geometry, Jacobians and time integration.

Kinematics use a mid-body bicycle model with the slip relation
``beta = atan(tan(xi) / 2)``. The reference point moves along the heading,
and the yaw rate is ``v * sin(2 beta) / L``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np


class Role(str, enum.Enum):
    HEAD = "head"
    FRONT_LEFT = "front_left"
    FRONT_RIGHT = "front_right"
    SIDE = "side"
    REAR = "rear"


@dataclass(frozen=True)
class VehicleParams:
    length: float = 0.40
    width: float = 0.25
    wheelbase: float = 0.33
    xi_max: float = 0.35
    v_min: float = -1.5
    v_max: float = 2.0
    dv_max: float = 4.0
    dxi_max: float = 4.0

    def __post_init__(self):
        if min(self.length, self.width, self.wheelbase) <= 0:
            raise ValueError("vehicle dimensions must be positive")
        if not 0 < self.xi_max < math.pi / 2:
            raise ValueError("xi_max must lie in (0, pi/2)")
        if not self.v_min <= 0 <= self.v_max:
            raise ValueError("speed limits must bracket zero")
        if self.dv_max <= 0 or self.dxi_max <= 0:
            raise ValueError("command limits must be positive")

    @property
    def circumradius(self) -> float:
        return 0.5 * math.hypot(self.length, self.width)


@dataclass(frozen=True)
class VehicleState:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0
    v: float = 0.0
    xi: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def as_list(self) -> list[float]:
        return [float(self.x), float(self.y), float(self.theta), float(self.v), float(self.xi)]

    @classmethod
    def from_list(cls, values) -> "VehicleState":
        if len(values) != 5:
            raise ValueError("state must be [x, y, theta, v, xi]")
        return cls(*(float(s) for s in values))


@dataclass(frozen=True)
class Command:
    dv: float = 0.0
    dxi: float = 0.0
    fallback: bool = False  # set when the solver failed and the coast command was issued


@dataclass(frozen=True)
class ControlPoint:
    local: tuple[float, float]
    role: Role
    accel_scale: float = 1.0

    def __post_init__(self):
        if self.accel_scale < 1.0:
            raise ValueError("accel_scale must be >= 1")
        if self.accel_scale > 1.0 and self.role not in (Role.FRONT_LEFT, Role.FRONT_RIGHT):
            raise ValueError("only front-left/front-right points may scale accelerations")


@dataclass(frozen=True)
class VehicleGeometry:
    length: float
    width: float
    wheelbase: float
    control_points: tuple[ControlPoint, ...]
    locals: np.ndarray = field(init=False, repr=False, compare=False)
    scales: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cps = self.control_points
        if len(cps) != 12:
            raise ValueError("vehicle geometry needs exactly 12 control points")
        for role in (Role.HEAD, Role.FRONT_LEFT, Role.FRONT_RIGHT):
            if sum(cp.role == role for cp in cps) != 1:
                raise ValueError(f"exactly one {role.value} control point required")
        object.__setattr__(self, "locals", np.array([cp.local for cp in cps], dtype=float))
        object.__setattr__(self, "scales", np.array([cp.accel_scale for cp in cps], dtype=float))

    @classmethod
    def from_params(cls, params: VehicleParams, front_accel_scale: float = 1.0) -> "VehicleGeometry":
        hl, hw = params.length / 2, params.width / 2
        q = params.length / 4
        pts = [
            ControlPoint((hl, 0.0), Role.HEAD),
            ControlPoint((hl, hw), Role.FRONT_LEFT, front_accel_scale),
            ControlPoint((hl, -hw), Role.FRONT_RIGHT, front_accel_scale),
            ControlPoint((-hl, hw), Role.REAR),
            ControlPoint((-hl, 0.0), Role.REAR),
            ControlPoint((-hl, -hw), Role.REAR),
            ControlPoint((q, hw), Role.SIDE),
            ControlPoint((q, -hw), Role.SIDE),
            ControlPoint((0.0, hw), Role.SIDE),
            ControlPoint((0.0, -hw), Role.SIDE),
            ControlPoint((-q, hw), Role.SIDE),
            ControlPoint((-q, -hw), Role.SIDE),
        ]
        return cls(params.length, params.width, params.wheelbase, tuple(pts))

    def index_of(self, role: Role) -> int:
        for i, cp in enumerate(self.control_points):
            if cp.role == role:
                return i
        raise KeyError(role)

    @property
    def head(self) -> ControlPoint:
        return self.control_points[self.index_of(Role.HEAD)]

    def corners(self, state: VehicleState) -> np.ndarray:
        """World-frame box corners, counter-clockwise from front-left."""
        hl, hw = self.length / 2, self.width / 2
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        return world_points(state, local)


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def world_points(state: VehicleState, local: np.ndarray) -> np.ndarray:
    c, s = math.cos(state.theta), math.sin(state.theta)
    lx, ly = local[:, 0], local[:, 1]
    return np.stack([c * lx - s * ly + state.x, s * lx + c * ly + state.y], axis=1)


def control_point_position(state: VehicleState, cp: ControlPoint) -> np.ndarray:
    return rotation(state.theta) @ np.asarray(cp.local, dtype=float) + np.array([state.x, state.y])


def task_jacobians(state: VehicleState, local: np.ndarray) -> np.ndarray:
    """d(position)/d(x, y, theta) for a batch of body points, shape (n, 2, 3)."""
    c, s = math.cos(state.theta), math.sin(state.theta)
    lx, ly = local[:, 0], local[:, 1]
    n = local.shape[0]
    jac = np.zeros((n, 2, 3))
    jac[:, 0, 0] = 1.0
    jac[:, 1, 1] = 1.0
    jac[:, 0, 2] = -s * lx - c * ly
    jac[:, 1, 2] = c * lx - s * ly
    return jac


def task_jacobian(state: VehicleState, cp: ControlPoint) -> np.ndarray:
    return task_jacobians(state, np.asarray([cp.local], dtype=float))[0]


def slip_angle(xi: float) -> float:
    if abs(xi) >= math.pi / 2:
        raise ValueError("steering out of range")
    return math.atan(math.tan(xi) / 2.0)


def yaw_rate(v: float, xi: float, wheelbase: float) -> float:
    return v * math.sin(2.0 * slip_angle(xi)) / wheelbase


def velocity_map(state: VehicleState, wheelbase: float) -> np.ndarray:
    """(xdot, ydot, thetadot) of the reference point."""
    return np.array([state.v * math.cos(state.theta), state.v * math.sin(state.theta),
                     yaw_rate(state.v, state.xi, wheelbase)])


def kinematic_jacobian(state: VehicleState, wheelbase: float) -> np.ndarray:
    """3x2 map from (dv, dxi) to (xdd, ydd, thetadd), velocity-product term dropped."""
    beta = slip_angle(state.xi)
    c2b = math.cos(2.0 * beta)
    cxi = math.cos(state.xi)
    return np.array([
        [math.cos(state.theta), 0.0],
        [math.sin(state.theta), 0.0],
        [math.sin(2.0 * beta) / wheelbase, 4.0 * state.v * c2b / (wheelbase * (3.0 * cxi * cxi + 1.0))],
    ])


def control_point_velocities(state: VehicleState, local: np.ndarray, wheelbase: float) -> np.ndarray:
    qd = velocity_map(state, wheelbase)
    return task_jacobians(state, local) @ qd


def control_point_velocity(state: VehicleState, cp: ControlPoint, wheelbase: float) -> np.ndarray:
    return task_jacobian(state, cp) @ velocity_map(state, wheelbase)


def clamp(value: float, lo: float, hi: float) -> float:
    return lo if value < lo else hi if value > hi else value


def clamp_command(cmd: Command, params: VehicleParams) -> Command:
    return replace(cmd, dv=clamp(cmd.dv, -params.dv_max, params.dv_max),
                   dxi=clamp(cmd.dxi, -params.dxi_max, params.dxi_max))


def step(state: VehicleState, cmd: Command, dt: float, params: VehicleParams) -> VehicleState:
    """Semi-implicit Euler: update (v, xi) first, then advance the pose with them."""
    if not 0.0 < dt <= 0.1:
        raise ValueError("dt must lie in (0, 0.1]")
    v = clamp(state.v + cmd.dv * dt, params.v_min, params.v_max)
    xi = clamp(state.xi + cmd.dxi * dt, -params.xi_max, params.xi_max)
    c, s = math.cos(state.theta), math.sin(state.theta)
    return VehicleState(
        state.x + v * c * dt,
        state.y + v * s * dt,
        state.theta + yaw_rate(v, xi, params.wheelbase) * dt,
        v,
        xi,
    )
