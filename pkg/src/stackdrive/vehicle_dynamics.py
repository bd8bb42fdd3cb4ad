"""Planar two-wheel (bicycle) vehicle model.

The lateral channel is the linear single-track model in the usual stable
form (positive cornering stiffness, restoring terms negative). The
longitudinal channel takes the commanded acceleration directly. States are
advanced by fixed-step classical Runge-Kutta.
"""

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, Tuple

from .errors import LowSpeedError, NumericalAbort

GRAVITY = 9.81
RAD_TO_DEG = 57.3

# Below this longitudinal speed the lateral model is frozen.
V_MIN_FLOOR = 0.5

DEFAULT_DT = 0.01


@dataclass(frozen=True)
class VehicleParams:
    """Physical parameters of one vehicle."""

    mass: float = 1500.0  # kg
    yaw_inertia: float = 2500.0  # kg m^2
    front_axle: float = 1.2  # l_f, m
    rear_axle: float = 1.4  # l_r, m
    front_stiffness: float = 80000.0  # C_f, N/rad
    rear_stiffness: float = 80000.0  # C_r, N/rad
    accel_limit: float = 8.0  # g_pl, m/s^2
    steer_limit: float = 0.6  # delta_pl, rad
    width: float = 2.0  # m
    length: float = 5.0  # m

    @property
    def wheelbase(self) -> float:
        """L = l_f + l_r."""
        return self.front_axle + self.rear_axle

    @property
    def understeer_gradient(self) -> float:
        """K_us in deg/g, implied by mass distribution and stiffness."""
        k_rad = (
            self.mass
            * GRAVITY
            / self.wheelbase
            * (
                self.rear_axle / self.front_stiffness
                - self.front_axle / self.rear_stiffness
            )
        )
        return k_rad * RAD_TO_DEG

    @property
    def diagonal(self) -> float:
        """Body diagonal length (m)."""
        return math.hypot(self.length, self.width)

    def validate(self) -> None:
        """Raise ValueError if any invariant is violated."""
        for f in fields(self):
            value = getattr(self, f.name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"vehicle.{f.name} must be positive, got {value}")
        if self.steer_limit >= math.pi / 2:
            raise ValueError("vehicle.steer_limit must be below pi/2")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class VehicleState:
    """Pose, body-frame velocities and yaw rate."""

    x: float
    y: float
    heading: float
    v_long: float
    v_lat: float = 0.0
    yaw_rate: float = 0.0

    def is_finite(self) -> bool:
        return all(
            math.isfinite(v)
            for v in (
                self.x,
                self.y,
                self.heading,
                self.v_long,
                self.v_lat,
                self.yaw_rate,
            )
        )


@dataclass(frozen=True)
class ControlInput:
    """Commanded acceleration (m/s^2) and steering angle (rad)."""

    accel: float = 0.0
    steer: float = 0.0

    def clamped(self, params: VehicleParams) -> "ControlInput":
        """Clip both channels to the physical limits."""
        accel = max(-params.accel_limit, min(params.accel_limit, self.accel))
        steer = max(-params.steer_limit, min(params.steer_limit, self.steer))
        return ControlInput(accel=accel, steer=steer)


def _lateral_rhs(
    v_long: float, v_lat: float, yaw_rate: float, params: VehicleParams, steer: float
) -> Tuple[float, float]:
    m, iz = params.mass, params.yaw_inertia
    lf, lr = params.front_axle, params.rear_axle
    cf, cr = params.front_stiffness, params.rear_stiffness

    a11 = -(cf + cr) / (m * v_long)
    a12 = (-lf * cf + lr * cr) / (m * v_long) - v_long
    a21 = (-lf * cf + lr * cr) / (iz * v_long)
    a22 = -(lf * lf * cf + lr * lr * cr) / (iz * v_long)

    dv_lat = a11 * v_lat + a12 * yaw_rate + cf / m * steer
    dr = a21 * v_lat + a22 * yaw_rate + lf * cf / iz * steer
    return dv_lat, dr


def lateral_derivatives(
    state: VehicleState, params: VehicleParams, steer: float
) -> Tuple[float, float]:
    """Right-hand side of the lateral bicycle equations.

    Args:
        state: Current vehicle state
        params: Vehicle parameters
        steer: Front-wheel steering angle (rad), positive to the left

    Returns:
        (dv_lat/dt, dr/dt)

    Raises:
        LowSpeedError: if v_long is at or below the low-speed floor
    """
    if state.v_long <= V_MIN_FLOOR:
        raise LowSpeedError(
            f"lateral model undefined at v_long={state.v_long:.3f} m/s"
        )
    return _lateral_rhs(state.v_long, state.v_lat, state.yaw_rate, params, steer)


def pose_derivatives(state: VehicleState) -> Tuple[float, float, float]:
    """Planar kinematics with body-frame velocity composition."""
    c, s = math.cos(state.heading), math.sin(state.heading)
    dx = state.v_long * c - state.v_lat * s
    dy = state.v_long * s + state.v_lat * c
    return dx, dy, state.yaw_rate


def _rhs(y, params: VehicleParams, accel: float, steer: float):
    x, yy, heading, v_long, v_lat, yaw_rate = y
    c, s = math.cos(heading), math.sin(heading)
    if v_long > V_MIN_FLOOR:
        dv_lat, dr = _lateral_rhs(v_long, v_lat, yaw_rate, params, steer)
    else:
        dv_lat, dr = 0.0, 0.0
    return (
        v_long * c - v_lat * s,
        v_long * s + v_lat * c,
        yaw_rate,
        accel,
        dv_lat,
        dr,
    )


def step(
    state: VehicleState,
    params: VehicleParams,
    control: ControlInput,
    dt: float = DEFAULT_DT,
) -> VehicleState:
    """Advance one fixed RK4 step.

    Args:
        state: State at the start of the step
        params: Vehicle parameters
        control: Input held constant over the step (clamped here)
        dt: Step length (s)

    Returns:
        State at the end of the step

    Raises:
        ValueError: if dt is not positive
        NumericalAbort: if the result is not finite
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    control = control.clamped(params)
    if state.v_long <= V_MIN_FLOOR:
        state = replace(state, v_lat=0.0, yaw_rate=0.0)

    y0 = (state.x, state.y, state.heading, state.v_long, state.v_lat, state.yaw_rate)
    a, d = control.accel, control.steer

    k1 = _rhs(y0, params, a, d)
    k2 = _rhs(tuple(yi + 0.5 * dt * ki for yi, ki in zip(y0, k1)), params, a, d)
    k3 = _rhs(tuple(yi + 0.5 * dt * ki for yi, ki in zip(y0, k2)), params, a, d)
    k4 = _rhs(tuple(yi + dt * ki for yi, ki in zip(y0, k3)), params, a, d)

    y1 = [
        yi + dt / 6.0 * (p + 2.0 * q + 2.0 * r + s)
        for yi, p, q, r, s in zip(y0, k1, k2, k3, k4)
    ]
    # Vehicles brake to a stop, they do not reverse.
    if y1[3] < 0.0:
        y1[3] = 0.0

    result = VehicleState(*y1)
    if not result.is_finite():
        raise NumericalAbort("non-finite vehicle state after integration step")
    return result


def steady_state_yaw_rate(v_long: float, steer: float, params: VehicleParams) -> float:
    """Closed-form steady yaw rate of the linear model under constant steer."""
    k_rad = params.understeer_gradient / RAD_TO_DEG
    return v_long * steer / (params.wheelbase + k_rad * v_long**2 / GRAVITY)
