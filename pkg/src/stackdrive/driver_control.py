"""Driver-side control: disposition limits, PD controllers, lane-change references.

A driver's disposition is a single aggressiveness/inattentiveness index q in
[0, 1]. Every limit the controllers respect is derived from it through a
configurable linear map.
"""

import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, Optional

from .errors import LowSpeedError
from .vehicle_dynamics import (
    GRAVITY,
    RAD_TO_DEG,
    V_MIN_FLOOR,
    ControlInput,
    VehicleParams,
    VehicleState,
    pose_derivatives,
)

# Peak |f''| of the quintic 10t^3 - 15t^4 + 6t^5 on [0, 1].
QUINTIC_PEAK_ACCEL = 10.0 / math.sqrt(3.0)


class VisibilityTrend(Enum):
    """Direction of alpha(q)."""

    DECREASING = "decreasing"  # aggressive drivers tailgate
    INCREASING = "increasing"  # aggressive drivers demand more room


@dataclass(frozen=True)
class DispositionMap:
    """Coefficients of the q -> limit maps."""

    accel_base: float = 2.0  # g_l(0), m/s^2
    accel_slope: float = 4.0
    lateral_base: float = 0.2  # a_yl(0), g
    lateral_slope: float = 0.3
    visibility_slope: float = 0.5
    visibility_trend: VisibilityTrend = VisibilityTrend.DECREASING
    prediction_base: float = 3.0  # T(0), s
    prediction_slope: float = 2.5

    def validate(self) -> None:
        if self.accel_base <= 0 or self.accel_slope < 0:
            raise ValueError("disposition accel map must be positive and nondecreasing")
        if self.lateral_base <= 0 or self.lateral_slope < 0:
            raise ValueError(
                "disposition lateral map must be positive and nondecreasing"
            )
        if not 0 <= self.visibility_slope < 1:
            raise ValueError("disposition.visibility_slope must lie in [0, 1)")
        if self.prediction_slope <= 0:
            raise ValueError("disposition.prediction_slope must be positive")
        if self.prediction_base - self.prediction_slope <= 0:
            raise ValueError("prediction time must stay positive at q = 1")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["visibility_trend"] = self.visibility_trend.value
        return data


@dataclass(frozen=True)
class DriverDisposition:
    """Aggressiveness index q and every limit derived from it."""

    q: float
    mapping: DispositionMap = field(default_factory=DispositionMap)

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"aggressiveness index must lie in [0, 1], got {self.q}")

    @property
    def accel_limit(self) -> float:
        """g_l(q), m/s^2."""
        return self.mapping.accel_base + self.mapping.accel_slope * self.q

    @property
    def lateral_accel_limit(self) -> float:
        """a_yl(q), m/s^2."""
        m = self.mapping
        return (m.lateral_base + m.lateral_slope * self.q) * GRAVITY

    @property
    def visibility_scale(self) -> float:
        """alpha(q)."""
        s = self.mapping.visibility_slope
        if self.mapping.visibility_trend is VisibilityTrend.DECREASING:
            return 1.0 - s * self.q
        return 1.0 - s + s * self.q

    @property
    def prediction_time(self) -> float:
        """T(q), s; strictly decreasing in q."""
        return self.mapping.prediction_base - self.mapping.prediction_slope * self.q


@dataclass(frozen=True)
class ControlGains:
    """PD gains and the headway time gap.

    The lateral gains act on lateral acceleration (1/s^2 and 1/s) and are
    turned into a steering angle through the lateral acceleration gain.
    """

    k_pg: float = 0.6
    k_dg: float = 0.3
    k_pl: float = 1.0
    k_dl: float = 2.4
    headway_time: float = 1.5  # tau_h, s
    lead_weight: float = 0.5  # speed-loop weight w with a lead in view

    def validate(self) -> None:
        for name in ("k_pg", "k_dg", "k_pl", "k_dl", "headway_time"):
            if getattr(self, name) <= 0:
                raise ValueError(f"gains.{name} must be positive")
        if not 0.0 <= self.lead_weight <= 1.0:
            raise ValueError("gains.lead_weight must lie in [0, 1]")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def longitudinal_command(
    speed_error: float,
    headway_error: Optional[float],
    speed_error_rate: float,
    headway_error_rate: float,
    gains: ControlGains,
    disposition: DriverDisposition,
    params: VehicleParams,
    weight: float = 1.0,
) -> float:
    """Blended speed/headway PD acceleration, clamped to the driver's limits.

    Args:
        speed_error: Reference speed minus speed (m/s)
        headway_error: Gap minus reference gap (m), or None without a lead
        speed_error_rate: d/dt of the speed error
        headway_error_rate: d/dt of the headway error
        gains: Controller gains
        disposition: Driver disposition
        params: Vehicle parameters
        weight: Speed-loop weight w; ignored (taken as 1) without a lead

    Returns:
        Acceleration in [-g_pl, min(g_l(q), g_pl)]
    """
    pd_speed = gains.k_pg * speed_error + gains.k_dg * speed_error_rate
    if headway_error is None:
        raw = pd_speed
    else:
        pd_headway = gains.k_pg * headway_error + gains.k_dg * headway_error_rate
        raw = weight * pd_speed + (1.0 - weight) * pd_headway
    upper = min(disposition.accel_limit, params.accel_limit)
    return max(-params.accel_limit, min(upper, raw))


def lateral_accel_gain(v: float, params: VehicleParams) -> float:
    """Steady-state lateral acceleration per radian of steer (m/s^2/rad)."""
    k_rad = params.understeer_gradient / RAD_TO_DEG
    return v * v / (params.wheelbase + k_rad * v * v / GRAVITY)


def steer_limit_from_lateral_accel(
    a_yl: float, v: float, wheelbase: float, understeer: float
) -> float:
    """Steering angle that produces lateral acceleration a_yl in steady state.

    Args:
        a_yl: Lateral acceleration limit, in g
        v: Speed (m/s)
        wheelbase: L (m)
        understeer: K_us (deg/g)

    Returns:
        delta_lat in degrees
    """
    if v <= 0:
        raise ValueError(f"speed must be positive, got {v}")
    return a_yl * (RAD_TO_DEG * wheelbase * GRAVITY + understeer * v * v) / (v * v)


def steering_command(
    lateral_error: float,
    lateral_error_rate: float,
    gains: ControlGains,
    disposition: DriverDisposition,
    state: VehicleState,
    params: VehicleParams,
    feedforward: float = 0.0,
) -> float:
    """Lateral PD steering, clamped to the disposition and physical limits.

    Errors are measured toward the vehicle's left. ``feedforward`` is the
    reference lateral acceleration (m/s^2) of a planned manoeuvre.
    """
    v = state.v_long
    if v <= V_MIN_FLOOR:
        raise LowSpeedError(f"steering undefined at v_long={v:.3f} m/s")
    demand = feedforward + gains.k_pl * lateral_error + gains.k_dl * lateral_error_rate
    raw = demand / lateral_accel_gain(v, params)

    limit_deg = steer_limit_from_lateral_accel(
        disposition.lateral_accel_limit / GRAVITY,
        v,
        params.wheelbase,
        params.understeer_gradient,
    )
    bound = min(limit_deg / RAD_TO_DEG, params.steer_limit)
    return max(-bound, min(bound, raw))


def lane_center(lane: int, lane_width: float) -> float:
    """Global x of a lane centre; lane 1 sits at x = 0."""
    return (lane - 1) * lane_width


@dataclass(frozen=True)
class LateralReference:
    """Quintic lateral position profile between two lane centres."""

    start_time: float
    duration: float
    start_x: float
    end_x: float

    def _tau(self, t: float) -> float:
        if self.duration <= 0:
            return 1.0
        return min(1.0, max(0.0, (t - self.start_time) / self.duration))

    def position(self, t: float) -> float:
        s = self._tau(t)
        return self.start_x + (self.end_x - self.start_x) * (
            10 * s**3 - 15 * s**4 + 6 * s**5
        )

    def velocity(self, t: float) -> float:
        if self.duration <= 0:
            return 0.0
        s = self._tau(t)
        shape = 30 * s**2 - 60 * s**3 + 30 * s**4
        return (self.end_x - self.start_x) * shape / self.duration

    def acceleration(self, t: float) -> float:
        if self.duration <= 0:
            return 0.0
        s = self._tau(t)
        shape = 60 * s - 180 * s**2 + 120 * s**3
        return (self.end_x - self.start_x) * shape / self.duration**2

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration

    def finished(self, t: float) -> bool:
        return t >= self.end_time


def plan_lane_change(
    source_lane: int,
    target_lane: int,
    speed: float,
    disposition: DriverDisposition,
    lane_width: float = 3.3,
    start_time: float = 0.0,
) -> LateralReference:
    """Shortest quintic lane change whose peak lateral acceleration is a_yl(q)."""
    if speed <= 0:
        raise ValueError(f"speed must be positive, got {speed}")
    if abs(target_lane - source_lane) > 1:
        raise ValueError("lane changes are planned between adjacent lanes only")
    start_x = lane_center(source_lane, lane_width)
    end_x = lane_center(target_lane, lane_width)
    offset = abs(end_x - start_x)
    if offset == 0:
        return LateralReference(start_time, 0.0, start_x, end_x)
    duration = math.sqrt(QUINTIC_PEAK_ACCEL * offset / disposition.lateral_accel_limit)
    return LateralReference(start_time, duration, start_x, end_x)


@dataclass
class Lead:
    """Vehicle followed in the current lane."""

    gap: float  # bumper-to-bumper, m
    speed: float  # longitudinal speed, m/s


class Driver:
    """Per-vehicle controller state: derivative memory and the active manoeuvre."""

    def __init__(
        self,
        disposition: DriverDisposition,
        gains: ControlGains,
        params: VehicleParams,
        desired_speed: float,
        lane: int,
        lane_width: float = 3.3,
    ):
        """Initialize a driver.

        Args:
            disposition: Driver disposition
            gains: Controller gains
            params: Vehicle parameters
            desired_speed: Speed tracked without a lead (m/s)
            lane: Lane the vehicle starts in
            lane_width: Lane width (m)
        """
        self.disposition = disposition
        self.gains = gains
        self.params = params
        self.desired_speed = desired_speed
        self.lane_width = lane_width
        self.target_lane = lane
        center = lane_center(lane, lane_width)
        self.reference = LateralReference(0.0, 0.0, center, center)
        self.previous_accel = 0.0

    @property
    def changing_lanes(self) -> bool:
        return self.reference.duration > 0

    def in_manoeuvre(self, t: float) -> bool:
        return self.changing_lanes and not self.reference.finished(t)

    def begin_lane_change(
        self, target_lane: int, speed: float, t: float
    ) -> LateralReference:
        """Commit to a lane change starting at time t."""
        self.reference = plan_lane_change(
            self.target_lane,
            target_lane,
            max(speed, V_MIN_FLOOR),
            self.disposition,
            self.lane_width,
            start_time=t,
        )
        self.target_lane = target_lane
        return self.reference

    def control(
        self, state: VehicleState, t: float, lead: Optional[Lead]
    ) -> ControlInput:
        """Compute the input for the next step."""
        accel_rate = -self.previous_accel
        speed_error = self.desired_speed - state.v_long
        headway_error = None
        headway_rate = 0.0
        weight = 1.0
        if lead is not None:
            reference_gap = self.gains.headway_time * state.v_long
            # Headway loop only acts when closer than the reference gap.
            if lead.gap < reference_gap:
                headway_error = lead.gap - reference_gap
                headway_rate = (
                    lead.speed
                    - state.v_long
                    - self.gains.headway_time * self.previous_accel
                )
            else:
                headway_error = 0.0
            weight = self.gains.lead_weight
        accel = longitudinal_command(
            speed_error,
            headway_error,
            accel_rate,
            headway_rate,
            self.gains,
            self.disposition,
            self.params,
            weight,
        )
        self.previous_accel = accel

        steer = 0.0
        if state.v_long > V_MIN_FLOOR:
            dx, _, _ = pose_derivatives(state)
            # Road-left is -x for traffic travelling along +y.
            lateral_error = state.x - self.reference.position(t)
            lateral_rate = dx - self.reference.velocity(t)
            feedforward = -self.reference.acceleration(t)
            steer = steering_command(
                lateral_error,
                lateral_rate,
                self.gains,
                self.disposition,
                state,
                self.params,
                feedforward,
            )
        return ControlInput(accel=accel, steer=steer)
