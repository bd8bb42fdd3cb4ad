"""Each driver's subjective view of the road.

Traffic travels along +y; lanes are numbered from the left, lane 1
centred on x = 0. Observed vehicles are placed in the lane containing
their recognition point, which moves from the nearest front corner of a
magnified body rectangle (cautious observer) to the body centre
(aggressive observer).
"""

from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, Iterator, Optional, Tuple

import numpy as np

from .collision import OrientedRect, Vector

LANES = (1, 2, 3)


@dataclass(frozen=True)
class TrackedVehicle:
    """What an observer can see of another vehicle at one instant."""

    vehicle_id: int
    x: float
    y: float
    heading: float
    speed: float
    length: float
    width: float

    @property
    def rect(self) -> OrientedRect:
        return OrientedRect((self.x, self.y), self.heading, self.length, self.width)


@dataclass(frozen=True)
class NeighborEntry:
    """One perceived neighbour.

    ``distance`` is the signed longitudinal offset from the observer's
    centre to the neighbour's recognition point (positive ahead).
    ``closing_speed`` is positive when the gap is shrinking.
    """

    vehicle_id: int
    distance: float
    closing_speed: float

    @property
    def gap(self) -> float:
        return abs(self.distance)


@dataclass(frozen=True)
class NeighborView:
    """Nearest leader and follower per lane within the visibility distance."""

    visibility: float
    lane: int
    leaders: Dict[int, NeighborEntry] = field(default_factory=dict)
    followers: Dict[int, NeighborEntry] = field(default_factory=dict)
    # Second-nearest follower per lane, used for role assignment.
    second_followers: Dict[int, NeighborEntry] = field(default_factory=dict)

    def leader(self, lane: int) -> Optional[NeighborEntry]:
        return self.leaders.get(lane)

    def follower(self, lane: int) -> Optional[NeighborEntry]:
        return self.followers.get(lane)

    def entries(self) -> Iterator[NeighborEntry]:
        for table in (self.leaders, self.followers, self.second_followers):
            yield from table.values()


def lane_of(x: float, lane_width: float, lane_count: int = 3) -> int:
    """Lane whose strip contains lateral position x, clipped to the road."""
    lane = int(np.floor(x / lane_width + 0.5)) + 1
    return max(1, min(lane_count, lane))


def magnification_ratio(q: float, coefficient: float = 0.2) -> float:
    """Scale applied to an observed body; 1 for the most aggressive observer."""
    return 1.0 + coefficient * (1.0 - q)


def recognition_point(
    rect: OrientedRect,
    q: float,
    observer: Optional[Vector] = None,
    magnification: float = 0.0,
) -> Tuple[float, float]:
    """Point of an observed vehicle that a driver with index q reacts to.

    Args:
        rect: Observed vehicle's body rectangle
        q: Observer aggressiveness in [0, 1]
        observer: Observer position; picks which front corner is nearest.
            Without it the front-left corner is used.
        magnification: Coefficient of the rectangle magnification law;
            0 keeps the true body outline

    Returns:
        (x, y) interpolated between the nearest front corner (q = 0) and
        the rectangle centre (q = 1)
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"aggressiveness index must lie in [0, 1], got {q}")
    outline = rect
    if magnification:
        outline = rect.scaled(magnification_ratio(q, magnification))
    corners = outline.corners
    front = corners[[0, 3]]
    if observer is None:
        corner = front[0]
    else:
        distances = np.linalg.norm(front - np.asarray(observer, dtype=float), axis=1)
        corner = front[int(np.argmin(distances))]
    center = np.asarray(rect.center, dtype=float)
    point = (1.0 - q) * corner + q * center
    return float(point[0]), float(point[1])


def classify_neighbors(
    ego: TrackedVehicle,
    others: Iterable[TrackedVehicle],
    lane_width: float,
    visibility: float,
    q: float = 1.0,
    magnification: float = 0.0,
) -> NeighborView:
    """Nearest leader and follower in each lane, as seen by ego.

    Args:
        ego: Observing vehicle; skipped if it also appears in others
        others: Every other vehicle on the road
        lane_width: Lane width (m)
        visibility: d_v (m); farther vehicles are not seen
        q: Observer aggressiveness, sets the recognition point
        magnification: Rectangle magnification coefficient

    Returns:
        The observer's NeighborView
    """
    ahead: Dict[int, list] = {lane: [] for lane in LANES}
    behind: Dict[int, list] = {lane: [] for lane in LANES}
    observer = (ego.x, ego.y)
    for other in others:
        if other.vehicle_id == ego.vehicle_id:
            continue
        px, py = recognition_point(other.rect, q, observer, magnification)
        distance = py - ego.y
        if abs(distance) > visibility:
            continue
        lane = lane_of(px, lane_width)
        if distance >= 0:
            entry = NeighborEntry(other.vehicle_id, distance, ego.speed - other.speed)
            ahead[lane].append(entry)
        else:
            entry = NeighborEntry(other.vehicle_id, distance, other.speed - ego.speed)
            behind[lane].append(entry)

    leaders, followers, second = {}, {}, {}
    for lane in LANES:
        if ahead[lane]:
            leaders[lane] = min(ahead[lane], key=lambda e: (e.distance, e.vehicle_id))
        ordered = sorted(behind[lane], key=lambda e: (-e.distance, e.vehicle_id))
        if ordered:
            followers[lane] = ordered[0]
        if len(ordered) > 1:
            second[lane] = ordered[1]
    return NeighborView(
        visibility=visibility,
        lane=lane_of(ego.x, lane_width),
        leaders=leaders,
        followers=followers,
        second_followers=second,
    )


def noise_stream(seed: int, vehicle_id: int) -> np.random.Generator:
    """Independent, reproducible perception noise generator for one vehicle."""
    return np.random.default_rng(np.random.SeedSequence([seed, vehicle_id]))


def _perturb(
    entry: NeighborEntry,
    scale: float,
    sigma_distance: float,
    sigma_velocity: float,
    visibility: float,
    rng: np.random.Generator,
) -> NeighborEntry:
    ratio = scale * entry.gap / visibility
    distance = entry.distance + sigma_distance * ratio * rng.standard_normal()
    closing = entry.closing_speed + sigma_velocity * ratio * rng.standard_normal()
    # Noise never moves a vehicle across the observer. A vehicle seen near the
    # edge of sight may be perceived beyond it.
    if entry.distance >= 0:
        distance = max(distance, 0.0)
    else:
        distance = min(distance, -1e-9)
    return replace(entry, distance=distance, closing_speed=closing)


def perceive_with_noise(
    view: NeighborView,
    q: float,
    rng: np.random.Generator,
    sigma_distance: float = 0.5,
    sigma_velocity: float = 0.1,
    kappa: float = 1.0,
) -> NeighborView:
    """Perturb every entry with zero-mean Gaussian noise growing with q and range.

    The standard deviation of a distance is sigma_distance * (1 + kappa q) * |d| / d_v;
    closing speeds use sigma_velocity the same way. Draws happen in a fixed
    lane order so a seeded generator gives reproducible views.
    """
    scale = 1.0 + kappa * q

    def noisy(table: Dict[int, NeighborEntry]) -> Dict[int, NeighborEntry]:
        return {
            lane: _perturb(
                table[lane], scale, sigma_distance, sigma_velocity, view.visibility, rng
            )
            for lane in LANES
            if lane in table
        }

    return replace(
        view,
        leaders=noisy(view.leaders),
        followers=noisy(view.followers),
        second_followers=noisy(view.second_followers),
    )
