"""Simulation loop: perceive, decide, control, integrate, score.

Decision vehicles replay their lane-choice game every decision epoch on a
frozen snapshot of the world; props follow straight paths at set speeds.
After every step each close pair of vehicles is scored with the collision
possibility index, and safety events are derived from those scores.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .collision import OrientedRect, collision_index, overlaps
from .config import ScenarioConfig, VehicleKind, VehicleSpec
from .driver_control import Driver, DriverDisposition, Lead, lane_center
from .errors import NumericalAbort
from .game import Strategy, build_payoff_tensor, solve_stackelberg, target_lane
from .perception import (
    TrackedVehicle,
    classify_neighbors,
    lane_of,
    noise_stream,
    perceive_with_noise,
)
from .vehicle_dynamics import VehicleParams, VehicleState, step

logger = logging.getLogger(__name__)

HEADING = math.pi / 2  # traffic travels along +y
METRES_PER_MILE = 1609.34

Pair = Tuple[int, int]


class EventKind(Enum):
    CRASH = "crash"
    NEAR_CRASH = "near_crash"


@dataclass(frozen=True)
class SafetyEvent:
    """One excursion of a pair's collision index above the near-crash threshold."""

    kind: EventKind
    time: float
    pair: Pair
    peak: float


@dataclass(frozen=True)
class VehicleRecord:
    vehicle_id: int
    kind: VehicleKind
    state: VehicleState
    lane: int
    strategy: Optional[Strategy]
    max_index: float


@dataclass(frozen=True)
class LaneChange:
    """A vehicle's centre crossing a lane boundary."""

    time: float
    vehicle_id: int
    from_lane: int
    to_lane: int


@dataclass(frozen=True)
class Decision:
    """A committed lane change."""

    time: float
    vehicle_id: int
    strategy: Strategy
    from_lane: int
    to_lane: int


@dataclass
class SimTrace:
    """Per-step record of a scenario run."""

    dt: float
    times: List[float] = field(default_factory=list)
    frames: List[List[VehicleRecord]] = field(default_factory=list)
    pair_indices: List[Dict[Pair, float]] = field(default_factory=list)
    decisions: List[Decision] = field(default_factory=list)
    lane_changes: List[LaneChange] = field(default_factory=list)

    @property
    def peak_index(self) -> float:
        peaks = (max(p.values(), default=0.0) for p in self.pair_indices)
        return max(peaks, default=0.0)

    def peak_between(self, pair: Pair) -> float:
        key = tuple(sorted(pair))
        return max((p.get(key, 0.0) for p in self.pair_indices), default=0.0)

    def first_lane_change(
        self, vehicle_id: Optional[int] = None
    ) -> Optional[LaneChange]:
        for change in self.lane_changes:
            if vehicle_id is None or change.vehicle_id == vehicle_id:
                return change
        return None

    def positions(self, vehicle_id: int) -> List[float]:
        """Longitudinal position of one vehicle at every step."""
        return [
            r.state.y
            for frame in self.frames
            for r in frame
            if r.vehicle_id == vehicle_id
        ]


class EventDetector:
    """Streaming hysteresis detector; one event per excursion per pair."""

    def __init__(self, near_threshold: float = 0.5, release_threshold: float = 0.4):
        self.near_threshold = near_threshold
        self.release_threshold = release_threshold
        self._open: Dict[Pair, Tuple[float, float]] = {}
        self.events: List[SafetyEvent] = []

    def _close(self, pair: Pair) -> None:
        start, peak = self._open.pop(pair)
        kind = EventKind.CRASH if peak >= 1.0 else EventKind.NEAR_CRASH
        self.events.append(SafetyEvent(kind, start, pair, peak))
        logger.info("%s between %s at t=%.2f, peak %.3f", kind.value, pair, start, peak)

    def update(self, time: float, scores: Dict[Pair, float]) -> None:
        for pair in sorted(self._open):
            value = scores.get(pair, 0.0)
            if value < self.release_threshold:
                self._close(pair)
            else:
                start, peak = self._open[pair]
                self._open[pair] = (start, max(peak, value))
        for pair in sorted(scores):
            if pair not in self._open and scores[pair] > self.near_threshold:
                self._open[pair] = (time, scores[pair])

    def finish(self) -> List[SafetyEvent]:
        for pair in sorted(self._open):
            self._close(pair)
        return sorted(self.events, key=lambda e: (e.time, e.pair))


def detect_events(
    trace: SimTrace, near_threshold: float = 0.5, release_threshold: float = 0.4
) -> List[SafetyEvent]:
    """Crash and near-crash events of a finished trace.

    An excursion opens when a pair's index rises above near_threshold and
    closes once it falls below release_threshold; it is a crash if its peak
    reached 1.
    """
    detector = EventDetector(near_threshold, release_threshold)
    for time, scores in zip(trace.times, trace.pair_indices):
        detector.update(time, scores)
    return detector.finish()


def cumulative_collision_possibility(trace: SimTrace) -> float:
    """Sum over steps of the largest pair index, times dt."""
    peaks = (max(scores.values(), default=0.0) for scores in trace.pair_indices)
    return math.fsum(peaks) * trace.dt


@dataclass
class Agent:
    """A vehicle in the world."""

    vehicle_id: int
    kind: VehicleKind
    state: VehicleState
    q: float
    driver: Optional[Driver] = None
    rng: Optional[np.random.Generator] = None
    strategy: Optional[Strategy] = None
    odometer: float = 0.0

    @property
    def is_decision(self) -> bool:
        return self.kind is VehicleKind.DECISION


class World:
    """Vehicles on a straight three-lane road and the fixed-step loop over them."""

    def __init__(self, config: ScenarioConfig, seed: Optional[int] = None):
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.params = config.vehicle
        self.agents: List[Agent] = []
        self.time = 0.0
        self.steps = 0
        self.epoch_steps = max(1, int(round(config.decision_epoch / config.dt)))
        self._next_id = 0

    def add_vehicle(
        self,
        x: float,
        y: float,
        speed: float,
        q: float = 0.5,
        kind: VehicleKind = VehicleKind.DECISION,
        desired_speed: Optional[float] = None,
    ) -> Agent:
        """Place a vehicle heading downstream; speeds in m/s."""
        vehicle_id = self._next_id
        self._next_id += 1
        state = VehicleState(x=x, y=y, heading=HEADING, v_long=speed)
        agent = Agent(vehicle_id, kind, state, q)
        if kind is VehicleKind.DECISION:
            cfg = self.config
            agent.driver = Driver(
                DriverDisposition(q, cfg.disposition),
                cfg.gains,
                self.params,
                desired_speed if desired_speed is not None else speed,
                lane_of(x, cfg.lane_width),
                cfg.lane_width,
            )
            agent.rng = noise_stream(self.seed, vehicle_id)
            agent.strategy = Strategy.S
        self.agents.append(agent)
        return agent

    def add_spec(self, spec: VehicleSpec) -> Agent:
        desired = spec.desired_speed if spec.desired_speed is not None else spec.v0
        return self.add_vehicle(
            spec.x0,
            spec.y0,
            self.config.speed(spec.v0),
            spec.q,
            spec.kind,
            self.config.speed(desired),
        )

    def remove(self, vehicle_ids: Iterable[int]) -> None:
        gone = set(vehicle_ids)
        self.agents = [a for a in self.agents if a.vehicle_id not in gone]

    def tracked(self, agent: Agent) -> TrackedVehicle:
        s = agent.state
        return TrackedVehicle(
            agent.vehicle_id,
            s.x,
            s.y,
            s.heading,
            s.v_long,
            self.params.length,
            self.params.width,
        )

    def rect(self, agent: Agent) -> OrientedRect:
        s = agent.state
        p = self.params
        return OrientedRect((s.x, s.y), s.heading, p.length, p.width)

    def decide(self) -> List[Decision]:
        """Every free decision vehicle plays its game on the current snapshot."""
        cfg = self.config
        snapshot = [self.tracked(a) for a in self.agents]
        plans: List[Tuple[Agent, Strategy, int]] = []
        for agent, me in zip(self.agents, snapshot):
            if not agent.is_decision or agent.driver.in_manoeuvre(self.time):
                continue
            driver = agent.driver
            view = classify_neighbors(
                me,
                snapshot,
                cfg.lane_width,
                cfg.perception.visibility,
                agent.q,
                cfg.perception.magnification,
            )
            view = perceive_with_noise(
                view,
                agent.q,
                agent.rng,
                cfg.perception.sigma_distance,
                cfg.perception.sigma_velocity,
                cfg.perception.kappa,
            )
            view = replace(view, lane=driver.target_lane)
            tensor = build_payoff_tensor(
                view, driver.disposition, cfg.game, self.params.diagonal
            )
            solution = solve_stackelberg(tensor, cfg.game.tie_tolerance)
            plans.append((agent, solution.leader, driver.target_lane))

        decisions = []
        for agent, strategy, lane in plans:
            agent.strategy = strategy
            if strategy is Strategy.S:
                continue
            to_lane = target_lane(lane, strategy)
            agent.driver.begin_lane_change(to_lane, agent.state.v_long, self.time)
            decision = Decision(self.time, agent.vehicle_id, strategy, lane, to_lane)
            decisions.append(decision)
            logger.info(
                "t=%.2f vehicle %d commits to lane %d",
                self.time,
                agent.vehicle_id,
                to_lane,
            )
        return decisions

    def _lead(self, agent: Agent) -> Optional[Lead]:
        current = lane_of(agent.state.x, self.config.lane_width)
        lanes = {agent.driver.target_lane, current}
        best: Optional[Agent] = None
        for other in self.agents:
            if other is agent:
                continue
            ahead = other.state.y - agent.state.y
            if ahead <= 0 or ahead > self.config.perception.visibility:
                continue
            if lane_of(other.state.x, self.config.lane_width) not in lanes:
                continue
            if best is None or other.state.y < best.state.y:
                best = other
        if best is None:
            return None
        gap = best.state.y - agent.state.y - self.params.length
        return Lead(gap=gap, speed=best.state.v_long)

    def _advance(self, agent: Agent) -> VehicleState:
        dt = self.config.dt
        if not agent.is_decision:
            s = agent.state
            return replace(s, y=s.y + s.v_long * dt)
        control = agent.driver.control(agent.state, self.time, self._lead(agent))
        try:
            return step(agent.state, self.params, control, dt)
        except NumericalAbort as e:
            raise NumericalAbort(str(e), time=self.time, vehicle_id=agent.vehicle_id)

    def score(self) -> Dict[Pair, float]:
        """Collision index of every pair within the broad-phase range."""
        reach = self.config.collision.broad_phase
        scores: Dict[Pair, float] = {}
        ordered = sorted(self.agents, key=lambda a: a.vehicle_id)
        rects = [self.rect(a) for a in ordered]
        for i, a in enumerate(ordered):
            for j in range(i + 1, len(ordered)):
                b = ordered[j]
                dy = abs(a.state.y - b.state.y)
                if dy > reach or abs(a.state.x - b.state.x) > reach:
                    continue
                score = collision_index(rects[i], rects[j], self.config.collision.scale)
                scores[(a.vehicle_id, b.vehicle_id)] = score.index
        return scores

    def tick(self) -> Tuple[List[Decision], Dict[Pair, float]]:
        """Advance one step: decide on epoch boundaries, then integrate and score."""
        decisions: List[Decision] = []
        if self.steps % self.epoch_steps == 0:
            decisions = self.decide()
        new_states = [self._advance(a) for a in self.agents]
        for agent, state in zip(self.agents, new_states):
            step_length = math.hypot(state.x - agent.state.x, state.y - agent.state.y)
            agent.odometer += step_length
            agent.state = state
        self.steps += 1
        self.time = self.steps * self.config.dt
        return decisions, self.score()


def build_world(config: ScenarioConfig, seed: Optional[int] = None) -> World:
    """World holding the configured vehicles plus the boundary props."""
    world = World(config, seed)
    for spec in config.vehicles:
        world.add_spec(spec)
    placed = [world.rect(a) for a in world.agents]
    for i, rect in enumerate(placed):
        for other in placed[i + 1 :]:
            if overlaps(rect, other):
                raise ValueError("initial vehicle placements overlap")
    decision = [v for v in config.vehicles if v.kind is VehicleKind.DECISION]
    if config.props.enabled and decision:
        anchor = decision[0].y0
        props = config.props
        speed = config.speed(props.speed)
        for lane in (1, 2, 3):
            ahead = props.lead_distance + (props.lane3_offset if lane == 3 else 0.0)
            world.add_vehicle(
                lane_center(lane, config.lane_width),
                anchor + ahead,
                speed,
                kind=VehicleKind.PROP,
            )
    return world


def run_scenario(config: ScenarioConfig, seed: Optional[int] = None) -> SimTrace:
    """Run one scenario for its configured duration.

    Args:
        config: Validated scenario
        seed: Overrides config.seed for the perception noise streams

    Returns:
        One record per step

    Raises:
        NumericalAbort: if the dynamics blow up
    """
    world = build_world(config, seed)
    trace = SimTrace(dt=config.dt)
    steps = int(round(config.duration / config.dt))
    lanes = {a.vehicle_id: lane_of(a.state.x, config.lane_width) for a in world.agents}
    logger.info("running %d vehicles for %.1f s", len(world.agents), config.duration)
    for _ in range(steps):
        decisions, scores = world.tick()
        trace.decisions.extend(decisions)
        maxima: Dict[int, float] = {}
        for (i, j), value in scores.items():
            maxima[i] = max(maxima.get(i, 0.0), value)
            maxima[j] = max(maxima.get(j, 0.0), value)
        frame = []
        for agent in world.agents:
            lane = lane_of(agent.state.x, config.lane_width)
            if lane != lanes[agent.vehicle_id]:
                trace.lane_changes.append(
                    LaneChange(
                        world.time, agent.vehicle_id, lanes[agent.vehicle_id], lane
                    )
                )
                lanes[agent.vehicle_id] = lane
            frame.append(
                VehicleRecord(
                    agent.vehicle_id,
                    agent.kind,
                    agent.state,
                    lane,
                    agent.strategy,
                    maxima.get(agent.vehicle_id, 0.0),
                )
            )
        trace.times.append(world.time)
        trace.frames.append(frame)
        trace.pair_indices.append(scores)
    logger.info(
        "finished: %d lane changes, peak collision index %.3f",
        len(trace.lane_changes),
        trace.peak_index,
    )
    return trace


@dataclass(frozen=True)
class SectionStats:
    """Aggregates of one density-maintained section run."""

    mix: str
    density: int
    duration: float
    seed: int
    crashes: int
    near_crashes: int
    vehicle_miles: float
    cumulative_possibility: float
    injected: int
    exited: int
    deferred: int

    def to_row(self) -> Dict[str, object]:
        return {
            "mix": self.mix,
            "density": self.density,
            "duration": self.duration,
            "seed": self.seed,
            "crashes": self.crashes,
            "near_crashes": self.near_crashes,
            "vehicle_miles": f"{self.vehicle_miles:.9f}",
            "cumulative_possibility": f"{self.cumulative_possibility:.9f}",
            "injected": self.injected,
            "exited": self.exited,
            "deferred": self.deferred,
        }


def population_q(mix: str, rng: np.random.Generator, config: ScenarioConfig) -> float:
    """Aggressiveness index of a new vehicle drawn from a named mix."""
    section = config.section
    if mix == "attentive":
        return section.attentive_q
    if mix == "inattentive75":
        return section.inattentive_q
    if mix == "aggr_aggr":
        return 1.0
    if mix == "aggr_timid":
        return 1.0 if rng.random() < 0.5 else 0.0
    if mix == "timid_timid":
        return 0.0
    return 0.5


class _Section:
    """Entry, exit and crash bookkeeping for a section run."""

    def __init__(self, world: World, mix: str, rng: np.random.Generator):
        self.world = world
        self.mix = mix
        self.rng = rng
        self.config = world.config
        self.pending = 0
        self.injected = 0
        self.exited = 0
        self.deferred = 0
        self.miles_retired = 0.0

    def _draw_speed(self) -> float:
        section = self.config.section
        if self.mix == "props":
            return self.config.speed(section.nominal_speed)
        low = section.nominal_speed - section.speed_spread
        high = section.nominal_speed + section.speed_spread
        return self.config.speed(float(self.rng.uniform(low, high)))

    def _spawn(self, lane: int, y: float) -> None:
        speed = self._draw_speed()
        kind = VehicleKind.PROP if self.mix == "props" else VehicleKind.DECISION
        q = population_q(self.mix, self.rng, self.config)
        x = lane_center(lane, self.config.lane_width)
        self.world.add_vehicle(x, y, speed, q, kind)
        self.injected += 1

    def _lane_clear(self, lane: int, y: float) -> bool:
        width = self.config.lane_width
        gap = self.config.section.min_entry_gap
        return all(
            abs(a.state.y - y) >= gap
            for a in self.world.agents
            if abs(a.state.x - lane_center(lane, width)) < width
        )

    def fill(self, density: int) -> None:
        """Initial placement spread along the section."""
        length = self.config.section.length
        attempts = 0
        placed = 0
        while placed < density and attempts < 1000 * density:
            attempts += 1
            lane = int(self.rng.integers(1, 4))
            y = float(self.rng.uniform(0.0, length))
            if self._lane_clear(lane, y):
                self._spawn(lane, y)
                placed += 1
        self.pending += density - placed

    def inject(self) -> None:
        while self.pending:
            order = [int(n) for n in self.rng.permutation([1, 2, 3])]
            lane = next((n for n in order if self._lane_clear(n, 0.0)), None)
            if lane is None:
                self.deferred += 1
                logger.info(
                    "injection deferred at t=%.2f, entry lanes blocked", self.world.time
                )
                return
            self._spawn(lane, 0.0)
            self.pending -= 1

    def retire(self, vehicle_ids: Iterable[int]) -> None:
        gone = set(vehicle_ids)
        for agent in self.world.agents:
            if agent.vehicle_id in gone:
                self.miles_retired += agent.odometer / METRES_PER_MILE
        self.world.remove(gone)
        self.pending += len(gone)

    def exits(self) -> None:
        length = self.config.section.length
        leaving = [a.vehicle_id for a in self.world.agents if a.state.y > length]
        if leaving:
            self.exited += len(leaving)
            self.retire(leaving)

    @property
    def vehicle_miles(self) -> float:
        live = sum(a.odometer for a in self.world.agents) / METRES_PER_MILE
        return self.miles_retired + live


def traffic_section_sim(
    config: ScenarioConfig,
    density: Optional[int] = None,
    duration: Optional[float] = None,
    mix: Optional[str] = None,
    seed: Optional[int] = None,
) -> SectionStats:
    """Simulate a section whose vehicle count is held at the given density.

    Vehicles leaving downstream and both members of a crashed pair are
    replaced at the upstream edge once the entry lane has room.

    Args:
        config: Scenario (its section block supplies defaults)
        density: Vehicles per section, at least 1
        duration: Simulated seconds
        mix: Population mix name
        seed: Run seed

    Returns:
        Event counts, exposure and cumulative collision possibility
    """
    density = config.section.density if density is None else density
    duration = config.section.duration if duration is None else duration
    mix = config.section.mix if mix is None else mix
    seed = config.seed if seed is None else seed
    if density < 1:
        raise ValueError(f"density must be at least 1, got {density}")

    world = World(config, seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EC]))
    section = _Section(world, mix, rng)
    section.fill(density)
    thresholds = config.events
    detector = EventDetector(thresholds.near_threshold, thresholds.release_threshold)
    possibility = 0.0

    steps = int(round(duration / config.dt))
    logger.info(
        "section run: density %d, mix %s, %.0f s, seed %d", density, mix, duration, seed
    )
    for _ in range(steps):
        section.inject()
        _, scores = world.tick()
        detector.update(world.time, scores)
        possibility += max(scores.values(), default=0.0) * config.dt
        crashed = sorted(
            {v for pair, value in scores.items() if value >= 1.0 for v in pair}
        )
        if crashed:
            logger.info("t=%.2f removing crashed vehicles %s", world.time, crashed)
            section.retire(crashed)
        section.exits()

    events = detector.finish()
    return SectionStats(
        mix=mix,
        density=density,
        duration=duration,
        seed=seed,
        crashes=sum(e.kind is EventKind.CRASH for e in events),
        near_crashes=sum(e.kind is EventKind.NEAR_CRASH for e in events),
        vehicle_miles=section.vehicle_miles,
        cumulative_possibility=possibility,
        injected=section.injected,
        exited=section.exited,
        deferred=section.deferred,
    )


def score_poses(
    frames: Sequence[Tuple[float, Sequence[Tuple[int, float, float, float]]]],
    params: VehicleParams,
    scale: float = 1.0,
    broad_phase: float = 20.0,
) -> SimTrace:
    """Collision indices of recorded poses, as a trace without vehicle records.

    Args:
        frames: Per step, the time and every vehicle's (id, x, y, heading)
        params: Body dimensions
        scale: Collision index exponent scale
        broad_phase: Pairs farther apart than this on either axis score 0
    """
    times = [t for t, _ in frames]
    dt = times[1] - times[0] if len(times) > 1 else 0.0
    trace = SimTrace(dt=dt)
    for t, poses in frames:
        ordered = sorted(poses)
        rects = [
            OrientedRect((x, y), heading, params.length, params.width)
            for _, x, y, heading in ordered
        ]
        scores: Dict[Pair, float] = {}
        for i, (a, xa, ya, _) in enumerate(ordered):
            for j in range(i + 1, len(ordered)):
                b, xb, yb, _ = ordered[j]
                if abs(ya - yb) > broad_phase or abs(xa - xb) > broad_phase:
                    continue
                scores[(a, b)] = collision_index(rects[i], rects[j], scale).index
        trace.times.append(t)
        trace.pair_indices.append(scores)
    return trace
